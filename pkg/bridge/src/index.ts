export {
  frobeniusNorm,
  loadContainer,
  parseContainer,
  SaiwCorruptionError,
  SaiwFormatError,
  SaiwValidationError,
  tensorName,
} from "./saiw.js";
export type { ContainerConfig, ContainerMetadata, ParsedContainer, ParsedTensor } from "./saiw.js";
export {
  attentionMap,
  detectOffset,
  layerNormRows,
  matmul,
  matrix,
  meanRowEntropy,
  peakRecovery,
  rowArgmax,
  softmaxRows,
  transpose,
} from "./attention.js";
export type { Matrix, Offset } from "./attention.js";
export {
  ENTROPY_TOLERANCE,
  PEAK_TOLERANCE,
  parseFidelityCsv,
  recomputeAndCompare,
} from "./compare.js";
export type { FidelityRow, HeadParity, ParityReport } from "./compare.js";
