/**
 * Parser for SAIW weight containers.
 *
 * Layout (little-endian): 4-byte magic "SAIW", u32 version, u64 header
 * length, a UTF-8 JSON header (tensor table + metadata, space-padded so
 * the payload starts on a 64-byte file offset), then raw tensor bytes,
 * each tensor 64-byte aligned relative to the payload start.
 *
 * All tensors are decoded to float64 regardless of payload dtype, so a
 * downstream comparison failure indicates logic, not precision.
 */

export class SaiwFormatError extends Error {}
export class SaiwCorruptionError extends SaiwFormatError {}
export class SaiwValidationError extends Error {
  constructor(message: string, public readonly tensorNames: string[] = []) {
    super(message);
  }
}

export interface TensorSpec {
  dtype: "f32" | "f64";
  shape: number[];
  byte_offset: number;
  byte_len: number;
}

export interface ParsedTensor {
  dtype: "f32" | "f64";
  shape: number[];
  values: Float64Array;
}

export interface ContainerConfig {
  grid: [number, number];
  dim: number;
  heads: number;
  layers: number;
  d_head: number;
  filter_size: number;
  padding: "zero" | "circular";
  scale_mode: "paper_exact" | "inv_sqrt_d";
  alpha: number;
  beta: number;
  gamma: number;
  pos_std: number;
  seed: number;
  offset_strategy: string;
}

export interface ContainerMetadata {
  config: ContainerConfig;
  seed: number;
  method: string;
  targets: Record<string, [number, number] | null>;
  pos_std: number;
  pos_seed: number;
  library_version: string;
  mimetic_mu: number | null;
}

export interface ParsedContainer {
  metadata: ContainerMetadata;
  tensors: Map<string, ParsedTensor>;
}

const MAGIC = [0x53, 0x41, 0x49, 0x57]; // "SAIW"
const FORMAT_VERSION = 1;
const ALIGNMENT = 64;
const PREFIX_LEN = 16;
const DTYPE_SIZE = { f32: 4, f64: 8 } as const;

function decodeTensor(payload: DataView, spec: TensorSpec): Float64Array {
  const count = spec.byte_len / DTYPE_SIZE[spec.dtype];
  const out = new Float64Array(count);
  if (spec.dtype === "f32") {
    for (let i = 0; i < count; i++) {
      out[i] = payload.getFloat32(spec.byte_offset + 4 * i, true);
    }
  } else {
    for (let i = 0; i < count; i++) {
      out[i] = payload.getFloat64(spec.byte_offset + 8 * i, true);
    }
  }
  return out;
}

export function frobeniusNorm(values: Float64Array): number {
  let sum = 0;
  for (let i = 0; i < values.length; i++) sum += values[i]! * values[i]!;
  return Math.sqrt(sum);
}

export function tensorName(layer: number, head: number, which: "q" | "k"): string {
  return `layer${layer}.head${head}.${which}`;
}

/** Parse and fully validate a SAIW byte buffer. */
export function parseContainer(bytes: Uint8Array): ParsedContainer {
  if (bytes.length < PREFIX_LEN) {
    throw new SaiwFormatError(`file of ${bytes.length} bytes is shorter than the fixed header`);
  }
  for (let i = 0; i < 4; i++) {
    if (bytes[i] !== MAGIC[i]) {
      throw new SaiwFormatError(`bad magic [${bytes.slice(0, 4).join(",")}], expected "SAIW"`);
    }
  }
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  const version = view.getUint32(4, true);
  if (version !== FORMAT_VERSION) {
    throw new SaiwFormatError(`unsupported format version ${version}`);
  }
  const headerLen = Number(view.getBigUint64(8, true));
  if (PREFIX_LEN + headerLen > bytes.length) {
    throw new SaiwCorruptionError(`header length ${headerLen} exceeds file size ${bytes.length}`);
  }

  let header: { tensors: Record<string, TensorSpec>; metadata: ContainerMetadata };
  try {
    const text = new TextDecoder("utf-8", { fatal: true }).decode(
      bytes.subarray(PREFIX_LEN, PREFIX_LEN + headerLen),
    );
    header = JSON.parse(text);
  } catch (err) {
    throw new SaiwFormatError(`header is not valid JSON: ${err}`);
  }
  if (typeof header !== "object" || header === null || !header.tensors || !header.metadata) {
    throw new SaiwFormatError("header must carry 'tensors' and 'metadata'");
  }

  const payloadStart = PREFIX_LEN + headerLen;
  const payloadLen = bytes.length - payloadStart;
  const entries = Object.entries(header.tensors).sort(
    (a, b) => a[1].byte_offset - b[1].byte_offset,
  );
  let prevEnd = 0;
  let maxEnd = 0;
  for (const [name, spec] of entries) {
    if (spec.dtype !== "f32" && spec.dtype !== "f64") {
      throw new SaiwFormatError(`tensor ${name} has unknown dtype ${spec.dtype}`);
    }
    const expected = spec.shape.reduce((a, b) => a * b, 1) * DTYPE_SIZE[spec.dtype];
    if (spec.byte_len !== expected) {
      throw new SaiwFormatError(`tensor ${name} byte_len ${spec.byte_len} != shape product ${expected}`);
    }
    if (spec.byte_offset % ALIGNMENT !== 0) {
      throw new SaiwFormatError(`tensor ${name} offset ${spec.byte_offset} not ${ALIGNMENT}-aligned`);
    }
    if (spec.byte_offset < prevEnd) {
      throw new SaiwFormatError(`tensor ${name} overlaps the previous tensor`);
    }
    if (spec.byte_offset + spec.byte_len > payloadLen) {
      throw new SaiwCorruptionError(
        `tensor ${name} extends past the payload end (${spec.byte_offset + spec.byte_len} > ${payloadLen})`,
      );
    }
    prevEnd = spec.byte_offset + spec.byte_len;
    maxEnd = Math.max(maxEnd, prevEnd);
  }
  if (payloadLen !== maxEnd) {
    throw new SaiwCorruptionError("payload has trailing bytes beyond the last tensor");
  }

  const meta = header.metadata;
  const config = meta.config;
  const expectedNames = new Set<string>(["pos_embed"]);
  for (let layer = 0; layer < config.layers; layer++) {
    for (let head = 0; head < config.heads; head++) {
      expectedNames.add(tensorName(layer, head, "q"));
      expectedNames.add(tensorName(layer, head, "k"));
    }
  }
  const missing = [...expectedNames].filter((n) => !(n in header.tensors)).sort();
  if (missing.length > 0) {
    throw new SaiwValidationError(`tensors missing for the declared config: ${missing}`, missing);
  }

  const payload = new DataView(bytes.buffer, bytes.byteOffset + payloadStart, payloadLen);
  const tensors = new Map<string, ParsedTensor>();
  for (const [name, spec] of entries) {
    tensors.set(name, { dtype: spec.dtype, shape: spec.shape, values: decodeTensor(payload, spec) });
  }

  if (meta.method === "impulse") {
    const tol = header.tensors["pos_embed"]!.dtype === "f32" ? 1e-4 : 1e-6;
    const bad: string[] = [];
    for (let layer = 0; layer < config.layers; layer++) {
      for (let head = 0; head < config.heads; head++) {
        for (const which of ["q", "k"] as const) {
          const name = tensorName(layer, head, which);
          if (Math.abs(frobeniusNorm(tensors.get(name)!.values) - config.gamma) > tol) {
            bad.push(name);
          }
        }
      }
    }
    if (bad.length > 0) {
      throw new SaiwValidationError(
        `Frobenius norms deviate from gamma=${config.gamma} beyond ${tol}: ${bad}`,
        bad,
      );
    }
  }

  return { metadata: meta, tensors };
}

export async function loadContainer(path: string): Promise<ParsedContainer> {
  const { readFile } = await import("node:fs/promises");
  return parseContainer(new Uint8Array(await readFile(path)));
}
