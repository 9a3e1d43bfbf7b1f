/**
 * Parity check: recompute every head's attention map from the raw
 * container tensors and verify the metrics the producer wrote to its
 * fidelity CSV.
 */

import {
  attentionMap,
  detectOffset,
  layerNormRows,
  matrix,
  meanRowEntropy,
  peakRecovery,
  type Matrix,
  type Offset,
} from "./attention.js";
import { tensorName, type ParsedContainer } from "./saiw.js";

export const PEAK_TOLERANCE = 1e-3;
export const ENTROPY_TOLERANCE = 1e-6;

export interface FidelityRow {
  layer: number;
  head: number;
  method: string;
  target: Offset | null;
  detected: Offset;
  peak_recovery: number | null;
  mean_row_entropy: number;
}

/** Parse the producer's fidelity CSV (fixed column set, no quoting). */
export function parseFidelityCsv(text: string): FidelityRow[] {
  const lines = text.trim().split(/\r?\n/);
  if (lines.length === 0) throw new Error("empty fidelity CSV");
  const columns = lines[0]!.split(",");
  const index = new Map(columns.map((c, i) => [c, i]));
  for (const required of [
    "layer",
    "head",
    "method",
    "target_dr",
    "target_dc",
    "detected_dr",
    "detected_dc",
    "peak_recovery",
    "mean_row_entropy",
  ]) {
    if (!index.has(required)) throw new Error(`fidelity CSV misses column ${required}`);
  }
  const cell = (parts: string[], name: string) => parts[index.get(name)!]!;
  return lines.slice(1).map((line) => {
    const parts = line.split(",");
    const targetDr = cell(parts, "target_dr");
    const peak = cell(parts, "peak_recovery");
    return {
      layer: Number(cell(parts, "layer")),
      head: Number(cell(parts, "head")),
      method: cell(parts, "method"),
      target:
        targetDr === ""
          ? null
          : { dr: Number(targetDr), dc: Number(cell(parts, "target_dc")) },
      detected: {
        dr: Number(cell(parts, "detected_dr")),
        dc: Number(cell(parts, "detected_dc")),
      },
      peak_recovery: peak === "" ? null : Number(peak),
      mean_row_entropy: Number(cell(parts, "mean_row_entropy")),
    };
  });
}

export interface HeadParity {
  detected: [number, number];
  expected: [number, number];
  match: boolean;
  peak_recovery: number | null;
  expected_peak_recovery: number | null;
  entropy: number;
  expected_entropy: number;
  mismatches: string[];
}

export interface ParityReport {
  ok: boolean;
  heads: Record<string, HeadParity>;
  mismatched_heads: string[];
}

function asMatrix(container: ParsedContainer, name: string, rows: number, cols: number): Matrix {
  const tensor = container.tensors.get(name);
  if (!tensor) throw new Error(`container misses tensor ${name}`);
  return matrix(rows, cols, tensor.values);
}

/** Recompute each CSV row's metrics from the container and diff them. */
export function recomputeAndCompare(container: ParsedContainer, rows: FidelityRow[]): ParityReport {
  const config = container.metadata.config;
  const [gridRows, gridCols] = config.grid;
  const n = gridRows * gridCols;
  const xt = layerNormRows(asMatrix(container, "pos_embed", n, config.dim));

  const heads: Record<string, HeadParity> = {};
  const mismatched: string[] = [];
  for (const row of rows) {
    const stem = `layer${row.layer}.head${row.head}`;
    const q = asMatrix(container, tensorName(row.layer, row.head, "q"), config.dim, config.d_head);
    const k = asMatrix(container, tensorName(row.layer, row.head, "k"), config.dim, config.d_head);
    const map = attentionMap(xt, q, k, config.scale_mode);

    const detected = detectOffset(map, gridRows, gridCols);
    const entropy = meanRowEntropy(map);
    const target = container.metadata.targets[stem] ?? null;
    const peak =
      target === null
        ? null
        : peakRecovery(map, { dr: target[0], dc: target[1] }, gridRows, gridCols, config.padding);

    const mismatches: string[] = [];
    if (detected.dr !== row.detected.dr || detected.dc !== row.detected.dc) {
      mismatches.push(
        `detected offset (${detected.dr},${detected.dc}) != csv (${row.detected.dr},${row.detected.dc})`,
      );
    }
    if (peak !== null && row.peak_recovery !== null && Math.abs(peak - row.peak_recovery) > PEAK_TOLERANCE) {
      mismatches.push(`peak recovery ${peak} != csv ${row.peak_recovery} beyond ${PEAK_TOLERANCE}`);
    }
    if (Math.abs(entropy - row.mean_row_entropy) > ENTROPY_TOLERANCE) {
      mismatches.push(`entropy ${entropy} != csv ${row.mean_row_entropy} beyond ${ENTROPY_TOLERANCE}`);
    }

    heads[stem] = {
      detected: [detected.dr, detected.dc],
      expected: [row.detected.dr, row.detected.dc],
      match: mismatches.length === 0,
      peak_recovery: peak,
      expected_peak_recovery: row.peak_recovery,
      entropy,
      expected_entropy: row.mean_row_entropy,
      mismatches,
    };
    if (mismatches.length > 0) mismatched.push(stem);
  }
  return { ok: mismatched.length === 0, heads, mismatched_heads: mismatched };
}
