/**
 * Float64 recomputation of attention maps and their structure metrics.
 *
 * Matrices are flat Float64Arrays in row-major order. Everything here
 * is reimplemented from the documented math, independent of the
 * library that produced the weights.
 */

export interface Matrix {
  rows: number;
  cols: number;
  data: Float64Array;
}

export function matrix(rows: number, cols: number, data?: Float64Array): Matrix {
  return { rows, cols, data: data ?? new Float64Array(rows * cols) };
}

export function matmul(a: Matrix, b: Matrix): Matrix {
  if (a.cols !== b.rows) throw new Error(`matmul shape mismatch: ${a.cols} vs ${b.rows}`);
  const out = matrix(a.rows, b.cols);
  for (let i = 0; i < a.rows; i++) {
    for (let k = 0; k < a.cols; k++) {
      const aik = a.data[i * a.cols + k]!;
      if (aik === 0) continue;
      for (let j = 0; j < b.cols; j++) {
        out.data[i * b.cols + j]! += aik * b.data[k * b.cols + j]!;
      }
    }
  }
  return out;
}

export function transpose(a: Matrix): Matrix {
  const out = matrix(a.cols, a.rows);
  for (let i = 0; i < a.rows; i++) {
    for (let j = 0; j < a.cols; j++) {
      out.data[j * a.rows + i] = a.data[i * a.cols + j]!;
    }
  }
  return out;
}

/** Row-wise layer norm: mean 0, variance 1 per row, identity affine. */
export function layerNormRows(x: Matrix, eps = 1e-12): Matrix {
  const out = matrix(x.rows, x.cols);
  for (let i = 0; i < x.rows; i++) {
    let mean = 0;
    for (let j = 0; j < x.cols; j++) mean += x.data[i * x.cols + j]!;
    mean /= x.cols;
    let variance = 0;
    for (let j = 0; j < x.cols; j++) {
      const d = x.data[i * x.cols + j]! - mean;
      variance += d * d;
    }
    variance /= x.cols;
    const scale = 1 / Math.sqrt(variance + eps);
    for (let j = 0; j < x.cols; j++) {
      out.data[i * x.cols + j] = (x.data[i * x.cols + j]! - mean) * scale;
    }
  }
  return out;
}

export function softmaxRows(logits: Matrix): Matrix {
  const out = matrix(logits.rows, logits.cols);
  for (let i = 0; i < logits.rows; i++) {
    let max = -Infinity;
    for (let j = 0; j < logits.cols; j++) max = Math.max(max, logits.data[i * logits.cols + j]!);
    let sum = 0;
    for (let j = 0; j < logits.cols; j++) {
      const e = Math.exp(logits.data[i * logits.cols + j]! - max);
      out.data[i * logits.cols + j] = e;
      sum += e;
    }
    for (let j = 0; j < logits.cols; j++) out.data[i * logits.cols + j]! /= sum;
  }
  return out;
}

/** softmax(Xt Q K^T Xt^T), optionally scaling logits by 1/sqrt(d_head). */
export function attentionMap(
  xt: Matrix,
  q: Matrix,
  k: Matrix,
  scaleMode: "paper_exact" | "inv_sqrt_d",
): Matrix {
  const xq = matmul(xt, q); // N x d
  const xk = matmul(xt, k); // N x d
  const logits = matmul(xq, transpose(xk)); // N x N
  if (scaleMode === "inv_sqrt_d") {
    const scale = 1 / Math.sqrt(q.cols);
    for (let i = 0; i < logits.data.length; i++) logits.data[i]! *= scale;
  }
  return softmaxRows(logits);
}

export function meanRowEntropy(m: Matrix): number {
  let total = 0;
  for (let i = 0; i < m.rows; i++) {
    let h = 0;
    for (let j = 0; j < m.cols; j++) {
      const p = m.data[i * m.cols + j]!;
      if (p > 0) h -= p * Math.log(p);
    }
    total += h;
  }
  return total / m.rows;
}

/** First-maximum argmax per row (matching numpy's tie-breaking). */
export function rowArgmax(m: Matrix, row: number): number {
  let best = 0;
  let bestValue = -Infinity;
  for (let j = 0; j < m.cols; j++) {
    const v = m.data[row * m.cols + j]!;
    if (v > bestValue) {
      bestValue = v;
      best = j;
    }
  }
  return best;
}

export interface Offset {
  dr: number;
  dc: number;
}

/**
 * Grid displacement whose shifted diagonal carries the most mass; ties
 * prefer smaller |dr|+|dc|, then (dr, dc) order.
 */
export function detectOffset(m: Matrix, gridRows: number, gridCols: number): Offset {
  let best: Offset = { dr: 0, dc: 0 };
  let bestKey: [number, number, number, number] | null = null;
  for (let dr = -(gridRows - 1); dr < gridRows; dr++) {
    for (let dc = -(gridCols - 1); dc < gridCols; dc++) {
      let mass = 0;
      for (let r = 0; r < gridRows; r++) {
        for (let c = 0; c < gridCols; c++) {
          const tr = r + dr;
          const tc = c + dc;
          if (tr < 0 || tr >= gridRows || tc < 0 || tc >= gridCols) continue;
          mass += m.data[(r * gridCols + c) * m.cols + (tr * gridCols + tc)]!;
        }
      }
      const key: [number, number, number, number] = [-mass, Math.abs(dr) + Math.abs(dc), dr, dc];
      if (
        bestKey === null ||
        key[0] < bestKey[0] ||
        (key[0] === bestKey[0] &&
          (key[1] < bestKey[1] ||
            (key[1] === bestKey[1] && (key[2] < bestKey[2] || (key[2] === bestKey[2] && key[3] < bestKey[3])))))
      ) {
        bestKey = key;
        best = { dr, dc };
      }
    }
  }
  return best;
}

/**
 * Fraction of interior rows whose argmax hits the impulse target; under
 * zero padding a row is interior when its shifted source stays on the
 * grid, under circular padding every row is.
 */
export function peakRecovery(
  m: Matrix,
  offset: Offset,
  gridRows: number,
  gridCols: number,
  padding: "zero" | "circular",
): number {
  let hits = 0;
  let total = 0;
  for (let r = 0; r < gridRows; r++) {
    for (let c = 0; c < gridCols; c++) {
      let tr = r + offset.dr;
      let tc = c + offset.dc;
      if (padding === "circular") {
        tr = ((tr % gridRows) + gridRows) % gridRows;
        tc = ((tc % gridCols) + gridCols) % gridCols;
      } else if (tr < 0 || tr >= gridRows || tc < 0 || tc >= gridCols) {
        continue;
      }
      total += 1;
      if (rowArgmax(m, r * gridCols + c) === tr * gridCols + tc) hits += 1;
    }
  }
  return total === 0 ? 0 : hits / total;
}
