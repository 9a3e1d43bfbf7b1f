"""Metrics quantifying how faithfully an attention map realizes its target.

All metrics treat the map row-wise: row i is token i's attention
distribution. "Interior" rows are those whose impulse target stays
inside the grid (every row, under circular padding).
"""

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .kernels import ConvMatrix, GridShape, ImpulseOffset
from .validation import as_float_matrix

__all__ = [
    "FidelityReport",
    "peak_accuracy",
    "detect_offset",
    "row_entropy",
    "map_error",
    "evaluate_map",
    "write_fidelity_csv",
    "FIDELITY_CSV_COLUMNS",
]

FIDELITY_CSV_COLUMNS = (
    "layer",
    "head",
    "method",
    "target_dr",
    "target_dc",
    "detected_dr",
    "detected_dc",
    "peak_recovery",
    "mean_row_entropy",
    "frobenius_error",
)


@dataclass(frozen=True)
class FidelityReport:
    layer: int
    head: int
    method: str
    target_offset: ImpulseOffset | None
    detected_offset: ImpulseOffset
    peak_recovery: float | None
    mean_row_entropy: float
    frobenius_error: float | None

    def csv_row(self):
        t = self.target_offset
        return {
            "layer": self.layer,
            "head": self.head,
            "method": self.method,
            "target_dr": "" if t is None else t.dr,
            "target_dc": "" if t is None else t.dc,
            "detected_dr": self.detected_offset.dr,
            "detected_dc": self.detected_offset.dc,
            "peak_recovery": "" if self.peak_recovery is None else repr(self.peak_recovery),
            "mean_row_entropy": repr(self.mean_row_entropy),
            "frobenius_error": "" if self.frobenius_error is None else repr(self.frobenius_error),
        }


def _check_impulse(H):
    if not isinstance(H, ConvMatrix) or H.source.kind != "impulse":
        raise ContractError("target must be the ConvMatrix of an impulse kernel")
    data = H.data
    if np.any((data != 0.0) & (data != 1.0)) or np.any(data.sum(axis=1) > 1.0):
        raise ContractError("impulse matrix rows must contain at most a single 1")
    return data


def peak_accuracy(M, H):
    """Fraction of interior rows whose argmax hits the impulse target."""
    M = as_float_matrix(M, "M")
    data = _check_impulse(H)
    if M.shape != data.shape:
        raise ContractError(f"map shape {M.shape} does not match target shape {data.shape}")
    interior = H.interior_row_mask()
    if not interior.any():
        raise ContractError("impulse target has no interior rows")
    hits = M[interior].argmax(axis=1) == data[interior].argmax(axis=1)
    return float(hits.mean())


def detect_offset(M, grid):
    """Grid displacement whose shifted diagonal of M carries the most mass.

    The diagonal of displacement (dr, dc) collects M[i, j] over all
    tokens i whose shift by (dr, dc) stays on the grid, with j the
    shifted token. Ties prefer smaller |dr| + |dc|, then row-major
    order, so an exactly uniform map reports (0, 0).
    """
    M = as_float_matrix(M, "M")
    if M.shape != (grid.n_tokens, grid.n_tokens):
        raise ContractError(f"map shape {M.shape} does not match grid with {grid.n_tokens} tokens")
    rows = np.repeat(np.arange(grid.rows), grid.cols)
    cols = np.tile(np.arange(grid.cols), grid.rows)
    src = np.arange(grid.n_tokens)
    best = None
    for dr in range(-(grid.rows - 1), grid.rows):
        for dc in range(-(grid.cols - 1), grid.cols):
            tr, tc = rows + dr, cols + dc
            ok = (tr >= 0) & (tr < grid.rows) & (tc >= 0) & (tc < grid.cols)
            mass = float(M[src[ok], tr[ok] * grid.cols + tc[ok]].sum())
            key = (-mass, abs(dr) + abs(dc), dr, dc)
            if best is None or key < best[0]:
                best = (key, ImpulseOffset(dr, dc))
    return best[1]


def row_entropy(M, rtol=1e-6):
    """Mean Shannon entropy of the rows, in nats."""
    M = as_float_matrix(M, "M")
    if np.any(M < 0.0) or np.any(np.abs(M.sum(axis=1) - 1.0) > rtol):
        raise ContractError("rows must be non-negative and sum to 1")
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(M > 0.0, M * np.log(M), 0.0)
    return float(-terms.sum(axis=1).mean())


def map_error(M, H):
    """Relative Frobenius error of M against H over interior rows."""
    M = as_float_matrix(M, "M")
    data = _check_impulse(H)
    if M.shape != data.shape:
        raise ContractError(f"map shape {M.shape} does not match target shape {data.shape}")
    interior = H.interior_row_mask()
    ref = np.linalg.norm(data[interior])
    if ref == 0.0:
        raise ContractError("impulse target has no interior rows")
    return float(np.linalg.norm(M[interior] - data[interior]) / ref)


def evaluate_map(M, grid, layer, head, method, target=None):
    """Bundle all metrics for one head's map into a FidelityReport.

    `target` is the impulse ConvMatrix the head was solved against, or
    None for methods without one (peak recovery and Frobenius error are
    then omitted).
    """
    detected = detect_offset(M, grid)
    entropy = row_entropy(M)
    if target is None:
        return FidelityReport(
            layer=layer,
            head=head,
            method=method,
            target_offset=None,
            detected_offset=detected,
            peak_recovery=None,
            mean_row_entropy=entropy,
            frobenius_error=None,
        )
    return FidelityReport(
        layer=layer,
        head=head,
        method=method,
        target_offset=target.source.offset,
        detected_offset=detected,
        peak_recovery=peak_accuracy(M, target),
        mean_row_entropy=entropy,
        frobenius_error=map_error(M, target),
    )


def write_fidelity_csv(reports, path):
    """Write reports to CSV, ordered by (layer, head)."""
    ordered = sorted(reports, key=lambda r: (r.layer, r.head))
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=FIDELITY_CSV_COLUMNS)
        writer.writeheader()
        for report in ordered:
            writer.writerow(report.csv_row())
