"""SAIW weight container and attention-map image output.

SAIW byte layout (all integers little-endian):

    bytes 0..3    magic "SAIW"
    bytes 4..7    format version, u32 (currently 1)
    bytes 8..15   header length in bytes, u64
    next          header: UTF-8 JSON, space-padded so the payload that
                  follows starts on a 64-byte file offset
    rest          payload: raw little-endian tensor bytes, each tensor
                  starting on a 64-byte boundary relative to the payload

The header object has two keys: "tensors" maps each tensor name
("pos_embed", "layer{L}.head{H}.q", "layer{L}.head{H}.k") to
{dtype, shape, byte_offset, byte_len} with byte_offset relative to the
payload start, and "metadata" records the generating config, seed,
method, and library version. Writing the same bundle twice yields
byte-identical files.
"""

import hashlib
import json
from dataclasses import asdict

import numpy as np

from ._version import __version__
from .errors import (
    ContainerCorruptionError,
    ContainerFormatError,
    ContainerValidationError,
    ContractError,
)
from .initializers import AttentionInit, ModelConfig, ModelInit, PosEncoding
from .kernels import GridShape, ImpulseOffset

__all__ = [
    "MAGIC",
    "FORMAT_VERSION",
    "DTYPES",
    "write_container",
    "read_container",
    "container_sha256",
    "render_attention_pgm",
]

MAGIC = b"SAIW"
FORMAT_VERSION = 1
ALIGNMENT = 64
DTYPES = {"f32": np.dtype("<f4"), "f64": np.dtype("<f8")}

_HEADER_PREFIX_LEN = 16  # magic + version + header_len


def _tensor_name(layer, head, which):
    return f"layer{layer}.head{head}.{which}"


def _config_to_json(config):
    out = asdict(config)
    out["grid"] = [config.grid.rows, config.grid.cols]
    return out


def _config_from_json(obj):
    obj = dict(obj)
    rows, cols = obj.pop("grid")
    return ModelConfig(grid=GridShape(rows, cols), **obj)


def _norm_tolerance(dtype):
    return 1e-4 if dtype == "f32" else 1e-6


def write_container(init, path, dtype="f32"):
    """Serialize a ModelInit to `path`; `dtype` selects the payload precision."""
    if dtype not in DTYPES:
        raise ContainerFormatError(f"unsupported payload dtype {dtype!r}")
    np_dtype = DTYPES[dtype]

    tensors = [("pos_embed", init.pos.data)]
    targets = {}
    for entry in init.attention:
        stem = f"layer{entry.layer}.head{entry.head}"
        tensors.append((_tensor_name(entry.layer, entry.head, "q"), entry.Q))
        tensors.append((_tensor_name(entry.layer, entry.head, "k"), entry.K))
        targets[stem] = None if entry.target_offset is None else list(entry.target_offset)

    table = {}
    blobs = []
    offset = 0
    for name, array in tensors:
        raw = np.ascontiguousarray(array, dtype=np_dtype).tobytes()
        table[name] = {
            "dtype": dtype,
            "shape": list(array.shape),
            "byte_offset": offset,
            "byte_len": len(raw),
        }
        blobs.append((offset, raw))
        offset += len(raw)
        offset += (-offset) % ALIGNMENT

    header_obj = {
        "metadata": {
            "config": _config_to_json(init.config),
            "seed": init.config.seed,
            "method": init.method,
            "mimetic_mu": init.mimetic_mu,
            "pos_std": init.pos.std,
            "pos_seed": init.pos.seed,
            "targets": targets,
            "library_version": __version__,
        },
        "tensors": table,
    }
    header = json.dumps(header_obj, sort_keys=True, separators=(",", ":")).encode("utf-8")
    pad = (-(_HEADER_PREFIX_LEN + len(header))) % ALIGNMENT
    header += b" " * pad

    payload_len = max(t["byte_offset"] + t["byte_len"] for t in table.values())
    payload = bytearray(payload_len)
    for start, raw in blobs:
        payload[start : start + len(raw)] = raw

    try:
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(FORMAT_VERSION.to_bytes(4, "little"))
            fh.write(len(header).to_bytes(8, "little"))
            fh.write(header)
            fh.write(payload)
    except OSError as exc:
        raise OSError(f"cannot write container to {path}: {exc}") from exc


def _parse_header(blob, path):
    if len(blob) < _HEADER_PREFIX_LEN:
        raise ContainerFormatError(f"{path}: file shorter than the fixed header")
    if blob[:4] != MAGIC:
        raise ContainerFormatError(f"{path}: bad magic {blob[:4]!r}, expected {MAGIC!r}")
    version = int.from_bytes(blob[4:8], "little")
    if version != FORMAT_VERSION:
        raise ContainerFormatError(f"{path}: unsupported format version {version}")
    header_len = int.from_bytes(blob[8:16], "little")
    if _HEADER_PREFIX_LEN + header_len > len(blob):
        raise ContainerCorruptionError(f"{path}: header length {header_len} exceeds file size")
    try:
        header = json.loads(blob[_HEADER_PREFIX_LEN : _HEADER_PREFIX_LEN + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerFormatError(f"{path}: header is not valid JSON: {exc}") from exc
    if not isinstance(header, dict) or "tensors" not in header or "metadata" not in header:
        raise ContainerFormatError(f"{path}: header must carry 'tensors' and 'metadata'")
    return header, blob[_HEADER_PREFIX_LEN + header_len :]


def _validate_table(table, payload_len, path):
    entries = sorted(table.items(), key=lambda kv: kv[1]["byte_offset"])
    prev_end = 0
    for name, spec in entries:
        dtype, shape = spec.get("dtype"), spec.get("shape")
        off, length = spec.get("byte_offset"), spec.get("byte_len")
        if dtype not in DTYPES:
            raise ContainerFormatError(f"{path}: tensor {name!r} has unknown dtype {dtype!r}")
        expected = int(np.prod(shape)) * DTYPES[dtype].itemsize
        if length != expected:
            raise ContainerFormatError(
                f"{path}: tensor {name!r} byte_len {length} != shape product {expected}"
            )
        if off % ALIGNMENT != 0:
            raise ContainerFormatError(f"{path}: tensor {name!r} offset {off} not {ALIGNMENT}-aligned")
        if off < prev_end:
            raise ContainerFormatError(f"{path}: tensor {name!r} overlaps the previous tensor")
        if off + length > payload_len:
            raise ContainerCorruptionError(
                f"{path}: tensor {name!r} extends past the payload end "
                f"({off + length} > {payload_len})"
            )
        prev_end = off + length
    if payload_len != max((s["byte_offset"] + s["byte_len"] for s in table.values()), default=0):
        raise ContainerCorruptionError(f"{path}: payload has trailing bytes beyond the last tensor")
    return entries


def read_container(path):
    """Parse and validate a SAIW file back into a ModelInit.

    Raises ContainerFormatError for malformed bytes,
    ContainerCorruptionError for truncated payloads, and
    ContainerValidationError (naming the tensors) when decoded weights
    break their norm invariants. Never returns a partial bundle.
    """
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise OSError(f"cannot read container from {path}: {exc}") from exc

    header, payload = _parse_header(blob, path)
    table = header["tensors"]
    meta = header["metadata"]
    _validate_table(table, len(payload), path)

    def tensor(name):
        spec = table[name]
        raw = payload[spec["byte_offset"] : spec["byte_offset"] + spec["byte_len"]]
        return np.frombuffer(raw, dtype=DTYPES[spec["dtype"]]).reshape(spec["shape"]).astype(np.float64)

    try:
        config = _config_from_json(meta["config"])
        method = meta["method"]
        targets = meta["targets"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ContainerFormatError(f"{path}: malformed metadata: {exc}") from exc

    expected = {"pos_embed"}
    for layer in range(config.layers):
        for head in range(config.heads):
            expected.add(_tensor_name(layer, head, "q"))
            expected.add(_tensor_name(layer, head, "k"))
    missing = sorted(expected - set(table))
    if missing:
        raise ContainerValidationError(
            f"{path}: tensors missing for the declared config: {missing}", tensor_names=missing
        )

    pos = PosEncoding(data=tensor("pos_embed"), std=meta["pos_std"], seed=meta["pos_seed"])

    heads = []
    bad_norms = []
    tol = _norm_tolerance(table["pos_embed"]["dtype"])
    for layer in range(config.layers):
        for head in range(config.heads):
            stem = f"layer{layer}.head{head}"
            Q = tensor(_tensor_name(layer, head, "q"))
            K = tensor(_tensor_name(layer, head, "k"))
            target = targets.get(stem)
            offset = None if target is None else ImpulseOffset(int(target[0]), int(target[1]))
            if method == "impulse":
                for which, arr in (("q", Q), ("k", K)):
                    if abs(np.linalg.norm(arr) - config.gamma) > tol:
                        bad_norms.append(_tensor_name(layer, head, which))
            heads.append(AttentionInit(Q=Q, K=K, layer=layer, head=head, target_offset=offset))
    if bad_norms:
        raise ContainerValidationError(
            f"{path}: Frobenius norms deviate from gamma={config.gamma} beyond {tol}: {bad_norms}",
            tensor_names=bad_norms,
        )
    return ModelInit(
        config=config,
        pos=pos,
        attention=heads,
        method=method,
        mimetic_mu=meta.get("mimetic_mu"),
    )


def container_sha256(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def render_attention_pgm(M, path, zoom=None):
    """Write M as a binary PGM (P5, maxval 255), normalized by max(M).

    `zoom`, if given, is a (row0, col0, n_rows, n_cols) sub-block spec;
    the block is written to an additional file named `<path>.zoom.pgm`
    with the same normalization as the full map.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise ContractError(f"attention map must be 2-dimensional, got shape {M.shape}")
    if np.any(M < 0.0) or np.any(M > 1.0):
        raise ContractError("attention map entries must lie in [0, 1]")
    peak = M.max()
    pixels = np.zeros(M.shape, dtype=np.uint8) if peak == 0.0 else np.rint(255.0 * M / peak).astype(np.uint8)

    def emit(img, target):
        h, w = img.shape
        try:
            with open(target, "wb") as fh:
                fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
                fh.write(img.tobytes())
        except OSError as exc:
            raise OSError(f"cannot write image to {target}: {exc}") from exc

    emit(pixels, path)
    if zoom is not None:
        r0, c0, nr, nc = zoom
        emit(pixels[r0 : r0 + nr, c0 : c0 + nc], f"{path}.zoom.pgm")
