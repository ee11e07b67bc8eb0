"""Shared on-disk matrix formats.

Two interchangeable formats, selected by file extension:

``.csv``
    UTF-8 text. First line is ``rows,cols``; the remaining lines hold the
    matrix values in row-major order (one matrix row per line, comma
    separated). Values are written with ``repr`` so float64 round-trips
    bit-exactly.

``.f64``
    Raw binary. A 16-byte header of two little-endian u64 values
    (``rows``, ``cols``) followed by ``rows * cols`` little-endian float64
    values in row-major order.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import DataError

_HEADER = struct.Struct("<QQ")

SUPPORTED_EXTENSIONS = (".csv", ".f64")


def _as_matrix(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise DataError(f"expected a 2-D matrix, got shape {arr.shape}")
    return arr


def write_matrix(path: str | Path, values) -> None:
    """Write a 2-D float64 matrix to ``path`` in the format its extension names."""
    path = Path(path)
    arr = _as_matrix(values)
    if path.suffix == ".csv":
        lines = [f"{arr.shape[0]},{arr.shape[1]}"]
        for row in arr:
            lines.append(",".join(repr(float(v)) for v in row))
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    elif path.suffix == ".f64":
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(arr.shape[0], arr.shape[1]))
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    else:
        raise DataError(
            f"{path}: unsupported matrix extension {path.suffix!r}, "
            f"expected one of {SUPPORTED_EXTENSIONS}"
        )


def read_matrix(path: str | Path) -> np.ndarray:
    """Read a 2-D float64 matrix written by :func:`write_matrix`."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: matrix file does not exist")
    if path.suffix == ".csv":
        return _read_csv(path)
    if path.suffix == ".f64":
        return _read_f64(path)
    raise DataError(
        f"{path}: unsupported matrix extension {path.suffix!r}, "
        f"expected one of {SUPPORTED_EXTENSIONS}"
    )


def _read_csv(path: Path) -> np.ndarray:
    text = path.read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines:
        raise DataError(f"{path}: empty matrix file")
    header = lines[0].split(",")
    if len(header) != 2:
        raise DataError(f"{path}: first line must be 'rows,cols', got {lines[0]!r}")
    try:
        rows, cols = int(header[0]), int(header[1])
    except ValueError as exc:
        raise DataError(f"{path}: bad header {lines[0]!r}") from exc
    tokens: list[str] = []
    for line in lines[1:]:
        line = line.strip()
        if line:
            tokens.extend(t for t in line.split(",") if t.strip())
    if len(tokens) != rows * cols:
        raise DataError(
            f"{path}: header promises {rows}x{cols} = {rows * cols} values, "
            f"found {len(tokens)}"
        )
    try:
        flat = np.array([float(t) for t in tokens], dtype=np.float64)
    except ValueError as exc:
        raise DataError(f"{path}: non-numeric value in matrix body") from exc
    return flat.reshape(rows, cols)


def _read_f64(path: Path) -> np.ndarray:
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise DataError(f"{path}: file shorter than the 16-byte header")
    rows, cols = _HEADER.unpack_from(raw)
    expected = _HEADER.size + rows * cols * 8
    if len(raw) != expected:
        raise DataError(
            f"{path}: header promises {rows}x{cols} float64 values "
            f"({expected} bytes), file has {len(raw)} bytes"
        )
    flat = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    return flat.reshape(rows, cols).astype(np.float64, copy=True)
