"""Checkpoint and time-series persistence.

Checkpoint layout (little-endian throughout):

    bytes 0-5   magic "EASIM1"
    byte  6     u8 dim
    bytes 7-10  u32 n (points per axis)
    f64 x 4     t, gamma, beta, alpha
    f64 x n^dim rho, row-major
    f64 x dim*n^dim  velocity components, each row-major

CSV rows carry every DiagnosticsRecord field at 17 significant digits so the
values round-trip exactly; newline is LF.
"""

from __future__ import annotations

import struct

import numpy as np

from .diagnostics import RECORD_FIELDS, DiagnosticsRecord
from .spectral import Field, FractionalExponent, Grid, VectorField
from .states import ModelParams, PrimitiveState

__all__ = [
    "CheckpointFormatError",
    "MAGIC",
    "write_checkpoint",
    "read_checkpoint",
    "checkpoint_size",
    "csv_columns",
    "emit_timeseries",
    "read_timeseries",
    "records_from_timeseries",
]

MAGIC = b"EASIM1"
_HEADER = struct.Struct("<6sBI")
_SCALARS = struct.Struct("<4d")


class CheckpointFormatError(ValueError):
    pass


def checkpoint_size(dim: int, n: int) -> int:
    return _HEADER.size + _SCALARS.size + 8 * n**dim * (1 + dim)


def write_checkpoint(state: PrimitiveState, params: ModelParams, path) -> None:
    g = state.grid
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, g.dim, g.n))
        fh.write(
            _SCALARS.pack(state.t, params.gamma, params.beta, params.alpha.alpha)
        )
        fh.write(np.ascontiguousarray(state.rho.values, dtype="<f8").tobytes())
        for c in state.u:
            fh.write(np.ascontiguousarray(c.values, dtype="<f8").tobytes())


def read_checkpoint(path) -> tuple[PrimitiveState, ModelParams]:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise CheckpointFormatError("truncated checkpoint: missing header")
    magic, dim, n = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise CheckpointFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    expected = checkpoint_size(dim, n)
    if len(raw) != expected:
        raise CheckpointFormatError(
            f"truncated checkpoint: {len(raw)} bytes, expected {expected}"
        )
    t, gamma, beta, alpha = _SCALARS.unpack_from(raw, _HEADER.size)
    grid = Grid(dim, n)
    offset = _HEADER.size + _SCALARS.size
    count = n**dim

    def take():
        nonlocal offset
        arr = np.frombuffer(raw, dtype="<f8", count=count, offset=offset)
        offset += 8 * count
        return arr.reshape(grid.shape).copy()

    rho = Field(grid, take())
    u = VectorField([Field(grid, take()) for _ in range(dim)])
    params = ModelParams(
        gamma=gamma, beta=beta, alpha=FractionalExponent(alpha)
    )
    return PrimitiveState(rho, u, t), params


def csv_columns(dim: int) -> list[str]:
    cols = []
    for name in RECORD_FIELDS:
        if name == "momentum":
            cols.extend(f"momentum_{ax}" for ax in "xy"[:dim])
        else:
            cols.append(name)
    return cols


def _format(x: float) -> str:
    return f"{x:.17g}"


def emit_timeseries(records, path, dim: int | None = None) -> None:
    """Write records as CSV with full round-trip precision."""
    records = list(records)
    if dim is None:
        dim = len(records[0].momentum) if records else 1
    ts = [r.t for r in records]
    if any(b < a for a, b in zip(ts, ts[1:])):
        raise ValueError("records must be time-ordered")
    with open(path, "w", newline="") as fh:
        fh.write(",".join(csv_columns(dim)) + "\n")
        for r in records:
            row = []
            for name in RECORD_FIELDS:
                val = getattr(r, name)
                if name == "momentum":
                    row.extend(_format(v) for v in val)
                else:
                    row.append(_format(val))
            fh.write(",".join(row) + "\n")


def read_timeseries(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        header = fh.readline().strip()
        if not header:
            raise ValueError(f"empty CSV {path}")
        names = header.split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    data = np.array(rows, dtype=float) if rows else np.empty((0, len(names)))
    return {name: data[:, i] for i, name in enumerate(names)}


def records_from_timeseries(data: dict[str, np.ndarray]) -> list[DiagnosticsRecord]:
    """Rebuild DiagnosticsRecord rows from a parsed CSV (exact round trip)."""
    dim = 2 if "momentum_y" in data else 1
    n_rows = len(data["t"])
    out = []
    for i in range(n_rows):
        kwargs = {}
        for name in RECORD_FIELDS:
            if name == "momentum":
                kwargs[name] = tuple(
                    float(data[f"momentum_{ax}"][i]) for ax in "xy"[:dim]
                )
            else:
                kwargs[name] = float(data[name][i])
        out.append(DiagnosticsRecord(**kwargs))
    return out
