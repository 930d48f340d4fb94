"""Trajectory export: long-format CSV and a compact little-endian binary dump.

Binary layout::

    magic    4s   b"RSTJ"
    version  u4   1
    dim      u4
    nx       u4
    nv       u4   0 for x-only fields
    count    u4   number of stored states
    dt       f8
    stride   u8   steps between consecutive stored states (0 if irregular)
    times    count x f8
    values   count x prod(shape) x f8, row-major
"""
from __future__ import annotations

import struct

import numpy as np

from .fields import TorusGrid

_MAGIC = b"RSTJ"
_HEADER = struct.Struct("<4sIIIIIdQ")


def _stride(steps) -> int:
    d = np.diff(np.asarray(steps))
    return int(d[0]) if len(d) and np.all(d == d[0]) else 0


def write_binary(filename, grid: TorusGrid, times, values, dt: float, steps=None,
                 phase=True) -> None:
    values = np.asarray(values, dtype="<f8")
    shape = grid.phase_shape if phase else grid.x_shape
    if values.shape[1:] != shape:
        raise ValueError(f"values shape {values.shape[1:]} does not match grid {shape}")
    stride = _stride(steps) if steps is not None else 0
    with open(filename, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, 1, grid.dim, grid.nx, grid.nv if phase else 0,
                              len(times), float(dt), stride))
        fh.write(np.asarray(times, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(values).tobytes())


def read_binary(filename):
    """Returns ``(grid, times, values, dt, stride)``."""
    with open(filename, "rb") as fh:
        magic, version, dim, nx, nv, count, dt, stride = _HEADER.unpack(fh.read(_HEADER.size))
        if magic != _MAGIC or version != 1:
            raise ValueError("not a trajectory dump")
        times = np.frombuffer(fh.read(8 * count), dtype="<f8").copy()
        data = np.frombuffer(fh.read(), dtype="<f8").copy()
    phase = nv > 0
    grid = TorusGrid(dim, nx, nv if phase else 4)
    shape = grid.phase_shape if phase else grid.x_shape
    return grid, times, data.reshape((count,) + shape), dt, stride


def write_csv(filename, grid: TorusGrid, times, values, phase=True) -> None:
    """One row per (t, x node[, v node]) with node coordinates, not indices."""
    xs = [f"x{i + 1}" for i in range(grid.dim)] if grid.dim > 1 else ["x"]
    vs = [f"v{i + 1}" for i in range(grid.dim)] if grid.dim > 1 else ["v"]
    cols = ["t"] + xs + (vs if phase else []) + ["value"]
    axes = [np.arange(grid.nx) / grid.nx] * grid.dim
    if phase:
        axes += [np.arange(grid.nv) / grid.nv] * grid.dim
    mesh = np.meshgrid(*axes, indexing="ij")
    coords = np.stack([m.ravel() for m in mesh], axis=1)
    values = np.asarray(values).reshape(len(times), -1)
    with open(filename, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for t, flat in zip(times, values):
            block = np.column_stack([np.full(len(flat), t), coords, flat])
            np.savetxt(fh, block, delimiter=",", fmt="%.17g")
