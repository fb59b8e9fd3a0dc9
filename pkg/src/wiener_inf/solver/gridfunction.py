"""Cell fields on a Grid, with binary dump and CSV slice export."""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .grid import BoxDomain, Grid

__all__ = ["GridFunction", "MAGIC"]

MAGIC = b"WINFGRD1"


@dataclass
class GridFunction:
    grid: Grid
    values: np.ndarray            # flat, one value per cell
    labels: np.ndarray
    info: dict | None = None

    def as_array(self) -> np.ndarray:
        return self.values.reshape(self.grid.shape)

    def value_at(self, x) -> float:
        """Value at x: exact at a cell centre, multilinear between centres otherwise."""
        x = np.asarray(x, dtype=float)
        cs = self.grid.centers
        idx, wts = [], []
        for k in range(self.grid.dimension):
            c = cs[k]
            j = int(np.searchsorted(c, x[k]))
            if j < len(c) and np.isclose(c[j], x[k], rtol=0, atol=1e-12 * max(1.0, abs(x[k]))):
                idx.append([j])
                wts.append([1.0])
                continue
            if j == 0 or j == len(c):
                raise ValueError(f"point {x} lies outside the grid centres")
            t = (x[k] - c[j - 1]) / (c[j] - c[j - 1])
            idx.append([j - 1, j])
            wts.append([1 - t, t])
        arr = self.as_array()
        total = 0.0
        for corner in np.ndindex(*[len(i) for i in idx]):
            w = np.prod([wts[k][c] for k, c in enumerate(corner)])
            total += w * arr[tuple(idx[k][c] for k, c in enumerate(corner))]
        return float(total)

    def interior_range(self) -> tuple[float, float]:
        v = self.values[self.labels == 0]
        return (float(v.min()), float(v.max())) if len(v) else (np.nan, np.nan)

    # -- export ---------------------------------------------------------
    def to_binary(self, path) -> Path:
        """Header: magic, N, shape; then per-axis face coordinates, values (f8), labels (i1)."""
        path = Path(path)
        g = self.grid
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<i", g.dimension))
            fh.write(struct.pack(f"<{g.dimension}i", *g.shape))
            for f in g.faces:
                fh.write(np.asarray(f, dtype="<f8").tobytes())
            fh.write(np.asarray(self.values, dtype="<f8").tobytes())
            fh.write(np.asarray(self.labels, dtype="i1").tobytes())
        return path

    @classmethod
    def from_binary(cls, path) -> "GridFunction":
        with open(path, "rb") as fh:
            if fh.read(len(MAGIC)) != MAGIC:
                raise ValueError(f"{path}: not a grid dump")
            (N,) = struct.unpack("<i", fh.read(4))
            shape = struct.unpack(f"<{N}i", fh.read(4 * N))
            faces = [np.frombuffer(fh.read(8 * (n + 1)), dtype="<f8").copy() for n in shape]
            n = int(np.prod(shape))
            values = np.frombuffer(fh.read(8 * n), dtype="<f8").copy()
            labels = np.frombuffer(fh.read(n), dtype="i1").copy()
        lo = tuple(float(f[0]) for f in faces)
        hi = tuple(float(f[-1]) for f in faces)
        return cls(Grid(faces, BoxDomain(lo, hi)), values, labels)

    def slice_csv(self, path, axis: int = 2, coord: float = 0.0) -> Path:
        """Write the plane of cells nearest to x_axis = coord as CSV rows (x_..., label, value)."""
        path = Path(path)
        g = self.grid
        c = g.centers[axis]
        j = int(np.argmin(np.abs(c - coord)))
        sel = [slice(None)] * g.dimension
        sel[axis] = j
        arr = self.as_array()[tuple(sel)]
        lab = self.labels.reshape(g.shape)[tuple(sel)]
        others = [k for k in range(g.dimension) if k != axis]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{k + 1}" for k in range(g.dimension)] + ["label", "value"])
            for sub in np.ndindex(*arr.shape):
                pt = [0.0] * g.dimension
                pt[axis] = float(c[j])
                for o, s in zip(others, sub):
                    pt[o] = float(g.centers[o][s])
                w.writerow([repr(p) for p in pt] + [int(lab[sub]), repr(float(arr[sub]))])
        return path
