"""Structured tensor-product grids with geometric grading.

Cell widths follow a spacing function that is small near refinement hints
(obstacle surfaces, the anchor point) and grows linearly with the distance to
them, so exterior problems out to radii of several thousand stay affordable.
A cell centre is always placed exactly at the anchor point.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["SphereDomain", "BoxDomain", "Grid", "graded_axis", "build_grid",
           "INTERIOR", "OBSTACLE", "OUTER", "GridTooLargeError"]

INTERIOR, OBSTACLE, OUTER = 0, 1, 2


class GridTooLargeError(RuntimeError):
    pass


@dataclass(frozen=True)
class SphereDomain:
    center: tuple
    radius: float

    def outside(self, X):
        return np.linalg.norm(X - np.asarray(self.center), axis=1) >= self.radius

    def crossing(self, A, B):
        """Fraction t in (0, 1] where the segment A->B leaves the ball."""
        c = np.asarray(self.center)
        d = B - A
        f = A - c
        a = np.sum(d * d, axis=1)
        bq = 2 * np.sum(f * d, axis=1)
        cq = np.sum(f * f, axis=1) - self.radius**2
        disc = np.maximum(bq * bq - 4 * a * cq, 0.0)
        t = (-bq + np.sqrt(disc)) / (2 * a)
        return np.clip(t, 0.0, 1.0)

    def extent(self, axis):
        return self.center[axis] - self.radius, self.center[axis] + self.radius

    def describe(self):
        return {"kind": "sphere", "center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class BoxDomain:
    lo: tuple
    hi: tuple

    def outside(self, X):
        return np.any((X <= np.asarray(self.lo)) | (X >= np.asarray(self.hi)), axis=1)

    def crossing(self, A, B):
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        d = B - A
        with np.errstate(divide="ignore", invalid="ignore"):
            t_hi = np.where(d > 0, (hi - A) / d, np.inf)
            t_lo = np.where(d < 0, (lo - A) / d, np.inf)
        t = np.minimum(t_hi, t_lo).min(axis=1)
        return np.clip(t, 0.0, 1.0)

    def extent(self, axis):
        return self.lo[axis], self.hi[axis]

    def describe(self):
        return {"kind": "box", "lo": list(self.lo), "hi": list(self.hi)}


def _spacing(t, anchor, h_anchor, hints, growth):
    t = np.asarray(t, dtype=float)
    h = h_anchor + growth * np.abs(t - anchor)
    for lo, hi, hf in hints:
        dist = np.maximum(np.maximum(lo - t, t - hi), 0.0)
        h = np.minimum(h, hf + growth * dist)
    return h


def graded_axis(anchor: float, lo: float, hi: float, hints, h_anchor: float,
                growth: float = 0.2, max_cells: int = 4000) -> np.ndarray:
    """Face coordinates of a graded axis with a cell centred at ``anchor``.

    The axis runs past ``lo`` and ``hi`` by one cell so that the extreme cell
    centres lie outside [lo, hi].
    """
    sp = lambda t: float(_spacing(t, anchor, h_anchor, hints, growth))
    w0 = sp(anchor)
    right = [anchor + w0 / 2]
    center = anchor
    while center <= hi:
        f = right[-1]
        w = min(sp(f), sp(f + sp(f)))
        right.append(f + w)
        center = f + w / 2
        if len(right) > max_cells:
            raise GridTooLargeError("axis needs too many cells; coarsen the hints")
    left = [anchor - w0 / 2]
    center = anchor
    while center >= lo:
        f = left[-1]
        w = min(sp(f), sp(f - sp(f)))
        left.append(f - w)
        center = f - w / 2
        if len(left) > max_cells:
            raise GridTooLargeError("axis needs too many cells; coarsen the hints")
    return np.concatenate([left[::-1], right])


@dataclass
class Grid:
    faces: list
    domain: object
    _labels: np.ndarray | None = field(default=None, repr=False)

    @property
    def dimension(self):
        return len(self.faces)

    @property
    def shape(self):
        return tuple(len(f) - 1 for f in self.faces)

    @property
    def n_cells(self):
        return int(np.prod(self.shape))

    @property
    def centers(self):
        return [0.5 * (f[1:] + f[:-1]) for f in self.faces]

    @property
    def widths(self):
        return [np.diff(f) for f in self.faces]

    @property
    def min_spacing(self):
        return float(min(w.min() for w in self.widths))

    def cell_points(self, flat_idx=None) -> np.ndarray:
        cs = self.centers
        if flat_idx is None:
            mesh = np.meshgrid(*cs, indexing="ij")
            return np.stack([m.ravel() for m in mesh], axis=1)
        sub = np.unravel_index(np.asarray(flat_idx), self.shape)
        return np.stack([cs[k][sub[k]] for k in range(self.dimension)], axis=1)

    def cell_volumes(self) -> np.ndarray:
        w = self.widths
        vol = w[0]
        for k in range(1, self.dimension):
            vol = np.multiply.outer(vol, w[k])
        return vol.ravel()

    def locate(self, x) -> int:
        """Flat index of the cell containing point x."""
        sub = []
        for k, f in enumerate(self.faces):
            i = int(np.searchsorted(f, x[k], side="right") - 1)
            if not 0 <= i < len(f) - 1:
                raise ValueError(f"point {x} lies outside the grid")
            sub.append(i)
        return int(np.ravel_multi_index(sub, self.shape))

    def classify(self, obstacle=None) -> np.ndarray:
        """Cell labels: INTERIOR, OBSTACLE (centre in the set) or OUTER (centre outside the domain)."""
        P = self.cell_points()
        labels = np.full(len(P), INTERIOR, dtype=np.int8)
        outer = self.domain.outside(P)
        labels[outer] = OUTER
        if obstacle is not None and not obstacle.is_empty:
            inside = np.flatnonzero(~outer)
            hit = obstacle.contains(P[inside])
            labels[inside[hit]] = OBSTACLE
        return labels

    def describe(self):
        return {
            "dimension": self.dimension,
            "shape": list(self.shape),
            "extent": [[float(f[0]), float(f[-1])] for f in self.faces],
            "min_spacing": self.min_spacing,
            "domain": self.domain.describe(),
        }


def build_grid(domain, anchor, hints=None, h_anchor: float | None = None,
               growth: float = 0.2, refine: float = 1.0,
               max_cells: int = 3_000_000) -> Grid:
    """Graded grid covering ``domain`` with one layer of outer cells.

    ``refine`` divides every hinted spacing (refine=2 halves the cell widths
    near features); the growth rate is divided by the same factor.
    """
    N = len(anchor)
    hints = hints or [[] for _ in range(N)]
    faces = []
    for k in range(N):
        lo, hi = domain.extent(k)
        span = hi - lo
        ha = (h_anchor if h_anchor is not None else span / 32.0) / refine
        hs = [(a, b, h / refine) for a, b, h in hints[k]]
        faces.append(graded_axis(float(anchor[k]), lo, hi, hs, ha, growth / refine))
    n = int(np.prod([len(f) - 1 for f in faces]))
    if n > max_cells:
        raise GridTooLargeError(f"grid of {n} cells exceeds max_cells={max_cells}")
    return Grid(faces, domain)
