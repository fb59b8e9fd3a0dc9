"""Flux-conservative cell-centred discretisation of -(a u_xi)_xi on a Grid.

Interior faces carry the two-point transmissibility with harmonic averaging of
the cell coefficients.  Faces between an unknown cell and a Dirichlet cell
(obstacle or outer) are cut at the located boundary crossing, which keeps the
system an M-matrix while placing the Dirichlet value on the true surface.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .grid import INTERIOR, OBSTACLE, OUTER, Grid

__all__ = ["System", "BoundaryData", "build_system", "THETA_MIN"]

THETA_MIN = 0.05
BISECTION_STEPS = 30


@dataclass(frozen=True)
class BoundaryData:
    """Dirichlet values on obstacle and outer cells: a float or a callable X -> values."""

    obstacle: object = 0.0
    outer: object = 0.0

    def eval(self, which: int, X) -> np.ndarray:
        g = self.obstacle if which == OBSTACLE else self.outer
        if callable(g):
            return np.asarray(g(X), dtype=float)
        return np.full(len(X), float(g))

    def bounds(self):
        vals = [v for v in (self.obstacle, self.outer) if not callable(v)]
        return (min(vals), max(vals)) if len(vals) == 2 else None


def _bisect_crossing(obstacle, A, B, steps=BISECTION_STEPS):
    """Fraction t where the segment from A (outside) to B (inside) enters the set."""
    lo = np.zeros(len(A))
    hi = np.ones(len(A))
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        inside = obstacle.contains(A + mid[:, None] * (B - A))
        hi = np.where(inside, mid, hi)
        lo = np.where(inside, lo, mid)
    return hi


@dataclass
class System:
    grid: Grid
    labels: np.ndarray
    coef: np.ndarray
    unknowns: np.ndarray          # flat cell index of each unknown
    A: sp.csr_matrix
    bfaces_cell: np.ndarray       # unknown index
    bfaces_T: np.ndarray
    bfaces_point: np.ndarray      # crossing points
    bfaces_kind: np.ndarray       # OBSTACLE / OUTER
    iface_i: np.ndarray           # unknown indices
    iface_j: np.ndarray
    iface_T: np.ndarray
    dface_a: np.ndarray           # flat cell indices of Dirichlet-Dirichlet faces
    dface_b: np.ndarray
    dface_T: np.ndarray
    mixed: object = None

    @property
    def n_unknowns(self):
        return len(self.unknowns)

    def boundary_values(self, bc: BoundaryData) -> np.ndarray:
        g = np.empty(len(self.bfaces_T))
        for kind in (OBSTACLE, OUTER):
            m = self.bfaces_kind == kind
            if m.any():
                g[m] = bc.eval(kind, self.bfaces_point[m])
        return g

    def cell_values(self, bc: BoundaryData) -> np.ndarray:
        """Dirichlet values at obstacle / outer cell centres (NaN on unknown cells)."""
        vals = np.full(self.grid.n_cells, np.nan)
        for kind in (OBSTACLE, OUTER):
            idx = np.flatnonzero(self.labels == kind)
            if len(idx):
                vals[idx] = bc.eval(kind, self.grid.cell_points(idx))
        return vals

    def rhs(self, bc: BoundaryData, source=None) -> np.ndarray:
        b = np.bincount(self.bfaces_cell, weights=self.bfaces_T * self.boundary_values(bc),
                        minlength=self.n_unknowns)
        if self.mixed is not None:
            b -= self.mixed.dirichlet_load(self.cell_values(bc))
        if source is not None:
            b = b + source
        return b

    def energy(self, u: np.ndarray, bc: BoundaryData) -> float:
        """Discrete Dirichlet energy sum_faces T (jump)^2 of the full cell field."""
        ui = u[self.unknowns]
        e = float(np.sum(self.iface_T * (ui[self.iface_i] - ui[self.iface_j]) ** 2))
        g = self.boundary_values(bc)
        e += float(np.sum(self.bfaces_T * (ui[self.bfaces_cell] - g) ** 2))
        if len(self.dface_T):
            e += float(np.sum(self.dface_T * (u[self.dface_a] - u[self.dface_b]) ** 2))
        if self.mixed is not None:
            e += self.mixed.cross_energy(u)
        return e


def _axis_slices(N, k):
    left = [slice(None)] * N
    right = [slice(None)] * N
    left[k] = slice(0, -1)
    right[k] = slice(1, None)
    return tuple(left), tuple(right)


def build_system(grid: Grid, obstacle, field, labels=None, mixed: bool = False) -> System:
    """Assemble the SPD matrix on the unknown cells of ``grid``."""
    N = grid.dimension
    shape = grid.shape
    if labels is None:
        labels = grid.classify(obstacle)
    P = grid.cell_points()
    if field.is_scalar:
        coef = field.scalar(P)
        diag_coef = [coef] * N
    else:
        M = field.matrix(P)
        coef = None
        diag_coef = [M[:, k, k] for k in range(N)]
    unknown_of = np.full(grid.n_cells, -1, dtype=np.int64)
    unknowns = np.flatnonzero(labels == INTERIOR)
    unknown_of[unknowns] = np.arange(len(unknowns))
    flat = np.arange(grid.n_cells).reshape(shape)
    widths = grid.widths

    rows, cols, vals = [], [], []
    diag = np.zeros(len(unknowns))
    bc_cell, bc_T, bc_pt, bc_kind = [], [], [], []
    if_i, if_j, if_T = [], [], []
    df_a, df_b, df_T = [], [], []
    for k in range(N):
        sl_l, sl_r = _axis_slices(N, k)
        il = flat[sl_l].ravel()
        ir = flat[sl_r].ravel()
        bshape = [1] * N
        bshape[k] = shape[k] - 1
        dl = np.broadcast_to((widths[k][:-1] / 2).reshape(bshape), flat[sl_l].shape).ravel()
        dr = np.broadcast_to((widths[k][1:] / 2).reshape(bshape), flat[sl_l].shape).ravel()
        area = np.ones(flat[sl_l].shape)
        for j in range(N):
            if j != k:
                s = [1] * N
                s[j] = shape[j]
                area = area * widths[j].reshape(s)
        area = area.ravel()
        ak = diag_coef[k]
        al, ar = ak[il], ak[ir]
        labl, labr = labels[il], labels[ir]

        both = (labl == INTERIOR) & (labr == INTERIOR)
        T = area[both] / (dl[both] / al[both] + dr[both] / ar[both])
        ui, uj = unknown_of[il[both]], unknown_of[ir[both]]
        if_i.append(ui)
        if_j.append(uj)
        if_T.append(T)

        none_ = (labl != INTERIOR) & (labr != INTERIOR) & (labl != labr)
        if none_.any():
            df_a.append(il[none_])
            df_b.append(ir[none_])
            df_T.append(area[none_] / (dl[none_] / al[none_] + dr[none_] / ar[none_]))

        for left_is_unknown in (True, False):
            if left_is_unknown:
                m = (labl == INTERIOR) & (labr != INTERIOR)
                ci, co, di, ai, ao, kind = il[m], ir[m], dl[m], al[m], ar[m], labr[m]
            else:
                m = (labr == INTERIOR) & (labl != INTERIOR)
                ci, co, di, ai, ao, kind = ir[m], il[m], dr[m], ar[m], al[m], labl[m]
            if not m.any():
                continue
            dtot = dl[m] + dr[m]
            Xa, Xb = P[ci], P[co]
            t = np.empty(len(ci))
            ob = kind == OBSTACLE
            if ob.any():
                t[ob] = _bisect_crossing(obstacle, Xa[ob], Xb[ob])
            if (~ob).any():
                t[~ob] = grid.domain.crossing(Xa[~ob], Xb[~ob])
            t = np.maximum(t, THETA_MIN)
            s = t * dtot
            Tb = area[m] / (np.minimum(s, di) / ai + np.maximum(s - di, 0.0) / ao)
            bc_cell.append(unknown_of[ci])
            bc_T.append(Tb)
            bc_pt.append(Xa + t[:, None] * (Xb - Xa))
            bc_kind.append(kind)

    cat = lambda xs, dt=float: np.concatenate(xs) if xs else np.zeros(0, dtype=dt)
    if_i, if_j, if_T = cat(if_i, np.int64), cat(if_j, np.int64), cat(if_T)
    bc_cell, bc_T, bc_kind = cat(bc_cell, np.int64), cat(bc_T), cat(bc_kind, np.int8)
    bc_pt = np.concatenate(bc_pt) if bc_pt else np.zeros((0, N))
    n = len(unknowns)
    diag = np.bincount(if_i, weights=if_T, minlength=n) + np.bincount(if_j, weights=if_T, minlength=n)
    diag += np.bincount(bc_cell, weights=bc_T, minlength=n)
    rows = np.concatenate([np.arange(n), if_i, if_j])
    cols = np.concatenate([np.arange(n), if_j, if_i])
    vals = np.concatenate([diag, -if_T, -if_T])
    A = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    system = System(grid, labels, coef, unknowns, A, bc_cell, bc_T, bc_pt, bc_kind,
                    if_i, if_j, if_T, cat(df_a, np.int64), cat(df_b, np.int64), cat(df_T))
    if mixed:
        from .mixed import CrossTerms

        if field.is_scalar:
            raise ValueError("the mixed stencil is meant for tensor fields")
        system.mixed = CrossTerms.build(grid, labels, field)
        system.A = (system.A + system.mixed.matrix).tocsr()
    return system
