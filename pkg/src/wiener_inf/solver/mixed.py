"""Off-diagonal tensor terms for the mixed-stencil option.

The two-point scheme already carries the diagonal a_kk.  The off-diagonal part
of the energy, sum_{i != j} a_ij u_xi u_xj, is added on the dual (vertex)
cells: at every grid vertex surrounded by 2^N cells the gradient is the mean
of the 2^(N-1) axis differences across that vertex, weighted by the dual cell
volume.  The quadratic form is exact on linear functions with a constant tensor
and reduces to the two-point scheme when the tensor is diagonal.  It is not an
M-matrix in general, so the discrete maximum principle is not guaranteed.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np
import scipy.sparse as sp

from .grid import INTERIOR

__all__ = ["CrossTerms"]


@dataclass
class CrossTerms:
    full: sp.csr_matrix          # n_cells x n_cells quadratic form
    unknowns: np.ndarray
    dirichlet: np.ndarray
    matrix: sp.csr_matrix        # unknown block
    coupling: sp.csr_matrix      # unknown x Dirichlet block

    @classmethod
    def build(cls, grid, labels, field) -> "CrossTerms":
        N = grid.dimension
        shape = grid.shape
        cs = grid.centers
        # vertex v lies between centre i-1 and i on every axis, i = 1..n_k-1
        vshape = tuple(n - 1 for n in shape)
        nv = int(np.prod(vshape))
        vidx = np.indices(vshape).reshape(N, -1) + 1
        dx = [np.diff(c) for c in cs]                       # centre spacings
        vd = np.stack([dx[k][vidx[k] - 1] for k in range(N)], axis=1)   # (nv, N)
        vol = np.prod(vd, axis=1)

        # average tensor over the 2^N cells around the vertex
        P = grid.cell_points()
        Acell = field.matrix(P)
        Av = np.zeros((nv, N, N))
        corners = list(product((0, 1), repeat=N))
        for corner in corners:
            sub = [vidx[k] - 1 + corner[k] for k in range(N)]
            Av += Acell[np.ravel_multi_index(sub, shape)]
        Av /= len(corners)

        rows = np.arange(nv)
        G = []
        for k in range(N):
            data, cols = [], []
            for corner in corners:
                sub = [vidx[j] - 1 + corner[j] for j in range(N)]
                sign = 1.0 if corner[k] else -1.0
                cols.append(np.ravel_multi_index(sub, shape))
                data.append(sign / (2 ** (N - 1) * vd[:, k]))
            G.append(sp.csr_matrix((np.concatenate(data), (np.tile(rows, len(corners)),
                                    np.concatenate(cols))), shape=(nv, grid.n_cells)))
        full = sp.csr_matrix((grid.n_cells, grid.n_cells))
        for i in range(N):
            for j in range(N):
                if i != j:
                    w = vol * Av[:, i, j]
                    if np.any(w):
                        full = full + G[i].T @ sp.diags(w) @ G[j]
        full = full.tocsr()
        unknowns = np.flatnonzero(labels == INTERIOR)
        dirichlet = np.flatnonzero(labels != INTERIOR)
        matrix = full[unknowns][:, unknowns].tocsr()
        coupling = full[unknowns][:, dirichlet].tocsr()
        return cls(full, unknowns, dirichlet, matrix, coupling)

    def dirichlet_load(self, cell_values) -> np.ndarray:
        """Contribution of the fixed Dirichlet cell values to the unknown rows."""
        return self.coupling @ np.asarray(cell_values)[self.dirichlet]

    def cross_energy(self, u) -> float:
        u = np.asarray(u, dtype=float)
        return float(u @ (self.full @ u))
