"""Coefficient fields a_ij(x) for the divergence-form operator -(a_ij u_xi)_xj.

Scalar kinds (a_ij = a(x) delta_ij) feed the two-point flux scheme; tensor
fields are accepted by the mixed-stencil option only.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = ["CoefficientField", "identity", "checkerboard", "cellwise_random",
           "constant_tensor", "field_from_spec"]


def _splitmix64(x: np.ndarray) -> np.ndarray:
    x = x + np.uint64(0x9E3779B97F4A7C15)
    x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))


@dataclass(frozen=True)
class CoefficientField:
    kind: str
    lam: float
    dimension: int = 3
    cell_size: float = 1.0
    seed: int = 0
    tensor: tuple | None = None
    scalar_fn: Callable | None = None

    def __post_init__(self):
        if not self.lam >= 1.0:
            raise ValueError("ellipticity constant must be >= 1")

    @property
    def is_scalar(self) -> bool:
        return self.kind != "constant_tensor"

    def scalar(self, X) -> np.ndarray:
        """Cell coefficient a(x) for scalar fields, shape (M,)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.kind == "identity":
            return np.ones(len(X))
        if self.kind == "checkerboard":
            idx = np.floor(X / self.cell_size).astype(np.int64)
            even = (idx.sum(axis=1) % 2) == 0
            return np.where(even, self.lam, 1.0 / self.lam)
        if self.kind == "cellwise_random":
            idx = np.floor(X / self.cell_size).astype(np.int64).astype(np.uint64)
            h = np.full(len(X), np.uint64(self.seed))
            with np.errstate(over="ignore"):
                for k in range(idx.shape[1]):
                    h = _splitmix64(h ^ (idx[:, k] * np.uint64(0x632BE59BD9B4E019)))
            u = (h >> np.uint64(11)).astype(float) * 2.0**-53
            return self.lam ** (2.0 * u - 1.0)
        if self.kind == "custom":
            return np.asarray(self.scalar_fn(X), dtype=float)
        if self.kind == "constant_tensor":
            raise ValueError("tensor field has no scalar form; use matrix()")
        raise ValueError(f"unknown field kind {self.kind!r}")

    def matrix(self, X) -> np.ndarray:
        """Symmetric coefficient matrices, shape (M, N, N)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.kind == "constant_tensor":
            A = np.asarray(self.tensor, dtype=float)
            return np.broadcast_to(A, (len(X),) + A.shape).copy()
        return self.scalar(X)[:, None, None] * np.eye(X.shape[1])[None]

    def check_ellipticity(self, X, xi, rtol: float = 1e-12) -> bool:
        """lam^-1 |xi|^2 <= a_ij xi_i xi_j <= lam |xi|^2 and symmetry on samples."""
        A = self.matrix(X)
        if not np.allclose(A, np.swapaxes(A, 1, 2)):
            return False
        q = np.einsum("mi,mij,mj->m", xi, A, xi)
        n2 = np.sum(xi**2, axis=1)
        lo = n2 / self.lam * (1 - rtol)
        hi = n2 * self.lam * (1 + rtol)
        return bool(np.all(q >= lo) and np.all(q <= hi))

    def describe(self) -> dict:
        d = {"kind": self.kind, "lambda": self.lam}
        if self.kind in ("checkerboard", "cellwise_random"):
            d["cell_size"] = self.cell_size
        if self.kind == "cellwise_random":
            d["seed"] = self.seed
        if self.kind == "constant_tensor":
            d["tensor"] = [list(r) for r in self.tensor]
        return d


def identity(dimension: int = 3) -> CoefficientField:
    return CoefficientField("identity", 1.0, dimension)


def checkerboard(lam: float, cell_size: float = 1.0, dimension: int = 3) -> CoefficientField:
    """a = lam on even cells of the cubic lattice of spacing cell_size, 1/lam on odd ones."""
    return CoefficientField("checkerboard", float(lam), dimension, float(cell_size))


def cellwise_random(lam: float, seed: int, cell_size: float = 1.0,
                    dimension: int = 3) -> CoefficientField:
    """Log-uniform values in [1/lam, lam], one draw per lattice cell, keyed by cell index."""
    return CoefficientField("cellwise_random", float(lam), dimension, float(cell_size), int(seed))


def constant_tensor(A) -> CoefficientField:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or not np.allclose(A, A.T):
        raise ValueError("tensor must be a symmetric square matrix")
    w = np.linalg.eigvalsh(A)
    if w[0] <= 0:
        raise ValueError("tensor must be positive definite")
    lam = max(w[-1], 1.0 / w[0], 1.0)
    return CoefficientField("constant_tensor", float(lam), A.shape[0],
                            tensor=tuple(tuple(r) for r in A))


def field_from_spec(spec: dict | None, dimension: int = 3) -> CoefficientField:
    if not spec or spec.get("kind", "identity") == "identity":
        return identity(dimension)
    kind = spec["kind"]
    if kind == "checkerboard":
        return checkerboard(spec["lambda"], spec.get("cell_size", 1.0), dimension)
    if kind == "cellwise_random":
        return cellwise_random(spec["lambda"], spec.get("seed", 0), spec.get("cell_size", 1.0),
                               dimension)
    if kind == "constant_tensor":
        return constant_tensor(spec["tensor"])
    raise ValueError(f"unknown field kind {kind!r}")
