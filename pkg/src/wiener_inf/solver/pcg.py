"""Preconditioned conjugate gradients for the SPD finite-volume systems."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

__all__ = ["SolverError", "make_preconditioner", "pcg"]


class SolverError(RuntimeError):
    """Iterative solve did not reach the requested residual."""

    def __init__(self, message, residual=float("nan"), iterations=0):
        super().__init__(f"{message} (relative residual {residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


def make_preconditioner(A: sp.csr_matrix, kind: str = "amg"):
    """Return a callable r -> M^{-1} r.

    ``amg`` is a classical Ruge-Stuben V-cycle, which handles the strongly
    graded, anisotropic M-matrices of the exterior grids far better than
    smoothed aggregation (``sa``).
    """
    if kind == "none":
        return lambda r: r
    if kind == "jacobi":
        dinv = 1.0 / A.diagonal()
        return lambda r: dinv * r
    if kind in ("amg", "sa"):
        import pyamg

        if kind == "amg":
            ml = pyamg.ruge_stuben_solver(A, max_coarse=500)
        else:
            ml = pyamg.smoothed_aggregation_solver(A, symmetry="symmetric", max_coarse=500)
        M = ml.aspreconditioner(cycle="V")
        return lambda r: M @ r
    raise ValueError(f"unknown preconditioner {kind!r}")


def pcg(A, b, M=None, x0=None, tol: float = 1e-8, maxiter: int = 2000):
    """Solve A x = b to relative residual ``tol``.

    Returns ``(x, info)`` with ``info = {"iterations", "residual"}``; raises
    :class:`SolverError` when ``maxiter`` is exhausted.
    """
    b = np.asarray(b, dtype=float)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        bnorm = 1.0
        if x0 is None:
            return x, {"iterations": 0, "residual": 0.0}
    M = M or (lambda r: r)
    r = b - A @ x
    res = float(np.linalg.norm(r)) / bnorm
    if res <= tol:
        return x, {"iterations": 0, "residual": res}
    z = M(r)
    p = z.copy()
    rz = float(r @ z)
    for it in range(1, maxiter + 1):
        Ap = A @ p
        alpha = rz / float(p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        res = float(np.linalg.norm(r)) / bnorm
        if res <= tol:
            return x, {"iterations": it, "residual": res}
        z = M(r)
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverError("PCG did not converge", res, maxiter)
