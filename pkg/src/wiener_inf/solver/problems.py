"""Dirichlet solves, capacitary potentials, discrete Green functions and the
PDE route to the harmonic measure of infinity."""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .fields import CoefficientField, identity
from .grid import OBSTACLE, OUTER, Grid, SphereDomain, build_grid
from .gridfunction import GridFunction
from .pcg import make_preconditioner, pcg
from .scheme import BoundaryData, build_system

__all__ = ["kappa", "solve_dirichlet", "capacitary_potential", "CapacitaryPotential",
           "discrete_green", "green_function", "harmonic_measure_pde",
           "HarmonicMeasurePDE", "DomainError", "exterior_grid", "tail_extrapolate"]


class DomainError(ValueError):
    """Evaluation point lies inside the obstacle."""


def kappa(N: int) -> float:
    """(N-2) times the area of the unit sphere in R^N; 4 pi for N = 3."""
    return (N - 2) * 2 * math.pi ** (N / 2) / math.gamma(N / 2)


def tail_extrapolate(u_prev: float, u_last: float, N: int) -> float:
    """Limit of u_R for R -> inf from values at R and 2R assuming a c R^(2-N) tail."""
    return u_last - (u_prev - u_last) / (2.0 ** (N - 2) - 1.0)


def solve_dirichlet(grid: Grid, field: CoefficientField | None = None, bc: BoundaryData | None = None,
                    obstacle=None, tol: float = 1e-8, *, system=None, labels=None,
                    source=None, precond: str = "amg", mixed: bool = False,
                    maxiter: int = 2000) -> GridFunction:
    """Solve the finite-volume Dirichlet problem on ``grid``.

    Obstacle cells take ``bc.obstacle`` and cells outside the domain take
    ``bc.outer``.  ``source`` is an optional load vector on the unknowns.
    """
    field = field or identity(grid.dimension)
    bc = bc or BoundaryData()
    if system is None:
        system = build_system(grid, obstacle, field, labels=labels, mixed=mixed)
    u = system.cell_values(bc)
    info = {"iterations": 0, "residual": 0.0, "n_unknowns": system.n_unknowns}
    if system.n_unknowns:
        b = system.rhs(bc, source)
        g = system.boundary_values(bc)
        x0 = np.full(system.n_unknowns, 0.5 * (g.min() + g.max()) if len(g) else 0.0)
        M = make_preconditioner(system.A, precond)
        x, it = pcg(system.A, b, M, x0=x0, tol=tol, maxiter=maxiter)
        u[system.unknowns] = x
        info.update(it)
    return GridFunction(grid, u, system.labels, info)


def exterior_grid(obstacle, anchor, radius: float, *, center=None, h_anchor=None,
                  growth: float = 0.2, refine: float = 1.0, max_cells: int = 3_000_000) -> Grid:
    """Graded grid on the ball of ``radius`` about ``center`` with a cell centred at ``anchor``."""
    N = len(anchor)
    center = np.zeros(N) if center is None else np.asarray(center, dtype=float)
    hints = obstacle.refine_hints() if obstacle is not None else None
    if h_anchor is None:
        h_anchor = max(0.05, 0.1 * float(np.linalg.norm(np.asarray(anchor) - center)))
    dom = SphereDomain(tuple(float(c) for c in center), float(radius))
    return build_grid(dom, np.asarray(anchor, dtype=float), hints, h_anchor, growth, refine, max_cells)


@dataclass
class CapacitaryPotential:
    potential: GridFunction
    energy: float
    outer_radius: float
    center: np.ndarray
    capacity_truncated: float      # energy / kappa_N, condenser against the outer sphere
    capacity: float                # condenser corrected to the exterior problem

    def __iter__(self):
        return iter((self.potential, self.energy))


def capacitary_potential(region, field: CoefficientField | None = None, outer_radius=None, *,
                         outer_factor: float = 4.0, tol: float = 1e-8, refine: float = 1.0,
                         growth: float = 0.2, max_cells: int = 3_000_000) -> CapacitaryPotential:
    """Potential equal to 1 on ``region`` and 0 on an outer sphere about the region.

    The sphere is centred at the region's bounding-box centre with radius
    ``outer_radius`` (default ``outer_factor`` times the enclosing radius).
    Besides the condenser capacity D/kappa_N the result carries the value
    corrected to the exterior problem, 1/cap = 1/cap_R - R^(2-N), which is
    exact for a ball concentric with the sphere.
    """
    N = region.dimension
    field = field or identity(N)
    c = region.center()
    r_E = region.radius_about(c)
    R = float(outer_radius) if outer_radius is not None else outer_factor * r_E
    if not R > r_E:
        raise ValueError("outer radius must exceed the region's enclosing radius")
    h0 = max(r_E / 10.0, 1e-12)
    grid = exterior_grid(region, c, R, center=c, h_anchor=h0, growth=growth, refine=refine,
                         max_cells=max_cells)
    bc = BoundaryData(obstacle=1.0, outer=0.0)
    system = build_system(grid, region, field)
    if not np.any(system.labels == OBSTACLE):
        u = system.cell_values(bc)
        gf = GridFunction(grid, np.where(np.isnan(u), 0.0, u), system.labels,
                          {"iterations": 0, "residual": 0.0, "n_unknowns": system.n_unknowns})
        return CapacitaryPotential(gf, 0.0, R, c, 0.0, 0.0)
    gf = solve_dirichlet(grid, field, bc, region, tol, system=system)
    D = system.energy(gf.values, bc)
    cap_R = D / kappa(N)
    cap = 1.0 / (1.0 / cap_R + R ** (2 - N)) if cap_R > 0 else 0.0
    gf.info.update({"energy": D, "grid": grid.describe()})
    return CapacitaryPotential(gf, D, R, c, cap_R, cap)


def discrete_green(grid: Grid, field: CoefficientField | None, y, tol: float = 1e-10,
                   obstacle=None, *, labels=None, system=None) -> GridFunction:
    """Green function with pole in the cell containing ``y`` and zero outer data.

    The pole cell carries the load kappa_N, so that the identity field
    reproduces |x - y|^(2-N) minus the truncation constant.
    """
    field = field or identity(grid.dimension)
    if system is None:
        system = build_system(grid, obstacle, field, labels=labels)
    cell = grid.locate(y)
    pos = np.searchsorted(system.unknowns, cell)
    if pos >= len(system.unknowns) or system.unknowns[pos] != cell:
        raise DomainError("pole must lie in an unknown cell")
    src = np.zeros(system.n_unknowns)
    src[pos] = kappa(grid.dimension)
    return solve_dirichlet(grid, field, BoundaryData(0.0, 0.0), obstacle, tol,
                           system=system, source=src)


def green_function(field: CoefficientField | None, y, R: float, *, h_pole: float = 0.05,
                   growth: float = 0.2, refine: float = 1.0, tol: float = 1e-10,
                   extrapolate: bool = True) -> GridFunction:
    """Green function of the whole space about ``y`` from truncations at R and 2R.

    Both solves share one grid, so the extrapolation
    G = G_2R + (G_2R - G_R) / (2^(N-2) - 1) acts cellwise.  It removes the
    truncation constant exactly for the Laplacian.  Values are meaningful for
    |x - y| < R.
    """
    y = np.asarray(y, dtype=float)
    N = len(y)
    field = field or identity(N)
    grid = exterior_grid(None, y, 2 * R, center=y, h_anchor=h_pole, growth=growth, refine=refine)
    big = discrete_green(grid, field, y, tol)
    if not extrapolate:
        return big
    small_grid = Grid(grid.faces, SphereDomain(tuple(y), float(R)))
    small = discrete_green(small_grid, field, y, tol)
    vals = big.values.copy()
    inside = small.labels != OUTER
    vals[inside] = big.values[inside] + (big.values[inside] - small.values[inside]) / (2.0 ** (N - 2) - 1)
    info = {"R": R, "iterations": [small.info["iterations"], big.info["iterations"]],
            "grid": grid.describe()}
    return GridFunction(grid, vals, small.labels, info)


@dataclass
class HarmonicMeasurePDE:
    point: list
    radii: list
    values: list
    estimate: float
    extrapolated: bool
    nonincreasing: bool
    grid: dict = dc_field(default_factory=dict)
    iterations: list = dc_field(default_factory=list)
    potential: GridFunction | None = dc_field(default=None, repr=False)

    @property
    def last(self) -> float:
        return self.values[-1]

    def trend(self) -> list[float]:
        """Relative drop between successive radii."""
        v = np.asarray(self.values)
        with np.errstate(divide="ignore", invalid="ignore"):
            return [float(d) for d in np.where(v[:-1] > 0, (v[:-1] - v[1:]) / v[:-1], 0.0)]

    def to_dict(self):
        return {"point": self.point, "radii": self.radii, "values": self.values,
                "estimate": self.estimate, "extrapolated": self.extrapolated,
                "nonincreasing": self.nonincreasing, "grid": self.grid,
                "iterations": self.iterations}


def harmonic_measure_pde(obstacle, x, radii=None, field: CoefficientField | None = None,
                         tol: float = 1e-8, *, n_radii: int = 5, growth: float = 0.2,
                         refine: float = 1.0, h_anchor=None, max_cells: int = 3_000_000,
                         keep_potential: bool = False) -> HarmonicMeasurePDE:
    """Truncated approximants u_R(x) of the harmonic measure of infinity.

    u_R solves the scheme with value 1 on the sphere |x| = R and 0 on the
    obstacle.  All radii share one grid built for the largest R, so the
    discrete sequence is nonincreasing by the maximum principle.  The
    estimate applies the R^(2-N) tail extrapolation to the last two radii.
    ``keep_potential`` retains the solution for the largest radius.
    """
    x = np.asarray(x, dtype=float)
    N = len(x)
    field = field or identity(N)
    if obstacle is not None and obstacle.contains(x)[0]:
        raise DomainError(f"point {x.tolist()} lies in the obstacle")
    if radii is None:
        R1 = 2.0 ** math.ceil(math.log2(max(2.0 * float(np.linalg.norm(x)), 2.0)))
        radii = [R1 * 2.0**k for k in range(n_radii)]
    radii = [float(r) for r in radii]
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise ValueError("radii must be increasing")
    if radii[0] < 2 * np.linalg.norm(x):
        raise ValueError("the first radius must be at least 2|x|")
    grid = exterior_grid(obstacle, x, radii[-1], h_anchor=h_anchor, growth=growth,
                         refine=refine, max_cells=max_cells)
    cell = grid.locate(x)
    bc = BoundaryData(obstacle=0.0, outer=1.0)
    values, iters = [], []
    for R in radii:
        g = Grid(grid.faces, SphereDomain((0.0,) * N, R))
        gf = solve_dirichlet(g, field, bc, obstacle, tol)
        values.append(float(gf.values[cell]))
        iters.append(gf.info["iterations"])
    nonincreasing = all(b <= a + 10 * tol for a, b in zip(values, values[1:]))
    if len(values) >= 2:
        est = float(np.clip(tail_extrapolate(values[-2], values[-1], N), 0.0, 1.0))
        extrapolated = True
    else:
        est, extrapolated = values[-1], False
    return HarmonicMeasurePDE(x.tolist(), radii, values, est, extrapolated, nonincreasing,
                              grid.describe(), iters, gf if keep_potential else None)
