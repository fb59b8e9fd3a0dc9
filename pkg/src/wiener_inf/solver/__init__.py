"""Finite-volume solver for divergence-form operators on graded grids."""
from .fields import (CoefficientField, cellwise_random, checkerboard, constant_tensor,
                     field_from_spec, identity)
from .grid import (INTERIOR, OBSTACLE, OUTER, BoxDomain, Grid, GridTooLargeError,
                   SphereDomain, build_grid, graded_axis)
from .gridfunction import GridFunction
from .pcg import SolverError, make_preconditioner, pcg
from .problems import (CapacitaryPotential, DomainError, HarmonicMeasurePDE,
                       capacitary_potential, discrete_green, exterior_grid, green_function,
                       harmonic_measure_pde, kappa, solve_dirichlet, tail_extrapolate)
from .scheme import BoundaryData, System, build_system

__all__ = [
    "CoefficientField", "cellwise_random", "checkerboard", "constant_tensor", "field_from_spec",
    "identity", "INTERIOR", "OBSTACLE", "OUTER", "BoxDomain", "Grid", "GridTooLargeError",
    "SphereDomain", "build_grid", "graded_axis", "GridFunction", "SolverError",
    "make_preconditioner", "pcg", "CapacitaryPotential", "DomainError", "HarmonicMeasurePDE",
    "capacitary_potential", "discrete_green", "exterior_grid", "green_function",
    "harmonic_measure_pde", "kappa", "solve_dirichlet", "tail_extrapolate", "BoundaryData",
    "System", "build_system",
]
