import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from wiener_inf.geometry import make_canonical
from wiener_inf.solver import (BoundaryData, GridFunction, checkerboard, constant_tensor,
                               exterior_grid, harmonic_measure_pde, identity, kappa,
                               solve_dirichlet, tail_extrapolate)
from wiener_inf.solver.grid import INTERIOR
from wiener_inf.solver.pcg import SolverError, make_preconditioner, pcg
from wiener_inf.solver.scheme import build_system

BALL = make_canonical("ball", [1.0])


def _grid(obstacle=BALL, radius=6.0, growth=0.5):
    return exterior_grid(obstacle, np.array([2.0, 0.0, 0.0]), radius, growth=growth)


def _data(a, b, c):
    return lambda X: np.sin(a * X[:, 0]) + np.cos(b * X[:, 1]) + c * X[:, 2]


def test_kappa():
    assert math.isclose(kappa(3), 4 * math.pi)
    assert math.isclose(kappa(4), 2 * 2 * math.pi**2)


def test_tail_extrapolate_exact_for_pure_tail():
    u = lambda R: 0.3 + 2.0 / R
    assert math.isclose(tail_extrapolate(u(8.0), u(16.0), 3), 0.3)


@pytest.mark.parametrize("field", [identity(3), checkerboard(4.0)], ids=["identity", "checker"])
@given(a=st.floats(0.1, 3), b=st.floats(0.1, 3), c=st.floats(-1, 1))
def test_max_principle_random_data(field, a, b, c):
    g = _grid()
    bc = BoundaryData(_data(a, b, c), _data(b, a, -c))
    system = build_system(g, BALL, field)
    u = solve_dirichlet(g, field, bc, BALL, 1e-12, system=system)
    face = system.boundary_values(bc)
    vals = u.values[system.unknowns]
    assert vals.min() >= face.min() - 1e-12
    assert vals.max() <= face.max() + 1e-12


@pytest.mark.parametrize("field", [identity(3), checkerboard(2.0)], ids=["identity", "checker"])
def test_linearity_and_complement(field):
    g = _grid()
    system = build_system(g, BALL, field)
    f1, f2 = _data(1.0, 0.5, 0.2), _data(0.3, 2.0, -0.4)
    solve = lambda bc: solve_dirichlet(g, field, bc, BALL, 1e-12, system=system).values[system.unknowns]
    u1 = solve(BoundaryData(f1, f2))
    u2 = solve(BoundaryData(f2, f1))
    combo = solve(BoundaryData(lambda X: 2 * f1(X) - 3 * f2(X), lambda X: 2 * f2(X) - 3 * f1(X)))
    assert np.max(np.abs(combo - (2 * u1 - 3 * u2))) < 1e-8
    h = solve(BoundaryData(0.0, 1.0))
    hc = solve(BoundaryData(1.0, 0.0))
    assert np.max(np.abs(hc - (1.0 - h))) < 1e-8


def test_constant_data_is_reproduced():
    g = _grid()
    u = solve_dirichlet(g, checkerboard(4.0), BoundaryData(0.7, 0.7), BALL)
    assert np.allclose(u.values[u.labels == INTERIOR], 0.7, atol=1e-12)


def test_matrix_is_symmetric_m_matrix():
    g = _grid()
    s = build_system(g, BALL, checkerboard(3.0))
    A = s.A.tocsr()
    assert abs(A - A.T).max() < 1e-12
    off = A - sp.diags(A.diagonal())
    assert off.max() <= 0 and np.all(A.diagonal() > 0)
    assert np.all(np.asarray(A.sum(axis=1)).ravel() >= -1e-12)


def test_mixed_stencil_reproduces_linear_functions():
    A = [[2.0, 0.5, 0.2], [0.5, 1.5, -0.3], [0.2, -0.3, 1.0]]
    field = constant_tensor(A)
    g = exterior_grid(None, np.array([0.3, -0.2, 0.1]), 3.0, growth=0.3)
    lin = lambda X: 1.0 + 0.5 * X[:, 0] - 0.25 * X[:, 1] + 0.75 * X[:, 2]
    u = solve_dirichlet(g, field, BoundaryData(0.0, lin), None, 1e-13, mixed=True)
    inner = u.labels == INTERIOR
    exact = lin(g.cell_points()[inner])
    assert np.max(np.abs(u.values[inner] - exact)) < 1e-8


def test_mixed_stencil_diagonal_tensor_matches_two_point():
    g = _grid()
    field = constant_tensor(np.diag([1.0, 1.0, 1.0]))
    bc = BoundaryData(0.0, 1.0)
    a = solve_dirichlet(g, field, bc, BALL, 1e-12, mixed=True).values
    b = solve_dirichlet(g, identity(3), bc, BALL, 1e-12).values
    m = ~np.isnan(a)
    assert np.max(np.abs(a[m] - b[m])) < 1e-9


def test_pcg_reports_failure():
    n = 50
    A = sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1]).tocsr()
    b = np.ones(n)
    x, info = pcg(A, b, make_preconditioner(A, "jacobi"), tol=1e-12, maxiter=500)
    assert np.allclose(A @ x, b, atol=1e-9)
    with pytest.raises(SolverError):
        pcg(A, b, make_preconditioner(A, "none"), tol=1e-14, maxiter=3)


@pytest.mark.parametrize("kind", ["amg", "sa", "jacobi", "none"])
def test_preconditioners_agree(kind):
    g = _grid(growth=0.6)
    bc = BoundaryData(0.0, 1.0)
    ref = solve_dirichlet(g, identity(3), bc, BALL, 1e-12).values
    u = solve_dirichlet(g, identity(3), bc, BALL, 1e-12, precond=kind).values
    m = ~np.isnan(ref)
    assert np.max(np.abs(u[m] - ref[m])) < 1e-9


def test_gridfunction_binary_roundtrip(tmp_path):
    g = _grid(growth=0.6)
    u = solve_dirichlet(g, identity(3), BoundaryData(0.0, 1.0), BALL)
    p = u.to_binary(tmp_path / "u.grid")
    back = GridFunction.from_binary(p)
    assert np.array_equal(back.values, u.values, equal_nan=True)
    assert np.array_equal(back.labels, u.labels)
    assert all(np.array_equal(a, b) for a, b in zip(back.grid.faces, g.faces))


def test_gridfunction_value_at_cell_centre():
    g = _grid(growth=0.6)
    u = solve_dirichlet(g, identity(3), BoundaryData(0.0, 1.0), BALL)
    c = g.cell_points(np.array([g.locate([2.0, 0.0, 0.0])]))[0]
    assert u.value_at(c) == u.values[g.locate([2.0, 0.0, 0.0])]
    lo, hi = u.interior_range()
    assert 0.0 <= lo <= hi <= 1.0


def test_slice_csv(tmp_path):
    g = _grid(growth=0.6)
    u = solve_dirichlet(g, identity(3), BoundaryData(0.0, 1.0), BALL)
    p = u.slice_csv(tmp_path / "s.csv", axis=2, coord=0.0)
    assert p.read_text().splitlines()[0].startswith("x")


def test_harmonic_measure_sequence_nonincreasing():
    res = harmonic_measure_pde(BALL, [2.0, 0.0, 0.0], [4.0, 8.0, 16.0], growth=0.4)
    assert res.nonincreasing and res.extrapolated
    assert all(b <= a for a, b in zip(res.values, res.values[1:]))
    assert abs(res.estimate - 0.5) < 0.03


def test_harmonic_measure_point_in_obstacle():
    from wiener_inf.solver import DomainError
    with pytest.raises(DomainError):
        harmonic_measure_pde(BALL, [0.5, 0.0, 0.0])
