import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wiener_inf.geometry import (CANONICAL_KINDS, EmptyRegionError, GeometryError, Restricted,
                                 annulus, distance_lower_bound, lambda_shell, make_canonical,
                                 sample_region, shell, truncate, with_delta)

SHAPES = [
    ("ball", [1.5]),
    ("ball", [3.0, -1.0, 0.5, 2.0]),
    ("axis_ray", [1.0]),
    ("axis_segment", [1.0, 6.0]),
    ("solid_cylinder", [1.0, 0.0]),
    ("power_thorn", [1.0]),
    ("power_thorn", [0.5]),
    ("dyadic_ball_union", [1, 1.0, 1.5, 2.0, 3.0]),
    ("complement_of_ball", [20.0]),
]

coord = st.floats(-40, 40, allow_nan=False)
point = st.tuples(coord, coord, coord)


def _shape(kind, params):
    return make_canonical(kind, params, 3, delta=0.05 if "axis" in kind else None)


@pytest.mark.parametrize("kind,params", SHAPES)
@given(x=point, seed=st.integers(0, 2**31))
def test_distance_lower_bound_never_exceeds_true_distance(kind, params, x, seed):
    s = _shape(kind, params)
    # points of the set near 0: sample a bounded piece
    region = Restricted(s, 0.0, 48.0)
    if region.is_empty:
        return
    Y = sample_region(region, 64, seed)
    d = distance_lower_bound(s, np.array(x))
    assert d >= 0
    assert d <= np.min(np.linalg.norm(Y - np.array(x), axis=1)) + 1e-9


@pytest.mark.parametrize("kind,params", SHAPES)
@given(x=point)
def test_distance_zero_inside(kind, params, x):
    s = _shape(kind, params)
    if s.contains(np.array(x))[0]:
        assert distance_lower_bound(s, np.array(x)) == 0.0


@given(n=st.integers(1, 12), x=point)
def test_shell_membership(n, x):
    s = make_canonical("solid_cylinder", [1.0, 0.0])
    sh = shell(s, n)
    r = math.sqrt(sum(c * c for c in x))
    expect = bool(s.contains(np.array(x))[0]) and 2.0 ** (n - 1) <= r <= 2.0**n
    assert bool(sh.contains(np.array(x))[0]) == expect


def test_bounded_set_exits_large_shells():
    b = make_canonical("ball", [1.0])
    assert shell(b, 5).is_empty
    assert not shell(make_canonical("ball", [1.5]), 1).is_empty


def test_shell_radii_and_index():
    sh = shell(make_canonical("axis_ray", [1.0]), 4)
    assert (sh.r_inner, sh.r_outer, sh.index) == (8.0, 16.0, 4)
    with pytest.raises(GeometryError):
        shell(make_canonical("ball", [1.0]), 0)


@given(n=st.integers(1, 10), lam=st.floats(1.1, 8.0))
def test_lambda_shell_is_level_band(n, lam):
    N = 3
    sh = lambda_shell(make_canonical("solid_cylinder", [1.0, 0.0]), n, lam)
    assert math.isclose(sh.r_inner ** (2 - N), lam ** (-(n - 1)), rel_tol=1e-12)
    assert math.isclose(sh.r_outer ** (2 - N), lam ** (-n), rel_tol=1e-12)


def test_lambda_shell_rejects_small_lambda():
    with pytest.raises(GeometryError):
        lambda_shell(make_canonical("ball", [1.0]), 1, 1.0)


def test_with_delta_rethickens_nested_sets():
    ray = make_canonical("axis_ray", [1.0], delta=1e-3)
    sh = with_delta(shell(ray, 3), 0.1)
    assert sh.parent.delta == 0.1 and sh.index == 3
    u = make_canonical("union", members=[ray, make_canonical("ball", [1.0])])
    assert with_delta(u, 0.2).members[0].delta == 0.2
    ball = make_canonical("ball", [1.0])
    assert with_delta(ball, 0.5) is ball


def test_truncate_and_annulus():
    c = make_canonical("solid_cylinder", [1.0, 0.0])
    t = truncate(c, 10.0)
    assert t.bounded and t.outer_radius <= 10.0 + 1e-12
    a = annulus(c, 2.0, 3.0)
    assert a.contains([[2.5, 0, 0]])[0] and not a.contains([[3.5, 0, 0]])[0]
    with pytest.raises(GeometryError):
        truncate(c, 0.0)


def test_thorn_profile():
    t = make_canonical("power_thorn", [0.5])
    assert t.contains([[16.0, 3.9, 0.0]])[0]
    assert not t.contains([[16.0, 4.1, 0.0]])[0]
    assert not t.contains([[0.5, 0.0, 0.0]])[0]


def test_dyadic_union_centres():
    u = make_canonical("dyadic_ball_union", [2, 0.5, 0.25])
    assert [m.center_[0] for m in u.members] == [4.0, 8.0]
    assert u.contains([[8.2, 0, 0]])[0] and not u.contains([[6.0, 0, 0]])[0]


def test_sample_region_points_lie_in_region():
    reg = shell(make_canonical("power_thorn", [1.0]), 3)
    Y = sample_region(reg, 200, seed=3)
    assert Y.shape == (200, 3) and np.all(reg.contains(Y))
    assert np.array_equal(Y, sample_region(reg, 200, seed=3))


def test_sample_region_empty():
    with pytest.raises(EmptyRegionError):
        sample_region(shell(make_canonical("ball", [1.0]), 6), 10, 0)
    with pytest.raises(EmptyRegionError):
        sample_region(make_canonical("empty"), 10, 0)


@pytest.mark.parametrize("bad", [("ball", [-1.0]), ("power_thorn", [1.5]), ("power_thorn", [0.0]),
                                 ("axis_segment", [3.0, 1.0]), ("nope", []), ("ball", [1, 2])])
def test_invalid_parameters(bad):
    with pytest.raises(GeometryError):
        make_canonical(*bad)


def test_dimension_below_three_rejected():
    with pytest.raises(GeometryError):
        make_canonical("ball", [1.0], dimension=2)


def test_canonical_kinds_constructible():
    params = {"ball": [1.0], "axis_ray": [1.0], "axis_segment": [1.0, 2.0],
              "solid_cylinder": [1.0, 0.0], "power_thorn": [1.0],
              "dyadic_ball_union": [1, 1.0], "union": [], "complement_of_ball": [2.0], "empty": []}
    for kind in CANONICAL_KINDS:
        s = make_canonical(kind, params[kind], 4)
        assert s.dimension == 4
        assert s.tag["kind"] in (kind, "axis_ray", "union")
