import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from wiener_inf.geometry import make_canonical
from wiener_inf.stochastic import (WosError, WosParams, _reentry_points, block_rng,
                                   recurrence_experiment, wilson, wos_escape, wos_hit_probability,
                                   write_recurrence_csv)

BALL = make_canonical("ball", [1.0])


def test_params_validation_and_blocks():
    with pytest.raises(ValueError):
        WosParams(n_paths=0)
    with pytest.raises(ValueError):
        WosParams(eps_shell=0.0)
    assert [s for _, s in WosParams(n_paths=10, block_size=4).blocks()] == [4, 4, 2]


def test_block_rng_keys():
    a = block_rng(1, 0, 1, 0).random(4)
    assert np.array_equal(a, block_rng(1, 0, 1, 0).random(4))
    for other in (block_rng(2, 0, 1, 0), block_rng(1, 1, 1, 0), block_rng(1, 0, 2, 0),
                  block_rng(1, 0, 1, 1)):
        assert not np.array_equal(a, other.random(4))


@given(n=st.integers(1, 500), data=st.data())
def test_wilson_interval_contains_estimate(n, data):
    k = data.draw(st.integers(0, n))
    lo, hi = wilson(k, n)
    assert 0.0 <= lo <= k / n <= hi <= 1.0


def test_escape_without_obstacle_is_certain():
    e = wos_escape(make_canonical("empty"), [3.0, 0.0, 0.0], WosParams(n_paths=500))
    assert e.p == 1.0


def test_escape_from_ball_matches_radial_solution():
    e = wos_escape(BALL, [3.0, 0.0, 0.0], WosParams(n_paths=20000, seed=2))
    assert e.ci_low - 0.005 <= 2.0 / 3.0 <= e.ci_high + 0.005
    assert e.raw[0]["p"] >= e.raw[1]["p"]


def test_escape_deterministic_across_worker_counts():
    p1 = WosParams(n_paths=6000, seed=4, block_size=1500, workers=1)
    p2 = WosParams(n_paths=6000, seed=4, block_size=1500, workers=2)
    a = wos_escape(BALL, [2.0, 0.0, 0.0], p1, keep_outcomes=True)
    b = wos_escape(BALL, [2.0, 0.0, 0.0], p2, keep_outcomes=True)
    assert np.array_equal(a.outcomes, b.outcomes) and a.p == b.p


def test_hit_probability_of_ball_from_sphere():
    h = wos_hit_probability(BALL, 4.0, WosParams(n_paths=20000, seed=3))
    assert h.ci_low - 0.005 <= 0.25 <= h.ci_high + 0.005


def test_reentry_law_matches_quadrature():
    r, rho0 = 3.0, 1.0
    rng = np.random.default_rng(0)
    X = np.tile([r, 0.0, 0.0], (40000, 1))
    Y = _reentry_points(rng, X, rho0)
    assert np.allclose(np.linalg.norm(Y, axis=1), rho0)
    dens = lambda t: math.sin(t) * (r * r + rho0 * rho0 - 2 * r * rho0 * math.cos(t)) ** -1.5
    mean_cos = (integrate.quad(lambda t: math.cos(t) * dens(t), 0, math.pi)[0]
                / integrate.quad(dens, 0, math.pi)[0])
    assert abs(np.mean(Y[:, 0]) / rho0 - mean_cos) < 0.01


def test_exhausted_paths_raise():
    with pytest.raises(WosError):
        wos_escape(BALL, [2.0, 0.0, 0.0], WosParams(n_paths=200, max_steps=1))


def test_recurrence_fractions_monotone(tmp_path):
    ray = make_canonical("axis_ray", [1.0], delta=1e-2)
    res = recurrence_experiment(ray, range(0, 5), WosParams(n_paths=2000, seed=1))
    assert all(b <= a for a, b in zip(res.fractions, res.fractions[1:]))
    assert res.escape_radius == 2.0**6
    lines = write_recurrence_csv(res, tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "m,fraction,ci_low,ci_high" and len(lines) == 6


def test_recurrence_bounded_set_dies_out():
    res = recurrence_experiment(BALL, range(0, 4), WosParams(n_paths=2000, seed=1))
    assert res.fractions[-1] == 0.0 and res.trend == "to_zero" and res.bounded
