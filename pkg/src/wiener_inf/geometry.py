"""Implicit obstacle sets, dyadic shells and the geometric queries used by the
Monte Carlo and grid engines.

Every set is described by a vectorised membership predicate and a conservative
lower bound on the Euclidean distance to the set.  Points are passed as arrays
of shape ``(M, N)`` (a single point of shape ``(N,)`` is accepted as well).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "GeometryError",
    "EmptyRegionError",
    "SetSpec",
    "Ball",
    "Tube",
    "SolidCylinder",
    "PowerThorn",
    "Union",
    "ComplementOfBall",
    "EmptySet",
    "Restricted",
    "ShellRegion",
    "make_canonical",
    "dyadic_ball_union",
    "shell",
    "annulus",
    "truncate",
    "distance_lower_bound",
    "sample_region",
    "with_delta",
    "lambda_shell",
    "CANONICAL_KINDS",
    "DEFAULT_DELTA",
]

DEFAULT_DELTA = 1e-3

# Spacing hint: (lo, hi, h) meaning "cells of width about h inside [lo, hi]".
Hint = tuple[float, float, float]


class GeometryError(ValueError):
    """Invalid shape parameters."""


class EmptyRegionError(RuntimeError):
    """Raised when a region has no points to sample."""


def as_points(X, dimension: int) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[-1] != dimension:
        raise GeometryError(f"expected points of dimension {dimension}, got shape {X.shape}")
    return X


def _merge_intervals(intervals):
    out = []
    for lo, hi in sorted(intervals):
        if out and lo <= out[-1][1]:
            out[-1] = (out[-1][0], max(out[-1][1], hi))
        else:
            out.append((lo, hi))
    return out


class SetSpec:
    """Base class for implicit closed subsets of R^N.

    Subclasses implement ``contains`` and ``distance_lb`` and describe their
    extent through ``radial_range`` (the set of values of |x| over the set, a
    union of closed intervals) and ``bbox``.
    """

    dimension: int

    def contains(self, X) -> np.ndarray:
        raise NotImplementedError

    def distance_lb(self, X) -> np.ndarray:
        raise NotImplementedError

    def radial_range(self) -> list[tuple[float, float]]:
        raise NotImplementedError

    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    @property
    def feature_size(self) -> float:
        """Smallest thickness of the set; drives absorption tolerances and grid spacing."""
        return math.inf

    @property
    def thin_delta(self) -> float | None:
        """Tube radius when the set stands for a one-dimensional (polar) object."""
        return None

    def refine_hints(self) -> list[list[Hint]]:
        return [[] for _ in range(self.dimension)]

    @property
    def tag(self) -> dict:
        raise NotImplementedError

    # -- derived queries -------------------------------------------------
    @property
    def is_empty(self) -> bool:
        return not self.radial_range()

    @property
    def bounded(self) -> bool:
        return self.outer_radius is not None

    @property
    def outer_radius(self) -> float | None:
        rr = self.radial_range()
        if not rr:
            return 0.0
        top = rr[-1][1]
        return None if math.isinf(top) else top

    def center(self) -> np.ndarray:
        lo, hi = self.bbox()
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise GeometryError("unbounded set has no center")
        return 0.5 * (lo + hi)

    def radius_about(self, c) -> float:
        """Radius of a ball about ``c`` enclosing the set (bounding-box based)."""
        lo, hi = self.bbox()
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise GeometryError("unbounded set")
        c = np.asarray(c, dtype=float)
        far = np.maximum(np.abs(lo - c), np.abs(hi - c))
        r_box = float(np.sqrt(np.sum(far**2)))
        r_origin = self.outer_radius + float(np.linalg.norm(c))
        return min(r_box, r_origin)

    def __contains__(self, x) -> bool:
        return bool(self.contains(x)[0])


def _check_dimension(N):
    if int(N) != N or N < 3:
        raise GeometryError(f"dimension must be an integer >= 3, got {N}")
    return int(N)


@dataclass(frozen=True)
class Ball(SetSpec):
    dimension: int
    center_: tuple
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise GeometryError("ball radius must be positive")
        if len(self.center_) != self.dimension:
            raise GeometryError("ball center has wrong dimension")

    def _rel(self, X):
        return np.linalg.norm(as_points(X, self.dimension) - np.asarray(self.center_), axis=1)

    def contains(self, X):
        return self._rel(X) <= self.radius

    def distance_lb(self, X):
        return np.maximum(self._rel(X) - self.radius, 0.0)

    def radial_range(self):
        c = float(np.linalg.norm(self.center_))
        return [(max(c - self.radius, 0.0), c + self.radius)]

    def bbox(self):
        c = np.asarray(self.center_, dtype=float)
        return c - self.radius, c + self.radius

    @property
    def feature_size(self):
        return self.radius

    def refine_hints(self):
        return [[(c - self.radius, c + self.radius, self.radius / 10.0)] for c in self.center_]

    @property
    def tag(self):
        return {"kind": "ball", "center": list(self.center_), "radius": self.radius}


@dataclass(frozen=True)
class Tube(SetSpec):
    """delta-neighbourhood of the axis segment {t e1 : start <= t <= end}.

    ``end = inf`` gives the thickened axis ray.
    """

    dimension: int
    start: float
    end: float
    delta: float

    def __post_init__(self):
        if not self.delta > 0:
            raise GeometryError("tube thickness delta must be positive")
        if not self.end > self.start:
            raise GeometryError("segment end must exceed its start")

    def _axis_distance(self, X):
        X = as_points(X, self.dimension)
        t = np.clip(X[:, 0], self.start, self.end)
        d2 = (X[:, 0] - t) ** 2 + np.sum(X[:, 1:] ** 2, axis=1)
        return np.sqrt(d2)

    def contains(self, X):
        return self._axis_distance(X) <= self.delta

    def distance_lb(self, X):
        return np.maximum(self._axis_distance(X) - self.delta, 0.0)

    def radial_range(self):
        if self.start <= 0.0 <= self.end:
            lo = 0.0
        else:
            lo = max(min(abs(self.start), abs(self.end)) - self.delta, 0.0)
        hi = math.hypot(max(abs(self.start), abs(self.end)), self.delta)
        return [(lo, hi)]

    def bbox(self):
        lo = np.full(self.dimension, -self.delta)
        hi = np.full(self.dimension, self.delta)
        lo[0] = self.start - self.delta
        hi[0] = self.end + self.delta
        return lo, hi

    @property
    def feature_size(self):
        return self.delta

    @property
    def thin_delta(self):
        return self.delta

    def refine_hints(self):
        d = self.delta
        axial = [(self.start - d, self.start + d, d / 3.0)]
        if math.isfinite(self.end):
            axial.append((self.end - d, self.end + d, d / 3.0))
        return [axial] + [[(-d, d, d / 3.0)] for _ in range(self.dimension - 1)]

    @property
    def tag(self):
        kind = "axis_ray" if math.isinf(self.end) else "axis_segment"
        return {"kind": kind, "start": self.start, "end": self.end, "delta": self.delta}


@dataclass(frozen=True)
class SolidCylinder(SetSpec):
    """{x : x1 >= start, |x'| <= radius}, a half-infinite solid cylinder along e1."""

    dimension: int
    radius: float
    start: float

    def __post_init__(self):
        if not self.radius > 0:
            raise GeometryError("cylinder radius must be positive")

    def _parts(self, X):
        X = as_points(X, self.dimension)
        rho = np.sqrt(np.sum(X[:, 1:] ** 2, axis=1))
        return X[:, 0], rho

    def contains(self, X):
        x1, rho = self._parts(X)
        return (x1 >= self.start) & (rho <= self.radius)

    def distance_lb(self, X):
        x1, rho = self._parts(X)
        axial = np.maximum(self.start - x1, 0.0)
        radial = np.maximum(rho - self.radius, 0.0)
        return np.hypot(axial, radial)

    def radial_range(self):
        return [(max(self.start, 0.0), math.inf)]

    def bbox(self):
        lo = np.full(self.dimension, -self.radius)
        hi = np.full(self.dimension, self.radius)
        lo[0], hi[0] = self.start, math.inf
        return lo, hi

    @property
    def feature_size(self):
        return self.radius

    def refine_hints(self):
        r = self.radius
        return [[(self.start, self.start, r / 4.0)]] + [
            [(-r, r, r / 6.0)] for _ in range(self.dimension - 1)
        ]

    @property
    def tag(self):
        return {"kind": "solid_cylinder", "radius": self.radius, "start": self.start}


@dataclass(frozen=True)
class PowerThorn(SetSpec):
    """{x : x1 >= 1, |x'| <= x1**alpha} for 0 < alpha <= 1."""

    dimension: int
    alpha: float

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise GeometryError("power_thorn exponent must lie in (0, 1]")

    def _parts(self, X):
        X = as_points(X, self.dimension)
        return X[:, 0], np.sqrt(np.sum(X[:, 1:] ** 2, axis=1))

    def contains(self, X):
        x1, rho = self._parts(X)
        with np.errstate(invalid="ignore"):
            prof = np.where(x1 >= 1.0, np.abs(x1) ** self.alpha, -1.0)
        return (x1 >= 1.0) & (rho <= prof)

    def distance_lb(self, X):
        # Intersection of {x1 >= 1} and {|x'| <= phi(x1)} with phi Lipschitz(alpha),
        # phi(t) = t^alpha for t >= 1 and its tangent line below 1.
        x1, rho = self._parts(X)
        a = self.alpha
        with np.errstate(invalid="ignore"):
            phi = np.where(x1 >= 1.0, np.abs(x1) ** a, 1.0 + a * (x1 - 1.0))
        g = (rho - phi) / math.sqrt(1.0 + a * a)
        lb = np.maximum(np.maximum(1.0 - x1, g), 0.0)
        return np.where(self.contains(X), 0.0, lb)

    def radial_range(self):
        return [(1.0, math.inf)]

    def bbox(self):
        lo = np.full(self.dimension, -math.inf)
        hi = np.full(self.dimension, math.inf)
        lo[0] = 1.0
        return lo, hi

    @property
    def feature_size(self):
        return 1.0

    def refine_hints(self):
        return [[(1.0, 1.0, 0.15)]] + [[(0.0, 0.0, 0.15)] for _ in range(self.dimension - 1)]

    @property
    def tag(self):
        return {"kind": "power_thorn", "alpha": self.alpha}


@dataclass(frozen=True)
class Union(SetSpec):
    dimension: int
    members: tuple

    def contains(self, X):
        X = as_points(X, self.dimension)
        out = np.zeros(len(X), dtype=bool)
        for m in self.members:
            out |= m.contains(X)
        return out

    def distance_lb(self, X):
        X = as_points(X, self.dimension)
        out = np.full(len(X), np.inf)
        for m in self.members:
            out = np.minimum(out, m.distance_lb(X))
        return out

    def radial_range(self):
        return _merge_intervals([iv for m in self.members for iv in m.radial_range()])

    def bbox(self):
        if not self.members:
            return np.zeros(self.dimension), np.zeros(self.dimension)
        los, his = zip(*(m.bbox() for m in self.members))
        return np.min(los, axis=0), np.max(his, axis=0)

    @property
    def feature_size(self):
        return min((m.feature_size for m in self.members), default=math.inf)

    @property
    def thin_delta(self):
        deltas = [m.thin_delta for m in self.members if m.thin_delta is not None]
        return min(deltas) if deltas else None

    def refine_hints(self):
        hints = [[] for _ in range(self.dimension)]
        for m in self.members:
            for axis, hs in enumerate(m.refine_hints()):
                hints[axis].extend(hs)
        return hints

    @property
    def tag(self):
        return {"kind": "union", "members": [m.tag for m in self.members]}


@dataclass(frozen=True)
class ComplementOfBall(SetSpec):
    """{x : |x - center| >= radius}."""

    dimension: int
    center_: tuple
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise GeometryError("radius must be positive")

    def _rel(self, X):
        return np.linalg.norm(as_points(X, self.dimension) - np.asarray(self.center_), axis=1)

    def contains(self, X):
        return self._rel(X) >= self.radius

    def distance_lb(self, X):
        return np.maximum(self.radius - self._rel(X), 0.0)

    def radial_range(self):
        return [(max(self.radius - float(np.linalg.norm(self.center_)), 0.0), math.inf)]

    def bbox(self):
        return np.full(self.dimension, -math.inf), np.full(self.dimension, math.inf)

    @property
    def feature_size(self):
        return self.radius

    @property
    def tag(self):
        return {"kind": "complement_of_ball", "center": list(self.center_), "radius": self.radius}


@dataclass(frozen=True)
class EmptySet(SetSpec):
    dimension: int

    def contains(self, X):
        return np.zeros(len(as_points(X, self.dimension)), dtype=bool)

    def distance_lb(self, X):
        return np.full(len(as_points(X, self.dimension)), np.inf)

    def radial_range(self):
        return []

    def bbox(self):
        return np.zeros(self.dimension), np.zeros(self.dimension)

    @property
    def tag(self):
        return {"kind": "empty"}


@dataclass(frozen=True)
class Restricted(SetSpec):
    """parent ∩ {r_inner <= |x| <= r_outer} (closed annulus, r_outer may be inf)."""

    parent: SetSpec
    r_inner: float
    r_outer: float

    def __post_init__(self):
        if self.r_inner < 0 or not self.r_outer > self.r_inner:
            raise GeometryError("annulus radii must satisfy 0 <= r_inner < r_outer")

    @property
    def dimension(self):
        return self.parent.dimension

    def _radius(self, X):
        return np.linalg.norm(as_points(X, self.dimension), axis=1)

    def contains(self, X):
        X = as_points(X, self.dimension)
        r = self._radius(X)
        return self.parent.contains(X) & (r >= self.r_inner) & (r <= self.r_outer)

    def distance_lb(self, X):
        X = as_points(X, self.dimension)
        if self.is_empty:
            return np.full(len(X), np.inf)
        r = self._radius(X)
        gap = np.maximum(self.r_inner - r, r - self.r_outer)
        return np.maximum(self.parent.distance_lb(X), np.maximum(gap, 0.0))

    def radial_range(self):
        out = []
        for lo, hi in self.parent.radial_range():
            lo2, hi2 = max(lo, self.r_inner), min(hi, self.r_outer)
            if lo2 <= hi2:
                out.append((lo2, hi2))
        return out

    def bbox(self):
        lo, hi = self.parent.bbox()
        return np.maximum(lo, -self.r_outer), np.minimum(hi, self.r_outer)

    @property
    def feature_size(self):
        return self.parent.feature_size

    @property
    def thin_delta(self):
        return self.parent.thin_delta

    def _active_parent(self) -> SetSpec:
        """The parent without union members that miss the annulus."""
        if not isinstance(self.parent, Union):
            return self.parent
        keep = tuple(m for m in self.parent.members
                     if any(a <= self.r_outer and b >= self.r_inner for a, b in m.radial_range()))
        return Union(self.dimension, keep) if keep else self.parent

    def refine_hints(self):
        lo, hi = self.bbox()
        hints = []
        parent = self._active_parent()
        h_cap = min(parent.feature_size / 4.0, self.r_inner / 4.0 if self.r_inner > 0 else math.inf)
        if not math.isfinite(h_cap):
            h_cap = self.r_outer / 8.0
        for axis, hs in enumerate(parent.refine_hints()):
            clipped = []
            for a, b, h in hs:
                a2, b2 = max(a, lo[axis]), min(b, hi[axis])
                if a2 <= b2:
                    clipped.append((a2, b2, h))
            for r in (self.r_inner, self.r_outer):
                for s in (-r, r):
                    if math.isfinite(r) and r > 0 and lo[axis] <= s <= hi[axis]:
                        clipped.append((s, s, h_cap))
            hints.append(clipped)
        return hints

    @property
    def tag(self):
        return {"kind": "restricted", "parent": self.parent.tag,
                "r_inner": self.r_inner, "r_outer": self.r_outer}


@dataclass(frozen=True)
class ShellRegion(Restricted):
    """E_n = set ∩ {2^(n-1) <= |x| <= 2^n}, or a general annulus when ``index`` is None."""

    index: int | None = None

    @property
    def tag(self):
        t = super().tag
        t["kind"] = "shell"
        t["index"] = self.index
        return t


CANONICAL_KINDS = (
    "ball",
    "axis_ray",
    "axis_segment",
    "solid_cylinder",
    "power_thorn",
    "dyadic_ball_union",
    "union",
    "complement_of_ball",
    "empty",
)


def _center_and_radius(params, N, kind):
    if len(params) == 1:
        center, R = (0.0,) * N, params[0]
    elif len(params) == N + 1:
        center, R = tuple(float(p) for p in params[:N]), params[N]
    else:
        raise GeometryError(f"{kind} takes [R] or [c_1..c_N, R], got {len(params)} values")
    if not R > 0:
        raise GeometryError(f"{kind} radius must be positive")
    return center, float(R)


def make_canonical(kind: str, params: Sequence[float] = (), dimension: int = 3,
                   delta: float | None = None, members: Sequence[SetSpec] = ()) -> SetSpec:
    """Build a canonical obstacle set.

    kind / params:
      ball                [R] or [c_1..c_N, R]
      axis_ray            [start]               thickened by ``delta``
      axis_segment        [start, end]          thickened by ``delta``
      solid_cylinder      [radius, start]
      power_thorn         [alpha]               0 < alpha <= 1
      dyadic_ball_union   [n0, r_n0, r_n0+1, ...] balls of radius r_n centred at 2^n e1
      union               members=...
      complement_of_ball  [R] or [c_1..c_N, R]
      empty               []
    """
    N = _check_dimension(dimension)
    params = [float(p) for p in params]

    def need(k):
        if len(params) != k:
            raise GeometryError(f"{kind} takes {k} parameter(s), got {len(params)}")

    if kind == "ball":
        c, R = _center_and_radius(params, N, kind)
        return Ball(N, c, R)
    if kind == "complement_of_ball":
        c, R = _center_and_radius(params, N, kind)
        return ComplementOfBall(N, c, R)
    if kind == "axis_ray":
        need(1)
        return Tube(N, params[0], math.inf, DEFAULT_DELTA if delta is None else float(delta))
    if kind == "axis_segment":
        need(2)
        return Tube(N, params[0], params[1], DEFAULT_DELTA if delta is None else float(delta))
    if kind == "solid_cylinder":
        need(2)
        return SolidCylinder(N, params[0], params[1])
    if kind == "power_thorn":
        need(1)
        return PowerThorn(N, params[0])
    if kind == "dyadic_ball_union":
        if len(params) < 2 or params[0] != int(params[0]):
            raise GeometryError("dyadic_ball_union takes [n0, r_n0, r_n0+1, ...]")
        n0 = int(params[0])
        return dyadic_ball_union(N, {n0 + k: r for k, r in enumerate(params[1:])})
    if kind == "union":
        if any(m.dimension != N for m in members):
            raise GeometryError("union members must share the dimension")
        return Union(N, tuple(members))
    if kind == "empty":
        need(0)
        return EmptySet(N)
    raise GeometryError(f"unknown canonical kind {kind!r}")


def dyadic_ball_union(dimension: int, radii: dict[int, float]) -> Union:
    balls = []
    for n, r in sorted(radii.items()):
        if not r > 0:
            raise GeometryError("dyadic_ball_union radii must be positive")
        c = [0.0] * dimension
        c[0] = 2.0**n
        balls.append(Ball(dimension, tuple(c), float(r)))
    return Union(dimension, tuple(balls))


def shell(set_: SetSpec, n: int) -> ShellRegion:
    if n < 1:
        raise GeometryError("shell index must be >= 1")
    return ShellRegion(set_, 2.0 ** (n - 1), 2.0**n, index=int(n))


def annulus(set_: SetSpec, r_inner: float, r_outer: float) -> ShellRegion:
    return ShellRegion(set_, float(r_inner), float(r_outer), index=None)


def truncate(set_: SetSpec, rho: float) -> Restricted:
    """set ∩ {|x| <= rho}, the obstacle seen by the cumulative capacity c(rho)."""
    if not rho > 0:
        raise GeometryError("truncation radius must be positive")
    return Restricted(set_, 0.0, float(rho))


def distance_lower_bound(set_: SetSpec, x) -> np.ndarray | float:
    X = np.asarray(x, dtype=float)
    d = set_.distance_lb(X)
    return float(d[0]) if X.ndim == 1 else d


def sample_region(region: SetSpec, count: int, seed: int, *,
                  max_draws: int = 2_000_000, min_acceptance: float = 1e-4) -> np.ndarray:
    """Uniform rejection sample of ``count`` points of a bounded region.

    Proposals are drawn from the region's bounding box.  Gives up with
    :class:`EmptyRegionError` when the region is empty, or when the observed
    acceptance rate falls below ``min_acceptance`` after ``max_draws`` proposals.
    """
    if count < 1:
        raise GeometryError("count must be >= 1")
    if region.is_empty:
        raise EmptyRegionError("region is empty")
    lo, hi = region.bbox()
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise GeometryError("sample_region needs a bounded region")
    rng = np.random.default_rng(seed)
    accepted = []
    n_acc = n_drawn = 0
    batch = max(1024, 4 * count)
    while n_acc < count:
        if n_drawn >= max_draws:
            rate = n_acc / max(n_drawn, 1)
            if rate < min_acceptance or n_acc == 0:
                raise EmptyRegionError(
                    f"acceptance rate {rate:.2e} below floor after {n_drawn} draws")
            max_draws *= 2
        P = lo + (hi - lo) * rng.random((batch, region.dimension))
        keep = P[region.contains(P)]
        accepted.append(keep)
        n_acc += len(keep)
        n_drawn += batch
    return np.concatenate(accepted)[:count]


def with_delta(set_: SetSpec, delta: float) -> SetSpec:
    """Copy of ``set_`` with every thickened one-dimensional piece at thickness ``delta``."""
    if isinstance(set_, Tube):
        return Tube(set_.dimension, set_.start, set_.end, float(delta))
    if isinstance(set_, Union):
        return Union(set_.dimension, tuple(with_delta(m, delta) for m in set_.members))
    if isinstance(set_, ShellRegion):
        return ShellRegion(with_delta(set_.parent, delta), set_.r_inner, set_.r_outer, set_.index)
    if isinstance(set_, Restricted):
        return Restricted(with_delta(set_.parent, delta), set_.r_inner, set_.r_outer)
    return set_


def lambda_shell(set_: SetSpec, n: int, lam: float) -> ShellRegion:
    """set ∩ {lam^-n <= |x|^(2-N) <= lam^(-n+1)}, a level band of the radial fundamental profile."""
    if not lam > 1:
        raise GeometryError("lambda must exceed 1")
    N = set_.dimension
    r_in = lam ** ((n - 1) / (N - 2))
    r_out = lam ** (n / (N - 2))
    return ShellRegion(set_, float(r_in), float(r_out), index=int(n))
