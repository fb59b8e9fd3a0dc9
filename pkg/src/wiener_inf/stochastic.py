"""Walk-on-spheres engine for Brownian escape, hitting and recurrence statistics.

Paths are simulated in fixed-size blocks.  Block ``b`` draws from a Philox
stream keyed by ``(seed, b)``, so every estimate is a pure function of the
inputs and the seed and does not depend on how blocks are spread over
worker processes.
"""
from __future__ import annotations

import csv
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import binomtest

from .geometry import EmptySet, Restricted, SetSpec, as_points

__all__ = ["WosParams", "EscapeEstimate", "HitEstimate", "RecurrenceResult", "WosError",
           "WosReliabilityWarning", "wos_escape", "wos_hit_probability",
           "recurrence_experiment", "wilson", "block_rng", "write_recurrence_csv"]

WARN_EXHAUSTED = 0.01
FAIL_EXHAUSTED = 0.10
_KERNEL_SALT = {"escape": 1, "hit": 2, "recurrence": 3}


class WosError(RuntimeError):
    """Too many paths ran out of steps for the estimate to be trusted."""


class WosReliabilityWarning(UserWarning):
    pass


@dataclass(frozen=True)
class WosParams:
    n_paths: int = 100_000
    seed: int = 0
    eps_shell: float = 1e-3        # absorption tolerance relative to max(1, |x|)
    eps_feature: float = 1e-2      # cap relative to the set's feature size
    escape_radius: float | None = None
    max_steps: int = 20_000
    block_size: int = 4096
    workers: int = 1
    stream: int = 0                # separates independent runs sharing a seed

    def __post_init__(self):
        if not self.eps_shell > 0 or not self.eps_feature > 0:
            raise ValueError("absorption tolerances must be positive")
        if self.n_paths < 1 or self.block_size < 1 or self.max_steps < 1:
            raise ValueError("n_paths, block_size and max_steps must be positive")

    def blocks(self):
        full, rest = divmod(self.n_paths, self.block_size)
        sizes = [self.block_size] * full + ([rest] if rest else [])
        return list(enumerate(sizes))


def block_rng(seed: int, block: int, salt: int = 0, stream: int = 0) -> np.random.Generator:
    word = (int(salt) << 56) + (int(stream) << 32) + int(block)
    key = np.array([int(seed) % 2**64, word % 2**64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def wilson(k: int, n: int, level: float = 0.95) -> tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    ci = binomtest(int(k), int(n)).proportion_ci(confidence_level=level, method="wilson")
    return float(ci.low), float(ci.high)


def _directions(rng, m, N):
    g = rng.standard_normal((m, N))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def _abs_tol(obstacle, r, params):
    tol = params.eps_shell * np.maximum(1.0, r)
    fs = obstacle.feature_size
    if math.isfinite(fs):
        tol = np.minimum(tol, params.eps_feature * fs)
    return tol


def _distance(obstacle, X):
    if isinstance(obstacle, EmptySet) or obstacle.is_empty:
        return np.full(len(X), np.inf)
    return obstacle.distance_lb(X)


# -- kernels (module level so worker processes can import them) ------------------

def _escape_kernel(obstacle, x, radii, params, block, size):
    """Outcome per path: number of escape radii reached (0, 1, 2) or -1 if out of steps."""
    rng = block_rng(params.seed, block, _KERNEL_SALT["escape"], params.stream)
    N = len(x)
    X = np.tile(np.asarray(x, dtype=float), (size, 1))
    level = np.zeros(size, dtype=np.int64)
    done = np.zeros(size, dtype=bool)
    act = np.arange(size)
    steps = 0
    while len(act) and steps < params.max_steps:
        Xa = X[act]
        r = np.linalg.norm(Xa, axis=1)
        d = _distance(obstacle, Xa)
        absorbed = d <= _abs_tol(obstacle, r, params)
        Rt = np.asarray(radii)[level[act]]
        gap = Rt - r
        reached = ~absorbed & (gap <= params.eps_shell * Rt)
        level[act[reached]] += 1
        finished = absorbed | (reached & (level[act] >= len(radii)))
        done[act[finished]] = True
        keep = ~finished
        act, Xa, d, r = act[keep], Xa[keep], d[keep], r[keep]
        if not len(act):
            break
        Rt = np.asarray(radii)[level[act]]
        step = np.minimum(d, Rt - r)
        X[act] = Xa + step[:, None] * _directions(rng, len(act), N)
        steps += 1
    out = level.copy()
    out[~done] = -1
    return out


def _reentry_points(rng, X, rho0):
    """Sample where paths outside the sphere |y| = rho0 first return to it.

    The hitting density on the sphere is proportional to |x - y|^-N; proposals
    are uniform on the sphere and accepted with ((|x| - rho0) / |x - y|)^N.
    """
    M, N = X.shape
    out = np.empty_like(X)
    pending = np.arange(M)
    gap = np.linalg.norm(X, axis=1) - rho0
    while len(pending):
        Y = rho0 * _directions(rng, len(pending), N)
        ratio = gap[pending] / np.linalg.norm(X[pending] - Y, axis=1)
        acc = rng.random(len(pending)) < ratio**N
        out[pending[acc]] = Y[acc]
        pending = pending[~acc]
    return out


def _hit_kernel(region, rho0, params, block, size):
    """Outcome per path started uniformly on |x| = rho0: 1 hit, 0 escaped to infinity, -1 out of steps."""
    rng = block_rng(params.seed, block, _KERNEL_SALT["hit"], params.stream)
    N = region.dimension
    X = rho0 * _directions(rng, size, N)
    out = np.full(size, -1, dtype=np.int64)
    act = np.arange(size)
    steps = 0
    while len(act) and steps < params.max_steps:
        Xa = X[act]
        r = np.linalg.norm(Xa, axis=1)
        d = _distance(region, Xa)
        hit = d <= _abs_tol(region, r, params)
        out[act[hit]] = 1
        far = ~hit & (r >= 2.0 * rho0)
        if far.any():
            back = rng.random(int(far.sum())) < (rho0 / r[far]) ** (N - 2)
            idx = np.flatnonzero(far)
            out[act[idx[~back]]] = 0
            ret = idx[back]
            if len(ret):
                Xa[ret] = _reentry_points(rng, Xa[ret], rho0)
                X[act[ret]] = Xa[ret]
        move = ~hit & ~far
        mi = act[move]
        X[mi] = Xa[move] + d[move][:, None] * _directions(rng, len(mi), N)
        finished = hit | (far & (out[act] == 0))
        act = act[~finished]
        steps += 1
    return out


def _recurrence_kernel(B, x0, thresholds, R_esc, params, block, size):
    """Highest threshold index j with a touch of B beyond 2^m_j (-1: none), and a step flag."""
    rng = block_rng(params.seed, block, _KERNEL_SALT["recurrence"], params.stream)
    N = len(x0)
    radii = 2.0 ** np.asarray(thresholds, dtype=float)
    targets = [Restricted(B, float(rt), math.inf) for rt in radii]
    X = np.tile(np.asarray(x0, dtype=float), (size, 1))
    level = np.full(size, -1, dtype=np.int64)
    done = np.zeros(size, dtype=bool)
    act = np.arange(size)
    steps = 0
    top = len(radii) - 1
    while len(act) and steps < params.max_steps:
        Xa = X[act]
        r = np.linalg.norm(Xa, axis=1)
        d = np.empty(len(act))
        lv = level[act]
        for L in np.unique(lv):
            sel = lv == L
            d[sel] = _distance(targets[L + 1], Xa[sel])
        touch = d <= _abs_tol(B, r, params)
        if touch.any():
            ti = np.flatnonzero(touch)
            beyond = np.searchsorted(radii, r[ti], side="left") - 1
            level[act[ti]] = np.maximum(lv[ti] + 1, beyond)
        escaped = (R_esc - r) <= params.eps_shell * R_esc
        finished = escaped | (level[act] >= top)
        done[act[finished]] = True
        keep = ~finished
        if touch.any():
            # recompute distances for paths whose target moved outward
            moved = keep & touch
            for L in np.unique(level[act[moved]]):
                sel = moved & (level[act] == L)
                d[sel] = _distance(targets[L + 1], Xa[sel])
        act, Xa, d, r = act[keep], Xa[keep], d[keep], r[keep]
        if not len(act):
            break
        step = np.minimum(d, R_esc - r)
        X[act] = Xa + step[:, None] * _directions(rng, len(act), N)
        steps += 1
    return np.stack([level, done.astype(np.int64)], axis=1)


def _run_blocks(kernel, args, params):
    blocks = params.blocks()
    if params.workers > 1 and len(blocks) > 1:
        with ProcessPoolExecutor(max_workers=params.workers) as ex:
            futs = [ex.submit(kernel, *args, params, b, s) for b, s in blocks]
            parts = [f.result() for f in futs]
    else:
        parts = [kernel(*args, params, b, s) for b, s in blocks]
    return np.concatenate(parts)


def _check_exhausted(n_bad, n, what):
    frac = n_bad / n
    msgs = []
    if frac > FAIL_EXHAUSTED:
        raise WosError(f"{what}: {frac:.1%} of paths exhausted max_steps")
    if frac > WARN_EXHAUSTED:
        msg = f"{what}: {frac:.1%} of paths exhausted max_steps"
        warnings.warn(msg, WosReliabilityWarning, stacklevel=3)
        msgs.append(msg)
    return msgs


# -- results ----------------------------------------------------------------------

@dataclass
class EscapeEstimate:
    p: float
    ci_low: float
    ci_high: float
    raw: list = field(default_factory=list)       # [{radius, p, ci_low, ci_high}]
    extrapolated: bool = False
    n_paths: int = 0
    seed: int | None = None
    exhausted: int = 0
    warnings: list = field(default_factory=list)
    outcomes: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self):
        d = asdict(self)
        d.pop("outcomes")
        return d


@dataclass
class HitEstimate:
    p: float
    ci_low: float
    ci_high: float
    hits: int
    n_valid: int
    rho0: float
    n_paths: int
    seed: int | None = None
    exhausted: int = 0
    warnings: list = field(default_factory=list)

    @property
    def std(self) -> float:
        n = max(self.n_valid, 1)
        return math.sqrt(max(self.p * (1 - self.p), 0.25 / n) / n)

    def to_dict(self):
        return asdict(self)


@dataclass
class RecurrenceResult:
    thresholds: list
    fractions: list
    ci_low: list
    ci_high: list
    escape_radius: float
    n_paths: int
    seed: int | None
    start: list
    trend: str
    bounded: bool
    exhausted: int = 0
    warnings: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)

    def rows(self):
        return [(m, f, lo, hi) for m, f, lo, hi in
                zip(self.thresholds, self.fractions, self.ci_low, self.ci_high)]


def write_recurrence_csv(result: RecurrenceResult, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["m", "fraction", "ci_low", "ci_high"])
        for row in result.rows():
            w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])
    return path


# -- public operations -------------------------------------------------------------

def wos_escape(obstacle: SetSpec, x, params: WosParams | None = None, *,
               keep_outcomes: bool = False) -> EscapeEstimate:
    """Probability that Brownian motion from x escapes to infinity before touching the set.

    Paths run to ``escape_radius`` R and then on to 2R; the two escaped
    fractions are combined as p = p_2R - (p_R - p_2R) / (2^(N-2) - 1), which
    removes the R^(2-N) truncation bias.  The interval is a normal interval
    on that per-path combination, clipped to [0, 1].
    """
    params = params or WosParams()
    x = as_points(x, obstacle.dimension)[0]
    N = len(x)
    rx = float(np.linalg.norm(x))
    if bool(obstacle.contains(x[None, :])[0]):
        raise ValueError(f"start point {x.tolist()} lies in the obstacle")
    R = params.escape_radius
    if R is None:
        r_set = obstacle.outer_radius if obstacle.bounded else 0.0
        R = 16.0 * max(rx, r_set or 0.0, 1.0)
    if not R > rx:
        raise ValueError("escape radius must exceed |x|")
    out = _run_blocks(_escape_kernel, (obstacle, x, (R, 2 * R)), params)
    bad = int(np.sum(out < 0))
    msgs = _check_exhausted(bad, len(out), "wos_escape")
    valid = out[out >= 0]
    n = len(valid)
    raw = []
    for k, rad in enumerate((R, 2 * R), start=1):
        hits = int(np.sum(valid >= k))
        lo, hi = wilson(hits, n)
        raw.append({"radius": rad, "p": hits / n, "ci_low": lo, "ci_high": hi})
    y1 = (valid >= 1).astype(float)
    y2 = (valid >= 2).astype(float)
    c = 1.0 / (2.0 ** (N - 2) - 1.0)
    z = y2 - c * (y1 - y2)
    p = float(z.mean())
    half = 1.96 * float(z.std(ddof=1)) / math.sqrt(n) if n > 1 else 1.0
    if half == 0.0:
        lo, hi = raw[1]["ci_low"], raw[1]["ci_high"]
    else:
        lo, hi = p - half, p + half
    pc = min(max(p, 0.0), 1.0)
    return EscapeEstimate(pc, max(0.0, min(lo, pc)), min(1.0, max(hi, pc)), raw, True,
                          params.n_paths, params.seed, bad, msgs,
                          out if keep_outcomes else None)


def wos_hit_probability(region: SetSpec, rho0: float, params: WosParams | None = None) -> HitEstimate:
    """Probability that Brownian motion from a uniform point on |x| = rho0 ever hits ``region``.

    Paths that wander past 2 rho0 return to the sphere with probability
    (rho0/|x|)^(N-2), landing at a point drawn from the exact return law, so
    no escape radius truncates the estimate.
    """
    params = params or WosParams()
    if region.is_empty:
        return HitEstimate(0.0, 0.0, 0.0, 0, params.n_paths, rho0, params.n_paths, params.seed)
    r_E = region.outer_radius
    if r_E is None:
        raise ValueError("hitting probabilities need a bounded region")
    if not rho0 > r_E:
        raise ValueError("start sphere must enclose the region")
    out = _run_blocks(_hit_kernel, (region, float(rho0)), params)
    bad = int(np.sum(out < 0))
    msgs = _check_exhausted(bad, len(out), "wos_hit_probability")
    n = int(np.sum(out >= 0))
    hits = int(np.sum(out == 1))
    lo, hi = wilson(hits, n)
    return HitEstimate(hits / n if n else 0.0, lo, hi, hits, n, float(rho0), params.n_paths,
                       params.seed, bad, msgs)


def recurrence_experiment(B: SetSpec, thresholds=None, params: WosParams | None = None,
                          start=None) -> RecurrenceResult:
    """Fraction of paths from ``start`` touching B beyond |x| = 2^m, for each m.

    Paths run until |x| reaches 2^(m_max + 2).  On every touch the target is
    moved to B beyond the next threshold, so each path records the largest
    threshold it passed inside B and the fractions are nonincreasing in m.
    """
    params = params or WosParams()
    N = B.dimension
    thresholds = sorted(int(m) for m in (thresholds if thresholds is not None else range(0, 9)))
    if not thresholds:
        raise ValueError("need at least one threshold")
    if start is None:
        start = np.zeros(N)
        start[1] = 4.0
    start = as_points(start, N)[0]
    R_esc = 2.0 ** (thresholds[-1] + 2)
    if np.linalg.norm(start) >= R_esc:
        raise ValueError("start point lies beyond the escape radius")
    out = _run_blocks(_recurrence_kernel, (B, start, thresholds, R_esc), params)
    level, done = out[:, 0], out[:, 1].astype(bool)
    bad = int(np.sum(~done))
    msgs = _check_exhausted(bad, len(out), "recurrence_experiment")
    n = len(level)
    fr, lo, hi = [], [], []
    for j in range(len(thresholds)):
        k = int(np.sum(level >= j))
        fr.append(k / n)
        a, b = wilson(k, n)
        lo.append(a)
        hi.append(b)
    trend = _recurrence_trend(fr, hi)
    return RecurrenceResult(thresholds, fr, lo, hi, R_esc, n, params.seed, start.tolist(),
                            trend, bool(B.bounded), bad, msgs)


def _recurrence_trend(fractions, ci_high, low: float = 0.1, high: float = 0.9):
    """Empirical 0-1 label of the tail: 'to_zero', 'plateau' or 'undetermined'."""
    f_last = fractions[-1]
    if ci_high[-1] <= low or f_last < low:
        return "to_zero"
    if f_last >= high:
        return "plateau"
    return "undetermined"
