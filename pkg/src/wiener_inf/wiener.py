"""Wiener series at infinity: terms, partial sums and a tail classifier.

A finite list of terms cannot decide convergence.  ``classify`` fits two tail
models, geometric decay and a power law, by CI-weighted least squares in log
space over the last two thirds of the terms and only commits to a verdict when one of the rules below fires:

* all terms zero, or zero over the whole second half  -> ConvergesIrregular
* geometric model preferred with ratio <= 1 - theta   -> ConvergesIrregular
* second-half lower bounds >= eps0                    -> DivergesRegular
* power model preferred with exponent >= -1 - power_tol -> DivergesRegular

Everything else is Inconclusive.
"""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

__all__ = ["DIVERGES", "CONVERGES", "INCONCLUSIVE", "VERDICTS", "ClassifierConfig",
           "WienerReport", "InsufficientDataError", "series_terms", "classify",
           "wiener_report", "lambda_form", "integral_form", "write_terms_csv", "read_terms_csv"]

DIVERGES = "DivergesRegular"
CONVERGES = "ConvergesIrregular"
INCONCLUSIVE = "Inconclusive"
VERDICTS = (DIVERGES, CONVERGES, INCONCLUSIVE)


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True)
class ClassifierConfig:
    theta: float = 0.2
    eps0: float | None = None       # default: max(10 * max CI width, floor_rel * max term)
    floor_rel: float = 0.1
    power_tol: float = 0.5
    min_terms: int = 6
    log_sigma_floor: float = 1e-3

    @classmethod
    def from_dict(cls, d: dict | None) -> "ClassifierConfig":
        return cls(**(d or {}))


def _triples(values):
    """Accept CapacityEstimate-like objects, (v, lo, hi) triples or plain numbers."""
    out = []
    for v in values:
        if hasattr(v, "value"):
            out.append((float(v.value), float(v.ci_low), float(v.ci_high)))
        elif np.ndim(v) == 0:
            out.append((float(v),) * 3)
        else:
            a, b, c = v
            out.append((float(a), float(b), float(c)))
    return np.array(out, dtype=float).reshape(-1, 3)


@dataclass
class WienerReport:
    dimension: int
    indices: list
    gammas: list                    # [value, lo, hi]
    terms: list
    partial_sums: list
    verdict: str | None = None
    diagnostics: dict = field(default_factory=dict)
    form: str = "dyadic"

    @property
    def term_values(self):
        return [t[0] for t in self.terms]

    def to_dict(self):
        return asdict(self)


def _validate(arr):
    if np.any(arr < 0):
        raise ValueError("capacities must be nonnegative")
    if np.any(~np.isfinite(arr)):
        raise ValueError("capacity intervals must be finite")


def _report(indices, gammas, terms, N, form):
    sums = np.cumsum(terms, axis=0)
    return WienerReport(int(N), [int(i) for i in indices], gammas.tolist(), terms.tolist(),
                        sums.tolist(), None, {}, form)


def series_terms(gammas, N: int, n_min: int | None = None, *, indices=None) -> WienerReport:
    """u_n = 2^(-n(N-2)) Gamma_n with interval bounds, and cumulative sums."""
    if indices is None:
        if gammas and hasattr(gammas[0], "meta") and "n" in gammas[0].meta:
            indices = [g.meta["n"] for g in gammas]
        else:
            start = 1 if n_min is None else n_min
            indices = list(range(start, start + len(gammas)))
    indices = [int(i) for i in indices]
    if any(b != a + 1 for a, b in zip(indices, indices[1:])):
        raise ValueError("shell indices must be consecutive")
    g = _triples(gammas)
    _validate(g)
    w = 2.0 ** (-np.asarray(indices, dtype=float) * (N - 2))
    return _report(indices, g, g * w[:, None], N, "dyadic")


def _wls(x, y, w):
    A = np.stack([np.ones_like(x), x], axis=1)
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(A * sw[:, None], y * sw, rcond=None)
    resid = y - A @ coef
    return coef, float(np.sum(w * resid**2) / np.sum(w)), resid


def classify(terms, config: ClassifierConfig | dict | None = None, indices=None) -> tuple[str, dict]:
    """Three-way verdict from the tail of the series terms; returns (verdict, diagnostics)."""
    cfg = config if isinstance(config, ClassifierConfig) else ClassifierConfig.from_dict(config)
    if isinstance(terms, WienerReport):
        indices = terms.indices if indices is None else indices
        terms = terms.terms
    t = _triples(terms)
    n_terms = len(t)
    if n_terms < cfg.min_terms:
        raise InsufficientDataError(f"need at least {cfg.min_terms} terms, got {n_terms}")
    if np.any(~np.isfinite(t)):
        raise InsufficientDataError("terms must have finite intervals")
    idx = np.arange(1, n_terms + 1, dtype=float) if indices is None else np.asarray(indices, float)
    v, lo, hi = t[:, 0], t[:, 1], t[:, 2]
    half = n_terms // 2
    diag = {"n_terms": n_terms, "config": asdict(cfg)}

    if np.all(v == 0):
        diag["rule"] = "all terms zero"
        return CONVERGES, diag
    if np.all(v[half:] == 0):
        diag["rule"] = "tail terms zero"
        return CONVERGES, diag

    width = float(np.max(hi - lo))
    eps0 = cfg.eps0 if cfg.eps0 is not None else max(10.0 * width, cfg.floor_rel * float(v.max()))
    diag["eps0"] = eps0

    # fit the tail: the last two thirds of the terms, never fewer than min_terms
    start = max(0, n_terms - max(cfg.min_terms, math.ceil(2 * n_terms / 3)))
    diag["fit_from_index"] = float(idx[start])
    pos = (v > 0) & (np.arange(n_terms) >= start)
    x, y = idx[pos], np.log(v[pos])
    with np.errstate(divide="ignore", invalid="ignore"):
        sig = (np.log(np.maximum(hi[pos], v[pos])) - np.log(np.maximum(lo[pos], 1e-300))) / (2 * 1.96)
    sig = np.where(np.isfinite(sig), sig, 10.0)
    sig = np.clip(sig, cfg.log_sigma_floor, 10.0)
    w = 1.0 / sig**2
    if len(x) >= 3:
        (ga, gb), g_mse, _ = _wls(x, y, w)
        (pa, pb), p_mse, _ = _wls(np.log(x), y, w)
        ratio, exponent = float(math.exp(gb)), float(pb)
        preferred = "geometric" if g_mse <= p_mse else "power"
        diag.update({"geometric": {"ratio": ratio, "log_intercept": float(ga), "mse": g_mse},
                     "power": {"exponent": exponent, "log_intercept": float(pa), "mse": p_mse},
                     "preferred": preferred})
        if preferred == "geometric" and ratio <= 1 - cfg.theta:
            diag["rule"] = "geometric decay"
            diag["tail_bound"] = float(v[-1] * ratio / (1 - ratio))
            return CONVERGES, diag
    else:
        preferred = None

    if np.all(lo[half:] >= eps0) and eps0 > 0:
        diag["rule"] = "bounded below"
        return DIVERGES, diag
    if preferred == "power" and exponent >= -1.0 - cfg.power_tol:
        diag["rule"] = "power law no faster than 1/n"
        return DIVERGES, diag
    if preferred == "geometric" and ratio >= 1.0:
        diag["rule"] = "non-decaying geometric fit"
        return DIVERGES, diag
    diag["rule"] = "no rule fired"
    return INCONCLUSIVE, diag


def wiener_report(gammas, N: int, config=None, n_min: int | None = None) -> WienerReport:
    rep = series_terms(gammas, N, n_min)
    rep.verdict, rep.diagnostics = classify(rep, config)
    return rep


def lambda_form(gammas, lam: float, N: int, config=None, n_min: int | None = None) -> WienerReport:
    """Terms lam^-n gamma_n for capacities of the level bands of |x|^(2-N)."""
    if not lam > 1:
        raise ValueError("lambda must exceed 1")
    if gammas and hasattr(gammas[0], "meta") and "n" in gammas[0].meta:
        indices = [g.meta["n"] for g in gammas]
    else:
        start = 1 if n_min is None else n_min
        indices = list(range(start, start + len(gammas)))
    g = _triples(gammas)
    _validate(g)
    w = float(lam) ** (-np.asarray(indices, dtype=float))
    rep = _report(indices, g, g * w[:, None], N, "lambda")
    rep.verdict, rep.diagnostics = classify(rep, config)
    rep.diagnostics["lambda"] = float(lam)
    return rep


def integral_form(rhos, cvals, N: int, config=None) -> WienerReport:
    """Trapezoidal increments of the Wiener integral of c(rho) / rho^(N-1) over [rho_k, rho_k+1].

    The integral is taken in ln(rho), where the integrand is c(rho) rho^(2-N).
    ``cvals`` must be nondecreasing up to their intervals.
    """
    rhos = np.asarray(rhos, dtype=float)
    if np.any(np.diff(rhos) <= 0) or rhos[0] < 1:
        raise ValueError("radii must be increasing and >= 1")
    c = _triples(cvals)
    _validate(c)
    if np.any(c[1:, 2] < c[:-1, 1]):
        k = int(np.flatnonzero(c[1:, 2] < c[:-1, 1])[0])
        raise ValueError(f"c(rho) decreases beyond its interval between rho={rhos[k]} and {rhos[k + 1]}")
    f = c * (rhos ** (2.0 - N))[:, None]
    dl = np.diff(np.log(rhos))[:, None]
    inc = 0.5 * dl * (f[:-1] + f[1:])
    rep = _report(range(1, len(inc) + 1), c[1:], inc, N, "integral")
    rep.diagnostics = {}
    rep.verdict, rep.diagnostics = classify(rep, config)
    rep.diagnostics["rhos"] = rhos.tolist()
    rep.diagnostics["integral"] = [float(s) for s in np.sum(inc, axis=0)]
    return rep


TERM_COLUMNS = ["n", "gamma", "gamma_low", "gamma_high", "term", "term_low", "term_high",
                "partial_sum", "partial_sum_low", "partial_sum_high"]


def write_terms_csv(report: WienerReport, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TERM_COLUMNS)
        for n, g, t, s in zip(report.indices, report.gammas, report.terms, report.partial_sums):
            w.writerow([n] + [repr(float(x)) for x in (*g, *t, *s)])
    return path


def read_terms_csv(path):
    """Terms (v, lo, hi) and indices from a shells/terms CSV.

    Accepts either the terms layout above or a bare capacity table with a
    ``gamma`` column, in which case terms are not available and the caller
    must build them from capacities.
    """
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        return [], []
    idx = [int(r["n"]) for r in rows]
    if "term" in rows[0]:
        lo_key = "term_low" if "term_low" in rows[0] else "term"
        hi_key = "term_high" if "term_high" in rows[0] else "term"
        terms = [(float(r["term"]), float(r[lo_key]), float(r[hi_key])) for r in rows]
        return idx, terms
    return idx, None
