"""Scenario orchestration: shells, verdicts, measure estimates and the agreement record."""
from __future__ import annotations

import math
import platform
import time
import traceback
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .. import __version__
from ..capacity import (CapacityEstimate, capacity, delta_sweep, polar_limit, shell_capacities)
from ..geometry import lambda_shell, truncate, with_delta
from ..solver import field_from_spec, harmonic_measure_pde
from ..stochastic import WosParams, recurrence_experiment, wos_escape
from ..wiener import (CONVERGES, DIVERGES, ClassifierConfig, integral_form, lambda_form,
                      wiener_report)
from .config import ScenarioConfig, build_obstacle

__all__ = ["RunReport", "run_scenario", "measure_class", "agreement_record", "polar_gammas",
           "VERDICT_CLASS", "STAGES"]

VERDICT_CLASS = {DIVERGES: "regular", CONVERGES: "irregular"}
STAGES = ("shells", "verdict", "operator", "lambda_form", "integral_form",
          "measure_pde", "measure_wos", "recurrence", "agreement")


@dataclass
class RunReport:
    scenario: dict
    stages: dict = field(default_factory=dict)
    shells: list = field(default_factory=list)
    wiener: dict = field(default_factory=dict)
    operator: dict | None = None
    forms: dict = field(default_factory=dict)
    measures: dict = field(default_factory=dict)
    measure_class: dict | None = None
    agreement: dict | None = None
    recurrence: dict | None = None
    provenance: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    def __post_init__(self):
        self.artifacts = {}      # large in-memory results, never serialised

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def verdict(self) -> str | None:
        return (self.wiener.get("dyadic") or {}).get("verdict")

    @property
    def ok(self) -> bool:
        return all(s["status"] != "failed" for s in self.stages.values())


def _wos_params(cfg: ScenarioConfig, n_paths: int, stream: int, **kw) -> WosParams:
    b = cfg.budget
    return WosParams(n_paths=int(n_paths), seed=int(cfg.seed), max_steps=int(b["max_steps"]),
                     block_size=int(b["block_size"]), workers=int(b["workers"]), stream=stream, **kw)


def polar_gammas(estimates) -> list[CapacityEstimate]:
    """Replace swept estimates by their delta -> 0 limit when the sweep says polar."""
    out = []
    for e in estimates:
        sw = e.meta.get("sweep")
        if sw and sw.get("polar"):
            out.append(CapacityEstimate(0.0, 0.0, 0.0, e.method, e.samples_or_cells, e.seed,
                                        {"n": e.meta.get("n"), "polar_limit": True,
                                         "finest_delta_value": e.value}))
        else:
            out.append(e)
    return out


def _swept(region, deltas, method, **kw) -> CapacityEstimate:
    if region.is_empty:
        return CapacityEstimate(0.0, 0.0, 0.0, method, 0, None, {"empty": True})
    if not deltas:
        return capacity(region, method, **kw)
    sw = delta_sweep(region, deltas, method, **kw)
    fine = sw["estimates"][int(np.argmin(deltas))]
    sweep = {k: v for k, v in sw.items() if k != "estimates"}
    if sw["polar"]:
        return CapacityEstimate(0.0, 0.0, 0.0, method, fine["samples_or_cells"], fine["seed"],
                                {"polar_limit": True, "finest_delta_value": fine["value"],
                                 "sweep": sweep})
    return CapacityEstimate(fine["value"], fine["ci_low"], fine["ci_high"], method,
                            fine["samples_or_cells"], fine["seed"], dict(fine["meta"], sweep=sweep))


def _monotone(ests):
    """Running maximum of c(rho) where a decrease stays inside the intervals.

    c(rho) is nondecreasing; independent Monte Carlo values can dip within
    noise.  A decrease beyond the intervals is left for the form to reject.
    """
    out = [ests[0]]
    for e in ests[1:]:
        prev = out[-1]
        if e.value < prev.value and e.ci_high >= prev.ci_low:
            e = CapacityEstimate(prev.value, min(e.ci_low, prev.value), max(e.ci_high, prev.value),
                                 e.method, e.samples_or_cells, e.seed,
                                 dict(e.meta, monotone_adjusted=True))
        out.append(e)
    return out


def measure_class(estimate: float, values, tau0: float = 0.1, tau1: float = 0.5,
                  flat_tol: float = 0.1) -> dict:
    """regular / irregular / unclassified from a final estimate and its R-sequence.

    ``values`` are the truncated approximants for increasing R.  "Decreasing"
    means every step drops; "flat" means the last relative drop is at most
    ``flat_tol``.
    """
    v = [float(x) for x in values]
    drops = [(a - b) / a if a > 0 else 0.0 for a, b in zip(v, v[1:])]
    decreasing = len(v) >= 2 and all(b < a for a, b in zip(v, v[1:]))
    flat = bool(drops) and drops[-1] <= flat_tol
    if estimate <= tau0 and decreasing:
        cls = "regular"
    elif estimate >= tau1 and flat:
        cls = "irregular"
    else:
        cls = "unclassified"
    return {"class": cls, "estimate": float(estimate), "relative_drops": drops,
            "decreasing": bool(decreasing), "flat": flat,
            "thresholds": {"tau0": tau0, "tau1": tau1, "flat_tol": flat_tol}}


def agreement_record(verdict: str | None, mclass: str | None) -> dict:
    vc = VERDICT_CLASS.get(verdict)
    if vc is None or mclass not in ("regular", "irregular"):
        result = "unclassified"
    else:
        result = "match" if vc == mclass else "mismatch"
    return {"verdict": verdict, "verdict_class": vc, "measure_class": mclass, "result": result}


class _Stage:
    """Times one stage and records ok / failed / skipped."""

    def __init__(self, report: RunReport, name: str, needs=()):
        self.report, self.name, self.needs = report, name, needs
        self.skip = [n for n in needs if report.stages.get(n, {}).get("status") != "ok"]

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, et, exc, tb):
        self.report.timings[self.name] = round(time.perf_counter() - self.t0, 3)
        if exc is None:
            self.report.stages[self.name] = {"status": "ok"}
            return False
        if not isinstance(exc, Exception):
            return False
        self.report.stages[self.name] = {
            "status": "failed", "error": f"{type(exc).__name__}: {exc}",
            "where": traceback.extract_tb(tb)[-1].name}
        return True


def _skip(report, name, reason):
    report.stages[name] = {"status": "skipped", "error": reason}


def _measure_pde(cfg, obstacle, report, keep=False):
    m = cfg.measure
    fld = field_from_spec(m.get("field"), cfg.dimension)
    res = harmonic_measure_pde(obstacle, m["point"], m.get("radii"), fld, m["tol"],
                               growth=m["growth"], refine=m["refine"], keep_potential=keep)
    if keep:
        report.artifacts["pde_potential"] = res.potential
    d = res.to_dict()
    d["field"] = fld.describe()
    d["class"] = measure_class(res.estimate, res.values, **cfg.agreement)
    return d


def _measure_wos(cfg, obstacle, report, keep=False):
    m = cfg.measure
    kw = {"eps_shell": m["eps_shell"]}
    if m.get("escape_radius"):
        kw["escape_radius"] = float(m["escape_radius"])
    deltas = cfg.deltas
    if not deltas:
        est = wos_escape(obstacle, m["point"], _wos_params(cfg, m["n_paths"], 7, **kw))
        d = est.to_dict()
        d["class"] = measure_class(est.p, [r["p"] for r in est.raw], **cfg.agreement)
        return d
    # thin set: escape probability at each thickness and its delta -> 0 limit
    rows = []
    for k, dl in enumerate(sorted(deltas, reverse=True)):
        est = wos_escape(with_delta(obstacle, dl), m["point"],
                         _wos_params(cfg, m["n_paths"], 70 + k, **kw))
        rows.append(dict(est.to_dict(), delta=dl))
    fine = rows[-1]
    fit = polar_limit([r["delta"] for r in rows], [1.0 - r["p"] for r in rows],
                      [1.0 - r["ci_high"] for r in rows], [1.0 - r["ci_low"] for r in rows])
    d = {k: fine[k] for k in ("raw", "n_paths", "seed", "exhausted", "warnings")}
    d["finest_delta"] = {k: fine[k] for k in ("p", "ci_low", "ci_high", "delta")}
    d["sweep"] = {"deltas": [r["delta"] for r in rows], "p": [r["p"] for r in rows],
                  "ci_low": [r["ci_low"] for r in rows], "ci_high": [r["ci_high"] for r in rows],
                  "hit_fit": {k: fit[k] for k in ("a", "b", "polar", "strictly_decreasing")}}
    if fit["polar"]:
        # the set is polar in the limit: nothing is hit, so the measure tends to 1
        d.update({"p": 1.0, "ci_low": fine["ci_low"], "ci_high": 1.0, "polar_limit": True})
    else:
        d.update({"p": fine["p"], "ci_low": fine["ci_low"], "ci_high": fine["ci_high"],
                  "polar_limit": False})
    d["extrapolated"] = True
    d["class"] = measure_class(d["p"], [r["p"] for r in fine["raw"]], **cfg.agreement)
    return d


def _combine_classes(measures: dict) -> dict | None:
    classes = {r: m["class"]["class"] for r, m in measures.items() if "class" in m}
    if not classes:
        return None
    decided = {c for c in classes.values() if c != "unclassified"}
    if len(decided) == 1 and len(set(classes.values())) == 1:
        cls = decided.pop()
    elif len(decided) == 1:
        # one route undecided: keep the decided class
        cls = decided.pop()
    else:
        cls = "unclassified"
    return {"class": cls, "per_route": classes, "conflict": len(decided) > 1}


def run_scenario(cfg: ScenarioConfig, *, stages=None, keep_potentials: bool = False) -> RunReport:
    """Run the pipeline stages in order; failures are recorded per stage.

    ``stages`` restricts the run to a subset of :data:`STAGES`.  With
    ``keep_potentials`` the PDE solution is kept in ``report.artifacts``.
    """
    wanted = set(STAGES if stages is None else stages)
    N = cfg.dimension
    ccfg = ClassifierConfig.from_dict(cfg.classifier)
    s, f = cfg.shells, cfg.forms
    report = RunReport(cfg.to_dict())
    report.provenance = {
        "seed": cfg.seed,
        "versions": _versions(),
        "budgets": {"shell_paths": s["n_paths"], "measure_paths": cfg.measure["n_paths"],
                    **cfg.budget},
        "normalisation": "kernel: cap(ball R) = R^(N-2); variational energy / kappa_N",
    }
    with _Stage(report, "obstacle"):
        obstacle = build_obstacle(cfg.obstacle, N)
        report.provenance["obstacle"] = _json_tag(obstacle.tag)
    if report.stages["obstacle"]["status"] != "ok":
        return report
    deltas = cfg.deltas
    method = s["method"]
    mc = _wos_params(cfg, s["n_paths"], 0)
    var_kw = {"growth": s["growth"], "refinements": tuple(s["refinements"])} \
        if method == "variational" else {}

    gammas = None
    if "shells" in wanted:
        with _Stage(report, "shells"):
            ests = shell_capacities(obstacle, s["n_min"], s["n_max"], method, params=mc,
                                    deltas=deltas, **var_kw)
            report.shells = [e.to_dict() for e in ests]
            gammas = polar_gammas(ests)
    if "verdict" in wanted:
        with _Stage(report, "verdict", ("shells",)) as st:
            if st.skip:
                raise RuntimeError("shell capacities unavailable")
            rep = wiener_report(gammas, N, ccfg, s["n_min"])
            d = rep.to_dict()
            if deltas:
                raw = wiener_report([CapacityEstimate(**{k: e[k] for k in (
                    "value", "ci_low", "ci_high", "method")}) for e in report.shells],
                    N, ccfg, s["n_min"])
                d["diagnostics"]["finest_delta_verdict"] = raw.verdict
                d["diagnostics"]["polar_policy"] = "verdict on delta -> 0 limits of swept shells"
            report.wiener["dyadic"] = d

    if "operator" in wanted and cfg.operator:
        with _Stage(report, "operator", ("verdict",)):
            op = cfg.operator
            fld = field_from_spec(op.get("field") or {"kind": "checkerboard", "lambda": 4.0}, N)
            n0 = op.get("n_min", s["n_min"])
            n1 = op.get("n_max", s["n_max"])
            op_deltas = op.get("deltas", deltas)
            ests = shell_capacities(obstacle, n0, n1, "variational", field=fld, deltas=op_deltas,
                                    growth=op.get("growth", 0.3),
                                    refinements=tuple(op.get("refinements", [1.0])))
            rep = wiener_report(polar_gammas(ests), N, ccfg, n0)
            laplace = report.wiener["dyadic"]["verdict"]
            report.operator = {"field": fld.describe(), "shells": [e.to_dict() for e in ests],
                               "wiener": rep.to_dict(), "laplace_verdict": laplace,
                               "verdicts_equal": rep.verdict == laplace}

    if "lambda_form" in wanted:
        with _Stage(report, "lambda_form"):
            lam = float(f["lambda"])
            ests = []
            for n in range(f["lambda_n_min"], f["lambda_n_max"] + 1):
                e = _swept(lambda_shell(obstacle, n, lam), deltas, method,
                           params=replace(mc, stream=1000 + 10 * n), **var_kw)
                e.meta = dict(e.meta, n=n)
                ests.append(e)
            rep = lambda_form(ests, lam, N, ccfg, f["lambda_n_min"])
            report.forms["lambda"] = dict(rep.to_dict(), estimates=[e.to_dict() for e in ests])
    if "integral_form" in wanted:
        with _Stage(report, "integral_form"):
            ks = list(range(f["integral_k_min"], f["integral_k_max"] + 1))
            rhos = [2.0**k for k in ks]
            ests = [_swept(truncate(obstacle, r), deltas, method,
                           params=replace(mc, stream=2000 + 10 * k), **var_kw)
                    for k, r in zip(ks, rhos)]
            rep = integral_form(rhos, _monotone(ests), N, ccfg)
            report.forms["integral"] = dict(rep.to_dict(), estimates=[e.to_dict() for e in ests])
    if report.forms or report.wiener:
        verdicts = {"dyadic": (report.wiener.get("dyadic") or {}).get("verdict")}
        verdicts.update({k: v["verdict"] for k, v in report.forms.items()})
        decided = {k: v for k, v in verdicts.items() if v is not None}
        conclusive = [v for v in decided.values() if v in VERDICT_CLASS]
        report.forms["agreement"] = {
            "verdicts": decided,
            "all_conclusive": len(conclusive) == len(decided),
            "agree": len(set(conclusive)) <= 1,
        }

    for route in cfg.measure["routes"]:
        name = f"measure_{route}"
        if name not in wanted:
            continue
        if "point" not in cfg.measure:
            _skip(report, name, "no [measure] point configured")
            continue
        with _Stage(report, name):
            fn = _measure_pde if route == "pde" else _measure_wos
            report.measures[route] = fn(cfg, obstacle, report, keep_potentials)
    report.measure_class = _combine_classes(report.measures)

    if "recurrence" in wanted and cfg.recurrence:
        with _Stage(report, "recurrence"):
            r = cfg.recurrence
            res = recurrence_experiment(obstacle, r.get("thresholds"),
                                        _wos_params(cfg, r.get("n_paths", 20000), 9),
                                        r.get("start"))
            report.recurrence = res.to_dict()

    if "agreement" in wanted and report.verdict is not None and report.measure_class is not None:
        with _Stage(report, "agreement"):
            report.agreement = agreement_record(report.verdict, report.measure_class["class"])
            report.agreement["expected_class"] = cfg.expected_class
    return report


def _versions() -> dict:
    import numpy
    import pyamg
    import scipy
    return {"wiener_inf": __version__, "numpy": numpy.__version__, "scipy": scipy.__version__,
            "pyamg": pyamg.__version__, "python": platform.python_version()}


def _json_tag(tag):
    if isinstance(tag, dict):
        return {str(k): _json_tag(v) for k, v in tag.items()}
    if isinstance(tag, (list, tuple)):
        return [_json_tag(v) for v in tag]
    if isinstance(tag, float) and not math.isfinite(tag):
        return None
    return tag
