"""Command line entry point ``wiener-inf``.

Exit codes: 0 success or match, 1 usage error, 2 mismatch, 3 unclassified,
4 a pipeline stage failed.
"""
from __future__ import annotations

import argparse
import json
import sys

from ..capacity import capacity, read_shell_csv
from ..geometry import make_canonical
from ..solver import field_from_spec
from ..stochastic import WosParams
from ..wiener import ClassifierConfig, classify, read_terms_csv, series_terms
from .config import ConfigError, default_output_dir, gallery_path, load_config
from .pipeline import run_scenario
from .report import emit_report, to_jsonable

__all__ = ["main", "EXIT_OK", "EXIT_USAGE", "EXIT_MISMATCH", "EXIT_UNCLASSIFIED", "EXIT_FAILED"]

EXIT_OK, EXIT_USAGE, EXIT_MISMATCH, EXIT_UNCLASSIFIED, EXIT_FAILED = 0, 1, 2, 3, 4
_RESULT_CODE = {"match": EXIT_OK, "mismatch": EXIT_MISMATCH, "unclassified": EXIT_UNCLASSIFIED}


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


def _scenario(path: str):
    try:
        return load_config(path)
    except ConfigError:
        g = gallery_path(path)
        if g.exists() and not path.endswith(".toml"):
            return load_config(g)
        raise


def _agreement_code(report) -> int:
    if report.agreement is None:
        return EXIT_FAILED if not report.ok else EXIT_UNCLASSIFIED
    return _RESULT_CODE[report.agreement["result"]]


def _summary(report) -> str:
    ag = report.agreement or {}
    mc = report.measure_class or {}
    parts = [f"scenario={report.scenario['name']}", f"verdict={report.verdict}",
             f"measure_class={mc.get('class')}", f"agreement={ag.get('result')}"]
    failed = [k for k, v in report.stages.items() if v["status"] == "failed"]
    if failed:
        parts.append("failed=" + ",".join(failed))
    return " ".join(parts)


def _emit(report, cfg, args):
    out = default_output_dir(cfg, args.out)
    paths = emit_report(report, out)
    if getattr(args, "dump_grids", False) and "pde_potential" in report.artifacts:
        gp = out / "pde_potential.grid"
        report.artifacts["pde_potential"].to_binary(gp)
        paths["grid"] = gp
    return paths


def cmd_run(args) -> int:
    cfg = _scenario(args.scenario)
    report = run_scenario(cfg, keep_potentials=args.dump_grids)
    paths = _emit(report, cfg, args)
    print(_summary(report))
    print(f"report written to {paths['report'].parent}")
    if args.check:
        return _agreement_code(report)
    return EXIT_OK if report.ok else EXIT_FAILED


def cmd_crosscheck(args) -> int:
    cfg = _scenario(args.scenario)
    report = run_scenario(cfg, stages=("shells", "verdict", "measure_pde", "measure_wos",
                                       "agreement"))
    if args.out:
        _emit(report, cfg, args)
    print(_summary(report))
    return _agreement_code(report)


def cmd_measure(args) -> int:
    cfg = _scenario(args.scenario)
    if args.route:
        cfg.measure["routes"] = [args.route]
    report = run_scenario(cfg, stages=tuple(f"measure_{r}" for r in cfg.measure["routes"]))
    for route, m in report.measures.items():
        est = m.get("estimate", m.get("p"))
        print(f"{route}: estimate={est:.6g} class={m['class']['class']}")
    for name, st in report.stages.items():
        if st["status"] != "ok":
            print(f"{name}: {st['status']}: {st.get('error', '')}", file=sys.stderr)
    if args.json:
        print(json.dumps(to_jsonable(report.measures), sort_keys=True, indent=1))
    return EXIT_OK if report.ok else EXIT_FAILED


def cmd_capacity(args) -> int:
    region = make_canonical(args.shape, args.params, args.dimension, args.delta)
    kw = {}
    params = None
    if args.method == "hitting_mc":
        params = WosParams(n_paths=args.n_paths, seed=args.seed, workers=args.workers)
        if args.rho0:
            kw["rho0"] = args.rho0
    fld = None
    if args.field != "identity":
        fld = field_from_spec({"kind": args.field, "lambda": args.lam}, args.dimension)
    if args.method == "variational":
        kw["refinements"] = tuple(args.refinements)
    est = capacity(region, args.method, field=fld, params=params, **kw)
    print(f"capacity={est.value:.6g} ci=[{est.ci_low:.6g}, {est.ci_high:.6g}] method={est.method}")
    if args.json:
        print(json.dumps(to_jsonable(est.to_dict()), sort_keys=True, indent=1))
    return EXIT_OK


def cmd_verdict(args) -> int:
    idx, terms = read_terms_csv(args.csv)
    if terms is None:
        rep = series_terms(read_shell_csv(args.csv), args.dimension)
        terms, idx = rep.terms, rep.indices
    verdict, diag = classify(terms, ClassifierConfig(), idx)
    print(verdict)
    if args.json:
        print(json.dumps(to_jsonable(diag), sort_keys=True, indent=1))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="wiener-inf", description="Regularity of infinity: Wiener series and "
                "harmonic measure cross-checks.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def scenario_cmd(name, fn, help_):
        s = sub.add_parser(name, help=help_)
        s.add_argument("scenario", help="scenario TOML file or gallery name")
        s.add_argument("--out", help="output directory (default $WIENER_INF_OUT/<name>)")
        s.set_defaults(fn=fn)
        return s

    r = scenario_cmd("run", cmd_run, "run the full pipeline and write the report bundle")
    r.add_argument("--check", action="store_true", help="exit with the agreement code")
    r.add_argument("--dump-grids", action="store_true", help="also write the PDE potential grid")
    scenario_cmd("crosscheck", cmd_crosscheck, "verdict against measure class; exit 0/2/3")
    m = scenario_cmd("measure", cmd_measure, "harmonic measure of infinity at the scenario point")
    m.add_argument("--route", choices=["pde", "wos"])
    m.add_argument("--json", action="store_true")

    c = sub.add_parser("capacity", help="capacity of a canonical shape")
    c.add_argument("shape", help="canonical kind, e.g. ball")
    c.add_argument("method", choices=["analytic", "hitting_mc", "variational"])
    c.add_argument("--params", type=float, nargs="*", default=[1.0])
    c.add_argument("--dimension", "-N", type=int, default=3)
    c.add_argument("--delta", type=float)
    c.add_argument("--n-paths", type=int, default=100000)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--workers", type=int, default=1)
    c.add_argument("--rho0", type=float)
    c.add_argument("--field", default="identity",
                   choices=["identity", "checkerboard", "cellwise_random"])
    c.add_argument("--lambda", dest="lam", type=float, default=2.0)
    c.add_argument("--refinements", type=float, nargs="+", default=[1.0, 2.0])
    c.add_argument("--json", action="store_true")
    c.set_defaults(fn=cmd_capacity)

    v = sub.add_parser("verdict", help="classify a shells or terms CSV")
    v.add_argument("csv")
    v.add_argument("--dimension", "-N", type=int, default=3)
    v.add_argument("--json", action="store_true")
    v.set_defaults(fn=cmd_verdict)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:        # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    except (ConfigError, ValueError, FileNotFoundError, KeyError) as exc:
        print(f"wiener-inf: error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
