"""Report bundle: report.json, shells.csv and measures.csv."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import jsonschema
import numpy as np

from ..wiener import TERM_COLUMNS
from .config import load_schema
from .pipeline import RunReport

__all__ = ["emit_report", "validate_report", "to_jsonable", "MEASURE_COLUMNS", "SHELL_CSV_COLUMNS",
           "ReportError"]

SHELL_CSV_COLUMNS = TERM_COLUMNS
MEASURE_COLUMNS = ["route", "point", "R_or_m", "value", "ci_low", "ci_high"]


class ReportError(OSError):
    """Report files could not be written."""


def to_jsonable(obj):
    """Plain JSON types; non-finite floats (an unbounded ray end, say) become None."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def validate_report(data: dict):
    jsonschema.validate(data, load_schema("report.schema.json"))


def _fmt(x) -> str:
    return repr(float(x))


def _shell_rows(data):
    d = data["wiener"].get("dyadic")
    if not d:
        return []
    return [[n] + [_fmt(x) for x in (*g, *t, *s)]
            for n, g, t, s in zip(d["indices"], d["gammas"], d["terms"], d["partial_sums"])]


def _measure_rows(data):
    rows = []
    pde = data["measures"].get("pde")
    if pde:
        pt = " ".join(_fmt(c) for c in pde["point"])
        for R, v in zip(pde["radii"], pde["values"]):
            rows.append(["pde", pt, _fmt(R), _fmt(v), _fmt(v), _fmt(v)])
        rows.append(["pde", pt, "inf", _fmt(pde["estimate"]), _fmt(pde["estimate"]),
                     _fmt(pde["estimate"])])
    wos = data["measures"].get("wos")
    if wos:
        pt = " ".join(_fmt(c) for c in data["scenario"]["measure"]["point"])
        for r in wos["raw"]:
            rows.append(["wos", pt, _fmt(r["radius"]), _fmt(r["p"]), _fmt(r["ci_low"]),
                         _fmt(r["ci_high"])])
        rows.append(["wos", pt, "inf", _fmt(wos["p"]), _fmt(wos["ci_low"]), _fmt(wos["ci_high"])])
    rec = data.get("recurrence")
    if rec:
        pt = " ".join(_fmt(c) for c in rec["start"])
        for m, f_, lo, hi in zip(rec["thresholds"], rec["fractions"], rec["ci_low"], rec["ci_high"]):
            rows.append(["recurrence", pt, str(m), _fmt(f_), _fmt(lo), _fmt(hi)])
    return rows


def emit_report(report: RunReport | dict, out_dir, *, validate: bool = True) -> dict[str, Path]:
    """Write the bundle into ``out_dir`` and return the file paths.

    Keys are sorted and floats written with repr, so the files depend only
    on the report contents.
    """
    data = to_jsonable(report.to_dict() if isinstance(report, RunReport) else report)
    if validate:
        validate_report(data)
    out = Path(out_dir)
    paths = {"report": out / "report.json", "shells": out / "shells.csv",
             "measures": out / "measures.csv"}
    try:
        out.mkdir(parents=True, exist_ok=True)
        with open(paths["report"], "w") as fh:
            json.dump(data, fh, sort_keys=True, indent=1, allow_nan=False)
            fh.write("\n")
        for key, cols, rows in (("shells", SHELL_CSV_COLUMNS, _shell_rows(data)),
                                ("measures", MEASURE_COLUMNS, _measure_rows(data))):
            with open(paths[key], "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(cols)
                w.writerows(rows)
    except OSError as exc:
        raise ReportError(f"cannot write report to {out}: {exc}") from exc
    return paths
