"""Batch runs over a JSON corpus of maps."""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import jsonschema

from .expr import ExprError, parse
from .verify import Config, VerificationError, approximate, check_tangential

SCHEMA = {
    "type": "object",
    "required": ["entries"],
    "additionalProperties": False,
    "properties": {
        "entries": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["name", "map", "arity", "s", "mode", "schedule", "budget", "seed"],
                "additionalProperties": False,
                "properties": {
                    "name": {"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"},
                    "map": {"type": "string"},
                    "arity": {"type": "integer", "minimum": 1},
                    "s": {"type": "number", "minimum": 1},
                    "mode": {"enum": ["approximate", "verify"]},
                    "pair": {"type": "string"},
                    "schedule": {
                        "type": "object",
                        "required": ["R", "rho", "count"],
                        "additionalProperties": False,
                        "properties": {
                            "R": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                            "rho": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                            "count": {"type": "integer", "minimum": 3},
                        },
                    },
                    "budget": {"type": "integer", "minimum": 1},
                    "seed": {"type": "integer", "minimum": 0},
                },
                "if": {"properties": {"mode": {"const": "verify"}}},
                "then": {"required": ["pair"]},
            },
        }
    },
}


class ConfigError(ValueError):
    pass


def _path(err):
    out = "$"
    for part in err.absolute_path:
        out += f"[{part}]" if isinstance(part, int) else f".{part}"
    return out


def validate_config(data) -> None:
    errors = sorted(jsonschema.Draft202012Validator(SCHEMA).iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        raise ConfigError("; ".join(f"{_path(e)}: {e.message}" for e in errors))
    names = [e["name"] for e in data["entries"]]
    if len(set(names)) != len(names):
        raise ConfigError("$.entries: entry names must be unique")


def load_config(path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    validate_config(data)
    return data


def default_corpus() -> dict:
    text = resources.files("tanapprox").joinpath("data/default_corpus.json").read_text()
    data = json.loads(text)
    validate_config(data)
    return data


def clean(obj):
    """JSON-safe copy: non-finite floats become null."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    return obj


def dumps(obj) -> str:
    return json.dumps(clean(obj), sort_keys=True, indent=2) + "\n"


def entry_config(entry) -> Config:
    sch = entry["schedule"]
    return Config(R=sch["R"], rho=sch["rho"], count=sch["count"], budget=entry["budget"], seed=entry["seed"])


SLOPE_COLUMNS = ("delta_fwd", "delta_bwd", "match", "tan_fwd", "tan_bwd")


def run_entry(entry) -> dict:
    """Run one corpus entry; returns the report dict (never raises on numeric failure)."""
    cfg = entry_config(entry)
    f = parse(entry["map"], entry["arity"])
    out = {"entry": entry["name"], "mode": entry["mode"], "resolved": entry}
    try:
        if entry["mode"] == "approximate":
            res = approximate(f, entry["s"], cfg)
            out["result"] = res.to_dict()
            out["status"] = "pass" if res.passed else "fail"
        else:
            g = parse(entry["pair"], entry["arity"])
            rep = check_tangential(f, g, entry["s"], cfg)
            out["result"] = rep.to_dict()
            out["status"] = "pass" if rep.tangentially_s_equivalent else "fail"
    except VerificationError as exc:
        out["result"] = None
        out["status"] = "numeric failure"
        out["error"] = str(exc)
    return out


def _report_of(result):
    res = result.get("result")
    if res is None:
        return None
    return res.get("report", res) if result["mode"] == "approximate" else res


def summary_row(result) -> dict:
    entry = result["resolved"]
    res = result.get("result") or {}
    rep = _report_of(result) or {}
    row = {
        "entry": result["entry"], "mode": result["mode"], "s": entry["s"],
        "k_star": res.get("k_star", ""), "k0": res.get("k0", ""), "status": result["status"],
    }
    fits = rep.get("fits", {})
    for c in SLOPE_COLUMNS:
        fit = fits.get(c)
        if fit is None:
            row[f"slope_{c}"] = ""
        else:
            row[f"slope_{c}"] = "inf" if fit["exact_zero"] else repr(float(fit["slope"]))
    verdicts = rep.get("verdicts", {})
    row["s_equivalent"] = verdicts.get("s_equivalent", "")
    row["tangentially_s_equivalent"] = verdicts.get("tangentially_s_equivalent", "")
    return {k: ("" if v is None else v) for k, v in row.items()}


def _write_csv(path, rows, fields):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow(row)


@dataclass
class CorpusResult:
    results: list
    summary: list

    @property
    def exit_code(self):
        if any(r["status"] == "numeric failure" for r in self.results):
            return 3
        return 0 if all(r["status"] == "pass" for r in self.results) else 1


def corpus_run(config, out_dir=None, jobs: int = 1) -> CorpusResult:
    """Run every entry; optionally write reports, summary.csv and decay CSVs to ``out_dir``."""
    data = config if isinstance(config, dict) else load_config(config)
    validate_config(data)
    for i, e in enumerate(data["entries"]):
        try:
            parse(e["map"], e["arity"])
            if "pair" in e:
                parse(e["pair"], e["arity"])
        except ExprError as exc:
            raise ConfigError(f"$.entries[{i}]: {exc}") from exc
    entries = data["entries"]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_entry, entries))
    else:
        results = [run_entry(e) for e in entries]
    summary = [summary_row(r) for r in results]
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for r in results:
            (out / f"{r['entry']}.json").write_text(dumps(r))
            rep = _report_of(r)
            if rep:
                cols = ["r", "n_f", "n_g", "delta_fwd", "delta_bwd", "match", "tan_fwd", "tan_bwd"]
                rows = [{c: (repr(row[c]) if isinstance(row.get(c), float) else row.get(c, "")) for c in cols}
                        for row in rep["rows"]]
                _write_csv(out / f"decay_{r['entry']}.csv", rows, cols)
        _write_csv(out / "summary.csv", summary, list(summary[0]))
    return CorpusResult(results, summary)
