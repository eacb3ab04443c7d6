"""Command-line interface: ``tanapprox <command> ...``.

Exit codes: 0 pass, 1 verdict fail, 2 usage or configuration error,
3 numeric failure (non-IS input, empty slices, rank deficiency).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .corpus import ConfigError, corpus_run, default_corpus, dumps
from .expr import ExprError, parse
from .geometry import RankDeficientError, frames_from_jacobians, grassmann_delta, lambda_value
from .jets import series_to_json, taylor, to_map
from .metrics import InsufficientDataError, delta_one_sided, estimate_profile
from .sampler import continue_family, read_cloud, sample_slice, summarize_family
from .verify import Config, VerificationError, approximate, check_s_equivalence, check_tangential

EXIT_PASS, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _radii(text):
    try:
        R, rho, m = text.split(":")
        return float(R), float(rho), int(m)
    except ValueError:
        raise argparse.ArgumentTypeError("expected R:rho:m, e.g. 0.1:0.5:6") from None


def _point(text):
    try:
        return np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise argparse.ArgumentTypeError("expected comma-separated numbers") from None


def _config(args) -> Config:
    R, rho, m = args.radii
    if not (0 < R < 1 and 0 < rho < 1 and m >= 3):
        raise UsageError("--radii needs 0 < R < 1, 0 < rho < 1 and m >= 3")
    return Config(R=R, rho=rho, count=m, budget=args.budget, seed=args.seed)


def _emit(args, text):
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _read_text(source):
    return sys.stdin.read() if source == "-" else Path(source).read_text()


def _frame(source):
    """A frame given inline as 'a,b,c;d,e,f' or as a path to a JSON (p, n) array."""
    path = Path(source)
    if path.suffix == ".json" and path.exists():
        rows = np.array(json.loads(path.read_text()), dtype=float)
    else:
        rows = np.array([[float(v) for v in r.split(",")] for r in source.split(";")])
    bases, ok = frames_from_jacobians(np.atleast_2d(rows)[None])
    if not ok[0]:
        raise UsageError(f"frame rows are linearly dependent: {source}")
    return bases[0]


# ---------------------------------------------------------------- commands


def cmd_truncate(args):
    f = parse(args.map, args.n)
    series = taylor(f, args.k)
    if args.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["component"] + [f"e{i + 1}" for i in range(args.n)] + ["coefficient"])
        for c, s in enumerate(series):
            for exp, coef in s.items():
                w.writerow([c] + list(exp) + [repr(float(coef))])
        text = buf.getvalue()
    elif args.format == "text":
        text = to_map(series).source + "\n"
    else:
        text = series_to_json(series) + "\n"
    _emit(args, text)
    return EXIT_PASS


def cmd_sample(args):
    f = parse(args.map, args.n)
    if not f.vanishes_at_origin:
        raise UsageError("the map must vanish at the origin")
    sl = sample_slice(f, args.r, args.budget, args.seed)
    _emit(args, sl.to_csv() if args.format == "csv" else sl.to_jsonl())
    if len(sl) == 0:
        print(f"empty slice at r = {args.r}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_PASS


def cmd_delta(args):
    A = read_cloud(_read_text(args.a))
    B = read_cloud(_read_text(args.b))
    if A.size == 0 or B.size == 0:
        raise UsageError("both clouds must be non-empty")
    ab, ba = delta_one_sided(A, B), delta_one_sided(B, A)
    _emit(args, json.dumps({"delta_AB": ab, "delta_BA": ba, "hausdorff": max(ab, ba)}) + "\n")
    return EXIT_PASS


def cmd_lambda(args):
    f = parse(args.map, args.n)
    if args.at.shape != (args.n,):
        raise UsageError(f"--at needs {args.n} coordinates")
    lam = lambda_value(f, args.at)
    _emit(args, json.dumps({"x": args.at.tolist(), "lambda": lam}) + "\n")
    return EXIT_PASS


def cmd_grassmann(args):
    B1, B2 = _frame(args.frame1), _frame(args.frame2)
    if B1.shape != B2.shape:
        raise UsageError(f"frame shapes differ: {B1.shape} vs {B2.shape}")
    _emit(args, json.dumps({"delta": grassmann_delta(B1, B2)}) + "\n")
    return EXIT_PASS


def cmd_exponents(args):
    f = parse(args.map, args.n)
    cfg = _config(args)
    fam = continue_family(f, cfg.radii, cfg.budget, cfg.seed)
    rep = summarize_family(fam)
    if not rep.is_IS:
        print(f"not an isolated singularity: {rep.label}", file=sys.stderr)
        return EXIT_NUMERIC
    prof = estimate_profile(f, fam, args.s, R=cfg.R, rng_seed=cfg.seed)
    _emit(args, dumps(prof.to_dict()))
    return EXIT_PASS


def cmd_verify(args):
    f, g = parse(args.f, args.n), parse(args.g, args.n)
    check = check_tangential if args.tangential else check_s_equivalence
    rep = check(f, g, args.s, _config(args))
    _emit(args, dumps(rep.to_dict()))
    ok = rep.tangentially_s_equivalent if args.tangential else rep.s_equivalent
    return EXIT_PASS if ok else EXIT_FAIL


def cmd_approximate(args):
    f = parse(args.map, args.n)
    res = approximate(f, args.s, _config(args), k_max=args.k_max)
    _emit(args, dumps(res.to_dict()))
    return EXIT_PASS if res.passed else EXIT_FAIL


def cmd_corpus(args):
    config = default_corpus() if args.config is None else args.config
    res = corpus_run(config, args.out or "corpus_out", jobs=args.jobs)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(res.summary[0]), lineterminator="\n")
    w.writeheader()
    w.writerows(res.summary)
    sys.stdout.write(buf.getvalue())
    return res.exit_code


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="write output to this path (directory for corpus)")
    common.add_argument("--format", choices=["json", "csv", "text"], default="json")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--budget", type=int, default=500, help="seed directions per slice")
    common.add_argument("--radii", type=_radii, default=(0.1, 0.5, 6), metavar="R:rho:m",
                        help="geometric radius schedule (default 0.1:0.5:6)")

    p = argparse.ArgumentParser(prog="tanapprox", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, parents=[common], help=help_)
        sp.set_defaults(func=fn)
        return sp

    sp = add("truncate", cmd_truncate, "Taylor truncation of order k")
    sp.add_argument("map", help="components separated by ';'")
    sp.add_argument("--n", type=int, required=True, help="number of variables")
    sp.add_argument("--k", type=int, required=True)

    sp = add("sample", cmd_sample, "sample one sphere slice of V(f)")
    sp.add_argument("map")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--r", type=float, required=True)

    sp = add("delta", cmd_delta, "one-sided distances and Hausdorff distance of two clouds")
    sp.add_argument("a", help="slice file (JSONL or CSV), '-' for stdin")
    sp.add_argument("b")

    sp = add("lambda", cmd_lambda, "transverse stretch of the Jacobian at a point")
    sp.add_argument("map")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--at", type=_point, required=True, metavar="x1,x2,...")

    sp = add("grassmann", cmd_grassmann, "Delta between two normal spaces")
    sp.add_argument("frame1", help="rows 'a,b,c;d,e,f' or a JSON file")
    sp.add_argument("frame2")

    sp = add("exponents", cmd_exponents, "estimate the exponent profile and k0")
    sp.add_argument("map")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--s", type=float, required=True)

    sp = add("verify", cmd_verify, "check s-equivalence of V(f) and V(g)")
    sp.add_argument("f")
    sp.add_argument("g")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--s", type=float, required=True)
    sp.add_argument("--tangential", action="store_true")

    sp = add("approximate", cmd_approximate, "smallest passing truncation order")
    sp.add_argument("map")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--s", type=float, required=True)
    sp.add_argument("--k-max", type=int, default=None)

    sp = add("corpus", cmd_corpus, "run a JSON corpus (bundled default when omitted)")
    sp.add_argument("config", nargs="?")
    sp.add_argument("--jobs", type=int, default=1)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "n", 1) is not None and getattr(args, "n", 1) < 1:
        parser.error("--n must be positive")
    try:
        return args.func(args)
    except (UsageError, ExprError, ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (VerificationError, RankDeficientError, InsufficientDataError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
