"""End-to-end acceptance criteria. Each test records one PASS/FAIL line that
is printed in the terminal summary (section "acceptance criteria")."""

import math
import time
from fractions import Fraction

import mpmath as mp
import numpy as np
import pytest
from scipy.spatial import cKDTree

from tanapprox.corpus import corpus_run, default_corpus
from tanapprox.expr import parse
from tanapprox.geometry import grassmann_delta, grassmann_delta_oracle, lambda_value
from tanapprox.jets import maclaurin, monomials, taylor, to_map
from tanapprox.metrics import k0_bound
from tanapprox.sampler import SINGULAR, continue_family, summarize_family, validate_is
from tanapprox.verify import Config, approximate, check_s_equivalence, check_tangential, truncation

CONE = "x1^2 + x2^2 - x3^2"
SIN_CONE = "x1^2 + x2^2 - sin(x3)^2"
COLUMNS = ("delta_fwd", "delta_bwd", "match", "tan_fwd", "tan_bwd")


def _slopes(report, *cols):
    return [math.inf if report.fits[c].exact_zero else report.fits[c].slope for c in cols]


def test_criterion_1_polynomial_fixed_point(acceptance):
    t0 = time.perf_counter()
    res = approximate(parse(CONE, 3), 4, Config())
    dt = time.perf_counter() - t0
    zero = res.report is not None and all(res.report.fits[c].exact_zero for c in COLUMNS)
    ok = res.k_star == 2 and zero and dt < 10
    acceptance(1, ok, f"cone s=4: k_star={res.k_star}, all columns exact_zero={zero}, {dt:.1f}s (< 10s)")
    assert res.k_star == 2
    assert zero
    assert dt < 10


def test_criterion_2_dimension_collapse(acceptance):
    t0 = time.perf_counter()
    f = parse("x3^3 - x1^2 - x2^2", 3)
    rep = validate_is(truncation(f, 2), Config().radii)
    res = approximate(f, 1, Config())
    dt = time.perf_counter() - t0
    ok = rep.verdict == SINGULAR and res.k_star == 3 and dt < 30
    acceptance(2, ok, f"T^2 verdict='{rep.verdict}', k_star={res.k_star}, {dt:.1f}s (< 30s)")
    assert rep.verdict == SINGULAR
    assert res.k_star == 3
    assert dt < 30


def _circle_cloud(profile, r, samples):
    """Slice of the surface of revolution x1^2 + x2^2 = profile(x3) on the
    sphere of radius r: two circles at heights +-z solving profile(z) + z^2 = r^2."""
    mp.mp.dps = 40
    r = mp.mpf(r)
    z = mp.findroot(lambda t: profile(t) + t**2 - r**2, r / mp.sqrt(2))
    rho, z = float(mp.sqrt(profile(z))), float(z)
    phi = np.linspace(0.0, 2 * np.pi, samples // 2, endpoint=False)
    upper = np.column_stack([rho * np.cos(phi), rho * np.sin(phi), np.full_like(phi, z)])
    return np.vstack([upper, upper * [1.0, 1.0, -1.0]])


def test_criterion_3_decay_orders(acceptance):
    t0 = time.perf_counter()
    f = parse(SIN_CONE, 3)
    cfg = Config(R=0.1, rho=0.5, count=6, budget=500)
    # hand-derived profiles of the truncations: sin(z)^2 = z^2 - z^4/3 + O(z^6)
    profiles = {3: lambda z: z**2, 5: lambda z: z**2 - z**4 / 3}
    bands = {3: ((2.8, 3.2), (1.8, 2.2)), 5: ((4.7, 5.3), (3.7, 4.3))}
    details, ok = [], True
    worst = 0.0
    for k in (3, 5):
        rep = check_tangential(f, truncation(f, k), 1, cfg)
        (dlo, dhi), (tlo, thi) = bands[k]
        ds = _slopes(rep, "delta_fwd", "delta_bwd")
        ts = _slopes(rep, "tan_fwd", "tan_bwd")
        ok &= all(dlo <= s <= dhi for s in ds) and all(tlo <= s <= thi for s in ts)
        details.append(f"k={k}: delta {min(ds):.3f}..{max(ds):.3f}, Delta {min(ts):.3f}..{max(ts):.3f}")
        for row in rep.rows:
            A = _circle_cloud(lambda z: mp.sin(z) ** 2, row["r"], 10_000)
            B = _circle_cloud(profiles[k], row["r"], 10_000)
            oracle = float(np.max(cKDTree(B).query(A)[0]))
            worst = max(worst, abs(row["delta_fwd"] / oracle - 1.0))
    dt = time.perf_counter() - t0
    ok = ok and worst <= 0.05 and dt < 300
    acceptance(3, ok, "; ".join(details) + f"; oracle rel. err {worst:.1e} (<= 5%); {dt:.1f}s (< 300s)")
    assert ok


def _distance_slope(f, g, cfg):
    """Smaller of the two distance slopes, or None once a fit is floor-limited
    (a lower bound from values under the zero floor, not a fitted slope)."""
    rep = check_s_equivalence(f, g, 1, cfg)
    if any(rep.fits[c].floor_limited for c in ("delta_fwd", "delta_bwd")):
        return None
    return min(_slopes(rep, "delta_fwd", "delta_bwd"))


def test_criterion_4_corpus_monotonicity(acceptance, tmp_path):
    corpus = default_corpus()
    problems, walked = [], []
    for entry in corpus["entries"]:
        if entry["mode"] != "approximate":
            continue
        sch = entry["schedule"]
        cfg = Config(R=sch["R"], rho=sch["rho"], count=sch["count"], budget=entry["budget"], seed=entry["seed"])
        f = parse(entry["map"], entry["arity"])
        prev = None
        for k in range(2, 7):
            g = truncation(f, k)
            if not summarize_family(continue_family(g, cfg.radii, cfg.budget, cfg.seed)).is_IS:
                continue
            slope = _distance_slope(f, g, cfg)
            if slope is None:
                break
            walked.append(f"{entry['name']}:{k}")
            if prev is not None and slope < prev - 0.3:
                problems.append(f"{entry['name']} k={k}: {slope:.3f} < {prev:.3f} - 0.3")
            prev = slope
    first = corpus_run(corpus, tmp_path / "a")
    second = corpus_run(corpus, tmp_path / "b")
    for r in first.results:
        res = r["result"] or {}
        reports = [res.get("report") or {}] if r["mode"] == "approximate" else [res]
        for ev in (res.get("evidence", []) if r["mode"] == "approximate" else []):
            fits = ev.get("fits")
            if fits and ev["passed"]:
                dist = all(fits[c]["exact_zero"] or fits[c]["slope"] > r["resolved"]["s"]
                           for c in ("delta_fwd", "delta_bwd"))
                if not dist:
                    problems.append(f"{r['entry']} k={ev['k']}: tangential pass without distance pass")
        for rep in reports:
            v = rep.get("verdicts")
            if v and v["tangentially_s_equivalent"] and not v["s_equivalent"]:
                problems.append(f"{r['entry']}: tangential pass without distance pass")
    files_a = sorted(p.name for p in (tmp_path / "a").iterdir())
    files_b = sorted(p.name for p in (tmp_path / "b").iterdir())
    identical = files_a == files_b and all(
        (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes() for n in files_a
    )
    if not identical:
        problems.append("reports differ between runs")
    ok = not problems and [r["status"] for r in first.results] == [r["status"] for r in second.results]
    acceptance(4, ok, f"k walked {' '.join(walked)}; {len(files_a)} files byte-identical={identical}; issues: {problems or 'none'}")
    assert ok, problems


def _random_frame(rng, p, n):
    q, _ = np.linalg.qr(rng.standard_normal((n, p)))
    return q.T


def test_criterion_5_geometry_oracles(acceptance):
    rng = np.random.default_rng(5)
    worst_delta = 0.0
    for i in range(50):
        n = int(rng.integers(2, 5))
        p = int(rng.integers(1, min(2, n - 1) + 1))
        B1 = _random_frame(rng, p, n)
        if i % 2:  # nearby pair
            B2 = _random_frame(rng, p, n) if p == n else np.linalg.qr((B1 + 1e-2 * rng.standard_normal(B1.shape)).T)[0].T
        else:
            B2 = _random_frame(rng, p, n)
        worst_delta = max(worst_delta, abs(grassmann_delta(B1, B2) - grassmann_delta_oracle(B1, B2, restarts=6)))

    mp.mp.dps = 30
    worst_lam = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 5))
        p = int(rng.integers(1, n + 1))
        J = rng.standard_normal((p, n))
        comps = "; ".join(" + ".join(f"({float(J[i, j])!r})*x{j + 1}" for j in range(n)) for i in range(p))
        lam = lambda_value(parse(comps, n), np.zeros(n))
        oracle = float(min(mp.svd_r(mp.matrix(J.tolist()), compute_uv=False)))
        worst_lam = max(worst_lam, abs(lam - oracle))

    # perturbation h has Jacobian H diag(cos x) with ||H||_2 = 1, so ||dh|| <= 1
    H = rng.standard_normal((2, 3))
    H /= np.linalg.norm(H, 2)
    h = [" + ".join(f"({float(H[i, j])!r})*sin(x{j + 1})" for j in range(3)) for i in range(2)]
    base = ["x1^2 + x2^2 - sin(x3)^2", "x1 - x2*x3 + x3^2"]
    f = parse("; ".join(base), 3)
    worst_ratio = 0.0
    pts = rng.uniform(-0.5, 0.5, size=(100, 3))
    for d in (1e-3, 1e-4):
        g = parse("; ".join(f"{b} + ({d!r})*({hi})" for b, hi in zip(base, h)), 3)
        for x in pts:
            worst_ratio = max(worst_ratio, abs(lambda_value(f, x) - lambda_value(g, x)) / d)
    ok = worst_delta <= 1e-4 and worst_lam <= 1e-10 and worst_ratio <= 1 + 1e-6
    acceptance(5, ok, f"Delta vs oracle {worst_delta:.1e} (<= 1e-4); Lambda vs SVD {worst_lam:.1e} "
                      f"(<= 1e-10); perturbation ratio {worst_ratio:.4f} (<= 1+1e-6)")
    assert ok


BATTERY = [
    ("sin(x1 + 2*x2)", 2, lambda a, b: mp.sin(a + 2 * b)),
    ("cos(x1*x2) - x2", 2, lambda a, b: mp.cos(a * b) - b),
    ("exp(x1 - x2 + x3)", 3, lambda a, b, c: mp.exp(a - b + c)),
    ("log(1 + x1 + x2*x3)", 3, lambda a, b, c: mp.log(1 + a + b * c)),
    ("sqrt(1 + x1 - x3^2)", 3, lambda a, b, c: mp.sqrt(1 + a - c**2)),
    ("exp(sin(log(1 + x1 + x2^2)))", 3, lambda a, b, c: mp.exp(mp.sin(mp.log(1 + a + b**2)))),
    ("sin(cos(x1) - 1 + x2*exp(x3))", 3, lambda a, b, c: mp.sin(mp.cos(a) - 1 + b * mp.exp(c))),
    ("sqrt(1 + sin(x1*x2 + x3))*cos(x1)", 3, lambda a, b, c: mp.sqrt(1 + mp.sin(a * b + c)) * mp.cos(a)),
    ("log(1 + exp(x1) - 1 + sin(x2))", 2, lambda a, b: mp.log(mp.exp(a) + mp.sin(b))),
    ("x1^2 + x2^2 - sin(x3)^2", 3, lambda a, b, c: a**2 + b**2 - mp.sin(c) ** 2),
]

KNOWN = {  # textbook Maclaurin coefficients through degree 6 (tan through 7)
    "sin": [0, 1, 0, Fraction(-1, 6), 0, Fraction(1, 120), 0],
    "cos": [1, 0, Fraction(-1, 2), 0, Fraction(1, 24), 0, Fraction(-1, 720)],
    "exp": [1, 1, Fraction(1, 2), Fraction(1, 6), Fraction(1, 24), Fraction(1, 120), Fraction(1, 720)],
    "log1p": [0, 1, Fraction(-1, 2), Fraction(1, 3), Fraction(-1, 4), Fraction(1, 5), Fraction(-1, 6)],
    "sqrt1p": [1, Fraction(1, 2), Fraction(-1, 8), Fraction(1, 16), Fraction(-5, 128), Fraction(7, 256),
               Fraction(-21, 1024)],
    "tan": [0, 1, 0, Fraction(1, 3), 0, Fraction(2, 15), 0, Fraction(17, 315)],
}
UNIVARIATE = {"sin": "sin(x1)", "cos": "cos(x1)", "exp": "exp(x1)", "log1p": "log(1 + x1)",
              "sqrt1p": "sqrt(1 + x1)", "tan": "tan(x1)"}


def test_criterion_6_jets(acceptance):
    mp.mp.dps = 40
    worst, exact, invariants = 0.0, True, True
    for src, n, oracle in BATTERY:
        f = parse(src, n)
        for k in range(7):
            series = taylor(f, k)
            invariants &= taylor(to_map(series), k) == series
            invariants &= all(taylor(f, j)[0] == series[0].truncate(j) for j in range(k))
        series = taylor(f, 6)[0]
        for e in monomials(n, 6):
            ref = mp.diff(oracle, [0] * n, e) / math.prod(math.factorial(i) for i in e)
            ref = float(ref)
            err = abs(series[e] - ref) / abs(ref) if abs(ref) > 1e-20 else abs(series[e])
            worst = max(worst, err)
    for name, coeffs in KNOWN.items():
        k = len(coeffs) - 1
        exact &= list(maclaurin(name, k)) == [Fraction(c) for c in coeffs]
        s = taylor(parse(UNIVARIATE[name], 1), k)[0]
        exact &= all(s[(j,)] == float(c) for j, c in enumerate(coeffs))
    ok = worst <= 1e-4 and exact and invariants
    acceptance(6, ok, f"worst FD rel. err {worst:.1e} (<= 1e-4); Maclaurin exact={exact}; "
                      f"idempotence/truncation exact={invariants}")
    assert ok


def _k0_reference(alpha, beta, sigma, mu):
    top = max(Fraction(alpha) * Fraction(sigma), Fraction(beta) + Fraction(sigma) + 1, Fraction(alpha) * Fraction(mu))
    return math.floor(top) + 1


def test_criterion_7_k0_table(acceptance):
    rng = np.random.default_rng(7)
    mismatches = []
    for i in range(50):
        if i < 10:  # values whose products land on integers
            alpha, beta = (float(v) for v in rng.integers(1, 9, size=2) / 2)
            sigma = float(rng.integers(3, 9)) / 2
            mu = sigma + float(rng.integers(1, 4)) / 4
        else:
            alpha, beta = rng.uniform(1, 6), rng.uniform(0, 4)
            sigma = rng.uniform(1, 4)
            mu = sigma * rng.uniform(1, 1.5)
        got, want = k0_bound(alpha, beta, sigma, mu), _k0_reference(alpha, beta, sigma, mu)
        if got != want:
            mismatches.append((alpha, beta, sigma, mu, got, want))
    acceptance(7, not mismatches, f"50 cases, mismatches: {mismatches or 'none'}")
    assert not mismatches


def test_criterion_8_negative_control(acceptance):
    rep = check_s_equivalence(parse(CONE, 3), parse("x3", 3), 1, Config())
    slopes = _slopes(rep, "delta_fwd", "delta_bwd")
    ok = not rep.s_equivalent and max(slopes) <= 1.2
    acceptance(8, ok, f"cone vs plane s=1: s_equivalent={rep.s_equivalent}, slopes {slopes[0]:.3f}, {slopes[1]:.3f} (<= 1.2)")
    assert ok
