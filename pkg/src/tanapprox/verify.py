"""End-to-end checks of s-equivalence and tangential s-equivalence between
V(f) and V(g), and the truncation-order search for T^k f.

Containment in a horn neighbourhood is operationalised as decay: the
per-radius worst-case distances (and tangent-space deviations) are fitted
against r in log-log scale, and a slope above s is taken as finite-sample
evidence of containment with exponent up to that slope.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import __version__, kernels
from .expr import AnalyticMap
from .geometry import delta_from_bases, frames_from_jacobians
from .jets import taylor, to_map
from .metrics import (
    ZERO_FLOOR,
    ExponentFit,
    ExponentProfile,
    InsufficientDataError,
    estimate_profile,
    fit_exponent,
)
from .sampler import (
    ISReport,
    SphereSliceFamily,
    continue_family,
    geometric_schedule,
    project_batch,
    summarize_family,
)

MATCH_CANDIDATES = 8
EVIDENCE_NOTE = (
    "fitted decay slope > s on a geometric radius schedule is finite-sample "
    "evidence of horn containment, not a proof"
)


class VerificationError(RuntimeError):
    """Numeric precondition failure (non-IS map, empty slice)."""


class NotISError(VerificationError):
    def __init__(self, message, reports=None):
        super().__init__(message)
        self.reports = reports or {}


class EmptySliceError(VerificationError):
    pass


@dataclass(frozen=True)
class Config:
    R: float = 0.1
    rho: float = 0.5
    count: int = 6
    budget: int = 500
    seed: int = 0
    k_min: int = 2
    headroom: int = 2
    candidates: int = MATCH_CANDIDATES
    zero_floor: float = ZERO_FLOOR
    margins: Optional[dict] = None

    @property
    def radii(self):
        return geometric_schedule(self.R, self.rho, self.count)

    def to_dict(self):
        return {
            "schedule": {"R": self.R, "rho": self.rho, "count": self.count},
            "budget": self.budget, "seed": self.seed, "k_min": self.k_min,
            "headroom": self.headroom, "candidates": self.candidates,
            "zero_floor": self.zero_floor, "margins": self.margins,
        }


# ---------------------------------------------------------------- fitting


@dataclass(frozen=True)
class ColumnFit:
    fit: Optional[ExponentFit]
    slope: float
    exact_zero: bool
    floor_limited: bool = False

    def exceeds(self, s):
        return self.exact_zero or self.slope > s

    def to_dict(self):
        d = {"slope": None if self.exact_zero else self.slope, "exact_zero": self.exact_zero,
             "floor_limited": self.floor_limited}
        if self.fit is not None and not self.exact_zero:
            d.update({"intercept": self.fit.intercept, "max_residual": self.fit.max_residual,
                      "n_used": self.fit.n_used})
        return d


def fit_column(radii, values, zero_floor=ZERO_FLOOR) -> ColumnFit:
    """Fit a decay column; when fewer than three values clear the zero floor,
    fall back to the smallest local slope with floored values replaced by the
    floor itself (a conservative lower bound)."""
    pairs = list(zip(radii, values))
    try:
        fit = fit_exponent(pairs, zero_floor)
        return ColumnFit(fit, fit.slope, fit.exact_zero)
    except InsufficientDataError:
        pass
    local = []
    for (r0, d0), (r1, d1) in zip(pairs, pairs[1:]):
        if d0 > zero_floor:
            local.append(math.log(d0 / max(d1, zero_floor)) / math.log(r0 / r1))
    slope = min(local) if local else math.inf
    return ColumnFit(None, slope, not local, floor_limited=True)


# ---------------------------------------------------------------- distances


def _slice_distances(X, g, r, cloud):
    """Distance from each row of X to the sampled slice V(g) on S_r, refined by
    sphere-constrained projection onto V(g)."""
    dist, _ = kernels.nearest(cloud, X)
    P, _ = project_batch(g, X, radius=r)
    ok = np.isfinite(P).all(axis=1)
    dp = np.full(X.shape[0], np.inf)
    dp[ok] = np.linalg.norm(X[ok] - P[ok], axis=1)
    return np.minimum(dist, dp)


def match_tangents(X, frames, target: SphereSliceFamily, m=MATCH_CANDIDATES):
    """Best tangential match on ``target`` for each (x, T_x).

    Candidates: the m nearest cloud points and the Gauss-Newton projection of
    x onto V(target.map). The match minimises max(||x - y||, Delta).
    Returns (distances, deltas).
    """
    N = X.shape[0]
    pts, tf = target.points, target.frames
    idx = kernels.knn(pts, X, m)
    Yc = pts[idx]  # (N, m, n)
    Bc = tf[idx]  # (N, m, p, n)
    P, JP = project_batch(target.map, X)
    okp = np.isfinite(P).all(axis=1)
    BP = np.full(frames.shape, np.nan)
    if np.any(okp):
        BP[okp], _ = frames_from_jacobians(JP[okp])
    Y = np.concatenate([Yc, P[:, None, :]], axis=1)
    B = np.concatenate([Bc, BP[:, None]], axis=1)
    d = np.linalg.norm(Y - X[:, None, :], axis=2)
    valid = ~np.isnan(B).any(axis=(2, 3)) & np.isfinite(d)
    Bsafe = np.where(valid[:, :, None, None], B, 0.0)
    dl = delta_from_bases(np.broadcast_to(frames[:, None], Bsafe.shape), Bsafe)
    score = np.where(valid, np.maximum(d, dl), np.inf)
    best = np.argmin(score, axis=1)
    rows = np.arange(N)
    return np.where(np.isfinite(score[rows, best]), d[rows, best], np.inf), \
        np.where(np.isfinite(score[rows, best]), dl[rows, best], np.inf)


# ---------------------------------------------------------------- report


@dataclass
class EquivalenceReport:
    f: str
    g: str
    arity: int
    s: float
    R: float
    radii: tuple
    rows: list
    fits: dict
    s_equivalent: bool
    tangentially_s_equivalent: Optional[bool]
    is_reports: dict
    tau: Optional[float] = None
    profile: Optional[ExponentProfile] = None
    config: Optional[dict] = None
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "tool": {"name": "tanapprox", "version": __version__},
            "f": self.f, "g": self.g, "arity": self.arity, "s": self.s,
            "validity_radius": self.R, "radii": list(self.radii),
            "rows": self.rows,
            "fits": {k: v.to_dict() for k, v in self.fits.items()},
            "verdicts": {"s_equivalent": self.s_equivalent,
                         "tangentially_s_equivalent": self.tangentially_s_equivalent},
            "tau": self.tau,
            "profile": self.profile.to_dict() if self.profile is not None else None,
            "is_reports": {k: v.to_dict() for k, v in self.is_reports.items()},
            "evidence": EVIDENCE_NOTE,
            "config": self.config,
            **self.extra,
        }


def _families(f, g, config, fam_f=None, fam_g=None):
    if f.arity != g.arity:
        raise ValueError("maps live in different ambient spaces")
    fam_f = fam_f or continue_family(f, config.radii, config.budget, config.seed)
    fam_g = fam_g or continue_family(g, config.radii, config.budget, config.seed)
    reports = {"f": summarize_family(fam_f), "g": summarize_family(fam_g)}
    for name, fam in (("f", fam_f), ("g", fam_g)):
        if fam.empty_slices:
            raise EmptySliceError(f"map {name} has empty slices at radii {fam.empty_slices}")
    if reports["f"].dimension != reports["g"].dimension:
        raise NotISError("maps define sets of different dimension", reports)
    R = _validity_radius(reports)
    if R is None:
        raise NotISError(
            f"IS validation failed (f: {reports['f'].label}; g: {reports['g'].label})", reports
        )
    return fam_f, fam_g, reports, R


def _validity_radius(reports):
    """Largest radius such that it and every smaller radius pass for both maps."""
    rows_f, rows_g = reports["f"].rows, reports["g"].rows
    R = None
    for rf, rg in zip(reversed(rows_f), reversed(rows_g)):
        if reports["f"].row_ok(rf) and reports["g"].row_ok(rg):
            R = rf.radius
        else:
            break
    if R is None:
        return None
    used = [r.radius for r in rows_f if r.radius <= R]
    return R if len(used) >= 3 else None


def _compare(f, g, s, config, tangential, fam_f=None, fam_g=None, profile=None):
    fam_f, fam_g, reports, R = _families(f, g, config, fam_f, fam_g)
    rows = []
    cols = {k: [] for k in ("delta_fwd", "delta_bwd", "match", "tan_fwd", "tan_bwd")}
    used = [(a, b) for a, b in zip(fam_f.slices, fam_g.slices) if a.radius <= R]
    for sf, sg in used:
        r = sf.radius
        fwd = float(np.max(_slice_distances(sf.points, g, r, sg.points)))
        bwd = float(np.max(_slice_distances(sg.points, f, r, sf.points)))
        row = {"r": r, "n_f": len(sf), "n_g": len(sg), "delta_fwd": fwd, "delta_bwd": bwd}
        cols["delta_fwd"].append(fwd)
        cols["delta_bwd"].append(bwd)
        if tangential:
            df, tf = match_tangents(sf.points, sf.frames, fam_g, config.candidates)
            db, tb = match_tangents(sg.points, sg.frames, fam_f, config.candidates)
            match = float(max(np.max(df), np.max(db)))
            row.update({"match": match, "tan_fwd": float(np.max(tf)), "tan_bwd": float(np.max(tb))})
            cols["match"].append(match)
            cols["tan_fwd"].append(row["tan_fwd"])
            cols["tan_bwd"].append(row["tan_bwd"])
        rows.append(row)
    radii = [row["r"] for row in rows]
    names = ("delta_fwd", "delta_bwd") + (("match", "tan_fwd", "tan_bwd") if tangential else ())
    fits = {k: fit_column(radii, cols[k], config.zero_floor) for k in names}
    s_eq = fits["delta_fwd"].exceeds(s) and fits["delta_bwd"].exceeds(s)
    tan_eq = None
    if tangential:
        tan_eq = s_eq and all(fits[k].exceeds(s) for k in ("match", "tan_fwd", "tan_bwd"))
    tau = None
    if tangential:
        slopes = [fits[k].slope for k in names]
        tau = min(slopes)
        tau = None if math.isinf(tau) else tau
    return EquivalenceReport(
        f=f.source, g=g.source, arity=f.arity, s=float(s), R=R, radii=tuple(radii), rows=rows,
        fits=fits, s_equivalent=bool(s_eq), tangentially_s_equivalent=tan_eq,
        is_reports=reports, tau=tau, profile=profile, config=config.to_dict(),
    )


def check_s_equivalence(f: AnalyticMap, g: AnalyticMap, s: float, config: Config = Config(), **kw):
    """Distance part: both one-sided slice distances must decay faster than r^s."""
    return _compare(f, g, s, config, tangential=False, **kw)


def check_tangential(f: AnalyticMap, g: AnalyticMap, s: float, config: Config = Config(), **kw):
    """Full tangential check: distances, matched-point distances and Delta all decay faster than r^s."""
    return _compare(f, g, s, config, tangential=True, **kw)


@dataclass
class Approximation:
    k_star: Optional[int]
    k0: int
    polynomial: Optional[AnalyticMap]
    report: Optional[EquivalenceReport]
    profile: ExponentProfile
    evidence: list
    f: str
    s: float
    config: dict

    @property
    def passed(self):
        return self.k_star is not None

    def to_dict(self):
        return {
            "tool": {"name": "tanapprox", "version": __version__},
            "f": self.f, "s": self.s, "k_star": self.k_star, "k0": self.k0,
            "polynomial": self.polynomial.source if self.polynomial is not None else None,
            "profile": self.profile.to_dict(),
            "evidence": self.evidence,
            "report": self.report.to_dict() if self.report is not None else None,
            "config": self.config,
        }


def truncation(f: AnalyticMap, k: int) -> AnalyticMap:
    return to_map(taylor(f, k))


def approximate(f: AnalyticMap, s: float, config: Config = Config(), k_max: Optional[int] = None) -> Approximation:
    """Smallest k >= k_min for which V(T^k f) passes the tangential check,
    alongside the theoretical bound k0 from the estimated exponents."""
    if not f.vanishes_at_origin:
        raise ValueError("f must vanish at the origin")
    fam_f = continue_family(f, config.radii, config.budget, config.seed)
    rep_f = summarize_family(fam_f)
    if not rep_f.is_IS:
        raise NotISError(f"f does not define an IS: {rep_f.label}", {"f": rep_f})
    profile = estimate_profile(f, fam_f, s, R=max(config.radii), margins=config.margins,
                               rng_seed=config.seed)
    cap = k_max if k_max is not None else profile.k0 + config.headroom
    evidence = []
    for k in range(config.k_min, cap + 1):
        g = truncation(f, k)
        entry = {"k": k, "polynomial": g.source}
        if g.is_zero:
            entry.update({"is_verdict": "degenerate zero map", "passed": False})
            evidence.append(entry)
            continue
        fam_g = continue_family(g, config.radii, config.budget, config.seed)
        rep_g = summarize_family(fam_g)
        entry["is_verdict"] = rep_g.label
        if not rep_g.is_IS:
            entry["passed"] = False
            evidence.append(entry)
            continue
        report = check_tangential(f, g, s, config, fam_f=fam_f, fam_g=fam_g, profile=profile)
        entry["passed"] = bool(report.tangentially_s_equivalent)
        entry["fits"] = {k_: v.to_dict() for k_, v in report.fits.items()}
        evidence.append(entry)
        if report.tangentially_s_equivalent:
            return Approximation(k, profile.k0, g, report, profile, evidence, f.source, float(s),
                                 config.to_dict())
    return Approximation(None, profile.k0, None, None, profile, evidence, f.source, float(s),
                         config.to_dict())
