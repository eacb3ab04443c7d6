"""Set distances, decay-exponent fits, Lojasiewicz-type exponent estimates
and the truncation-order bound k0.

All exponents are estimates from finite samples. Each estimator combines a
literal pointwise ratio bound with the asymptotic log-log slope of the
worst-case envelope across radii (constant factors bias the pointwise ratio
at finite scale), then applies a multiplicative safety margin in the
direction that keeps the truncation bound conservative.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .expr import AnalyticMap, evaluate, jacobian
from .geometry import lambda_from_jacobians
from .sampler import project_batch, sphere_directions

ZERO_FLOOR = 1e-12
TINY = 1e-300


class InsufficientDataError(ValueError):
    pass


# ---------------------------------------------------------------- set distances


def _cloud(A):
    A = np.asarray(A, dtype=np.float64)
    if A.ndim == 1:
        A = A[None]
    if A.shape[0] == 0:
        raise ValueError("empty point set")
    return A


def delta_one_sided(A, B) -> float:
    """sup over x in B of d(x, A). The supremum runs over the *second* argument."""
    A, B = _cloud(A), _cloud(B)
    dist, _ = kernels.nearest(A, B)
    return float(np.max(dist))


def hausdorff(A, B) -> float:
    return max(delta_one_sided(A, B), delta_one_sided(B, A))


# ---------------------------------------------------------------- exponent fits


@dataclass(frozen=True)
class ExponentFit:
    radii: tuple
    values: tuple
    slope: float
    intercept: float
    max_residual: float
    exact_zero: bool
    n_used: int
    zero_floor: float = ZERO_FLOOR

    def exceeds(self, s):
        return self.exact_zero or self.slope > s

    def to_dict(self):
        return {
            "slope": None if self.exact_zero else self.slope,
            "intercept": None if self.exact_zero else self.intercept,
            "max_residual": None if self.exact_zero else self.max_residual,
            "exact_zero": self.exact_zero,
            "n_used": self.n_used,
        }


def fit_exponent(pairs: Sequence, zero_floor: float = ZERO_FLOOR) -> ExponentFit:
    """Least-squares slope of log d against log r.

    Pairs with d <= zero_floor are dropped from the fit; if every d is below
    the floor the fit is flagged ``exact_zero`` (slope +inf).
    """
    pairs = [(float(r), float(d)) for r, d in pairs]
    if len(pairs) < 3:
        raise InsufficientDataError(f"need at least 3 pairs, got {len(pairs)}")
    r = np.array([p[0] for p in pairs])
    d = np.array([p[1] for p in pairs])
    if np.any(r <= 0) or np.any(r >= 1):
        raise ValueError("radii must lie in (0, 1)")
    if np.unique(r).size != r.size:
        raise ValueError("radii must be distinct")
    if np.all(d <= zero_floor):
        return ExponentFit(tuple(r), tuple(d), math.inf, math.nan, 0.0, True, 0, zero_floor)
    use = d > zero_floor
    if np.count_nonzero(use) < 3:
        raise InsufficientDataError(
            f"only {np.count_nonzero(use)} of {d.size} values exceed the zero floor {zero_floor}"
        )
    lr, ld = np.log(r[use]), np.log(d[use])
    A = np.stack([lr, np.ones_like(lr)], axis=1)
    (slope, icept), *_ = np.linalg.lstsq(A, ld, rcond=None)
    resid = ld - (slope * lr + icept)
    return ExponentFit(tuple(r), tuple(d), float(slope), float(icept),
                       float(np.max(np.abs(resid))), False, int(np.count_nonzero(use)), zero_floor)


def _log_ratio(num, den):
    """log(num)/log(den) where both lie strictly inside (TINY, 1); NaN elsewhere."""
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    ok = (num > TINY) & (num < 1.0) & (den > TINY) & (den < 1.0)
    out = np.full(np.broadcast(num, den).shape, np.nan)
    with np.errstate(all="ignore"):
        out[ok] = np.log(num[ok]) / np.log(den[ok])
    return out


def _envelope_slope(xs, ys):
    """Least-squares slope of log y against log x, or None with < 3 distinct points."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    ok = (xs > TINY) & (xs < 1) & (ys > TINY) & (ys < 1)
    xs, ys = xs[ok], ys[ok]
    if np.unique(xs).size < 3:
        return None
    A = np.stack([np.log(xs), np.ones(xs.size)], axis=1)
    (slope, _), *_ = np.linalg.lstsq(A, np.log(ys), rcond=None)
    return float(slope)


def _subsample(n_items, limit):
    if n_items <= limit:
        return np.arange(n_items)
    return np.unique(np.linspace(0, n_items - 1, limit).round().astype(int))


def _distance_to_variety(f, family, Y):
    """Upper bound for d(y, V): nearest cloud point, refined by projection."""
    dist, _ = kernels.nearest(family.points, Y)
    P, _ = project_batch(f, Y)
    ok = np.isfinite(P).all(axis=1)
    dp = np.full(Y.shape[0], np.inf)
    dp[ok] = np.linalg.norm(Y[ok] - P[ok], axis=1)
    return np.minimum(dist, dp)


# ---------------------------------------------------------------- estimators


@dataclass(frozen=True)
class AlphaEstimate:
    alpha: float
    sup_ratio: float
    envelope_slope: Optional[float]
    probes: int
    margin: float


def estimate_alpha(f: AnalyticMap, family, probes: int = 64, margin: float = 0.05,
                   qs: Sequence[float] = (1.2, 1.5, 2.0), rng_seed: int = 0) -> AlphaEstimate:
    """Exponent alpha with ||f(x)|| > d(x, V)^alpha near O.

    Probes are slice points pushed off V along normal directions by
    ||x||^q, plus quasi-uniform points on each sampled sphere.
    """
    worst = []
    sups = []
    used = 0
    for j, sl in enumerate(family.slices):
        if len(sl) == 0:
            continue
        reg = np.flatnonzero(sl.regular)
        idx = reg[_subsample(reg.size, probes)]
        X = sl.points[idx]
        B = sl.frames[idx]
        nx = np.linalg.norm(X, axis=1)
        Y = [sl.radius * sphere_directions(f.arity, probes, rng_seed + 104729 * j)]
        for q in qs:
            t = nx**q
            for b in range(B.shape[1]):
                for sgn in (1.0, -1.0):
                    Y.append(X + sgn * t[:, None] * B[:, b, :])
        Y = np.concatenate(Y, axis=0)
        Fn = np.linalg.norm(evaluate(f, Y), axis=1)
        d = _distance_to_variety(f, family, Y)
        ratio = _log_ratio(Fn, d)
        ok = np.isfinite(ratio)
        if not np.any(ok):
            continue
        used += int(np.count_nonzero(ok))
        k = int(np.nanargmax(ratio))
        sups.append(ratio[k])
        worst.append((d[k], Fn[k]))
    if not sups:
        raise InsufficientDataError("no valid alpha probes")
    sup = float(np.max(sups))
    slope = _envelope_slope([w[0] for w in worst], [w[1] for w in worst])
    raw = max(sup, slope if slope is not None else -math.inf)
    return AlphaEstimate((1.0 + margin) * raw, sup, slope, used, margin)


def _gradient_pairs(f, family, per_slice):
    """(separation, gradient-difference) samples within and across adjacent slices."""
    blocks = []
    sl_pts = []
    for sl in family.slices:
        if len(sl):
            sl_pts.append(sl.points[_subsample(len(sl), per_slice)])
    for j, P in enumerate(sl_pts):
        blocks.append((P, P, True))
        if j + 1 < len(sl_pts):
            blocks.append((P, sl_pts[j + 1], False))
    hs, ds = [], []
    for P, Q, same in blocks:
        JP, JQ = jacobian(f, P), jacobian(f, Q)
        iu, ju = np.triu_indices(P.shape[0], 1) if same else np.indices((P.shape[0], Q.shape[0])).reshape(2, -1)
        h = np.linalg.norm(P[iu] - Q[ju], axis=1)
        D = np.linalg.norm(JP[iu] - JQ[ju], axis=2)  # (pairs, p)
        hs.append(np.repeat(h, D.shape[1]))
        ds.append(D.reshape(-1))
    if not hs:
        return np.zeros(0), np.zeros(0)
    return np.concatenate(hs), np.concatenate(ds)


@dataclass(frozen=True)
class GammaEstimate:
    gamma: float
    inf_ratio: float
    envelope_slope: Optional[float]
    pairs: int
    margin: float


def estimate_gamma(f: AnalyticMap, family, pairs: int = 48, margin: float = 0.02, bins: int = 8) -> GammaEstimate:
    """Hoelder exponent gamma <= 1 of the component gradients near O."""
    h, D = _gradient_pairs(f, family, pairs)
    ratio = _log_ratio(D, h)
    ok = np.isfinite(ratio)
    inf_ratio = float(np.min(ratio[ok])) if np.any(ok) else math.nan
    slope = None
    if np.count_nonzero(ok) >= 3:
        lh = np.log(h[ok])
        edges = np.linspace(lh.min(), lh.max(), bins + 1)
        which = np.clip(np.digitize(lh, edges) - 1, 0, bins - 1)
        xs, ys = [], []
        for b in range(bins):
            sel = np.flatnonzero(which == b)
            if sel.size:
                k = sel[np.argmax(D[ok][sel])]
                xs.append(h[ok][k])
                ys.append(D[ok][k])
        slope = _envelope_slope(xs, ys)
    cap = 1.0 - margin
    gamma = cap if slope is None else min(cap, cap * slope)
    return GammaEstimate(float(gamma), inf_ratio, slope, int(np.count_nonzero(ok)), margin)


def _phi_values(f, X):
    """Columns: Lambda f, then ||grad f_i|| for each component."""
    J = jacobian(f, X)
    cols = [lambda_from_jacobians(J)] + [np.linalg.norm(J[:, i, :], axis=1) for i in range(f.codim)]
    return np.stack(cols, axis=1)


def _beta_from(points_by_slice, phis_by_slice, margin):
    sups = []
    envelopes = []
    ncols = phis_by_slice[0].shape[1]
    for c in range(ncols):
        r_list, m_list = [], []
        for X, Phi in zip(points_by_slice, phis_by_slice):
            nx = np.linalg.norm(X, axis=1)
            ratio = _log_ratio(Phi[:, c], nx)
            if np.any(np.isfinite(ratio)):
                sups.append(float(np.nanmax(ratio)))
            r_list.append(float(np.median(nx)))
            m_list.append(float(np.min(Phi[:, c])))
        slope = _envelope_slope(r_list, m_list)
        if slope is not None:
            envelopes.append(slope)
    raw = max([0.0] + sups + envelopes)
    return max((1.0 + margin) * raw, margin), (max(sups) if sups else None), (max(envelopes) if envelopes else None)


@dataclass(frozen=True)
class BetaSigmaEstimate:
    beta: float
    sigma: float
    sup_ratio: Optional[float]
    envelope_slope: Optional[float]
    robustness_rounds: int
    margin: float


def sigma_from(beta, s, gamma, margin):
    return max(1.0, (beta + s) / gamma) * (1.0 + margin)


def estimate_beta_sigma(f: AnalyticMap, family, s: float, gamma: float, margin: float = 0.05,
                        checks: int = 32, rng_seed: int = 0, max_rounds: int = 5) -> BetaSigmaEstimate:
    """Exponents with phi(y) > ||x||^beta for x in V near O and y in B(x, ||x||^sigma),
    for phi = Lambda f and every ||grad f_i||."""
    pts, phis = [], []
    for sl in family.slices:
        if len(sl) == 0:
            continue
        if np.any(sl.lambdas <= 0.0):
            raise ValueError("beta/sigma estimation needs Lambda f > 0 on the sampled slices (IS)")
        pts.append(sl.points)
        phis.append(_phi_values(f, sl.points))
    if not pts:
        raise InsufficientDataError("no slice points")
    beta, sup, env = _beta_from(pts, phis, margin)
    sigma = sigma_from(beta, s, gamma, margin)
    rounds = 0
    for rounds in range(1, max_rounds + 1):
        worst = None
        for j, X in enumerate(pts):
            sub = X[_subsample(X.shape[0], checks)]
            nx = np.linalg.norm(sub, axis=1)
            U = sphere_directions(f.arity, sub.shape[0], rng_seed + 31 * j + rounds)
            for frac in (0.5, 0.99):
                Y = sub + (frac * nx**sigma)[:, None] * U
                Phi = _phi_values(f, Y)
                bound = nx**beta
                viol = Phi <= bound[:, None]
                if np.any(viol):
                    if np.any(Phi[viol] <= 0.0):
                        raise ValueError("Lambda f vanishes inside B(x, |x|^sigma); not an IS at this scale")
                    ratio = _log_ratio(Phi, np.broadcast_to(nx[:, None], Phi.shape))
                    cand = float(np.nanmax(np.where(viol, ratio, np.nan)))
                    worst = cand if worst is None else max(worst, cand)
        if worst is None:
            break
        beta = max(beta, (1.0 + margin) * worst)
        sigma = sigma_from(beta, s, gamma, margin)
    return BetaSigmaEstimate(float(beta), float(sigma), sup, env, rounds, margin)


def estimate_mu(sigma: float, margin: float = 0.1) -> float:
    """Regular-separation exponent of V and the complement of the ball union."""
    if not sigma > 1.0:
        raise ValueError(f"mu estimate needs sigma > 1, got {sigma}")
    return sigma * (1.0 + margin)


def k0_bound(alpha: float, beta: float, sigma: float, mu: float) -> int:
    vals = (alpha, beta, sigma, mu)
    if not all(math.isfinite(v) for v in vals):
        raise ValueError(f"non-finite exponent in {vals}")
    if alpha <= 0 or beta < 0 or mu <= 0 or not sigma > 1:
        raise ValueError(f"exponents out of range: {vals}")
    return int(math.floor(max(alpha * sigma, beta + sigma + 1.0, alpha * mu))) + 1


@dataclass(frozen=True)
class ExponentProfile:
    alpha: float
    beta: float
    gamma: float
    sigma: float
    mu: float
    eta: float
    tau: float
    k0: int
    R: float
    s: float
    margins: dict = field(default_factory=dict)
    counts: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


DEFAULT_MARGINS = {"alpha": 0.05, "beta": 0.05, "gamma": 0.02, "mu": 0.1}


def estimate_profile(f: AnalyticMap, family, s: float, R: Optional[float] = None,
                     margins: Optional[dict] = None, rng_seed: int = 0) -> ExponentProfile:
    m = dict(DEFAULT_MARGINS)
    m.update(margins or {})
    g = estimate_gamma(f, family, margin=m["gamma"])
    bs = estimate_beta_sigma(f, family, s, g.gamma, margin=m["beta"], rng_seed=rng_seed)
    a = estimate_alpha(f, family, margin=m["alpha"], rng_seed=rng_seed)
    mu = estimate_mu(bs.sigma, m["mu"])
    k0 = k0_bound(a.alpha, bs.beta, bs.sigma, mu)
    eta = 0.5 * (bs.beta + s + g.gamma * bs.sigma)
    return ExponentProfile(
        alpha=a.alpha, beta=bs.beta, gamma=g.gamma, sigma=bs.sigma, mu=mu,
        eta=eta, tau=eta - bs.beta, k0=k0,
        R=float(R if R is not None else max(family.radii)), s=float(s),
        margins=m,
        counts={"alpha_probes": a.probes, "gamma_pairs": g.pairs,
                "slice_points": int(sum(len(sl) for sl in family.slices))},
        diagnostics={
            "alpha_sup_ratio": a.sup_ratio, "alpha_envelope_slope": a.envelope_slope,
            "gamma_inf_ratio": g.inf_ratio, "gamma_envelope_slope": g.envelope_slope,
            "beta_sup_ratio": bs.sup_ratio, "beta_envelope_slope": bs.envelope_slope,
            "beta_robustness_rounds": bs.robustness_rounds,
        },
    )
