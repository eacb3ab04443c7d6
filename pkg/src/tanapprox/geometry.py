"""Normal frames, the transverse-stretch function Lambda, the subspace
distance Delta and (tangential) horn-neighbourhood membership."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import minimize
from scipy.linalg import expm

from . import kernels
from .expr import AnalyticMap, jacobian

RANK_TOL = 1e-10


class RankDeficientError(ValueError):
    """Jacobian does not have full rank: the point is numerically singular."""


@dataclass(frozen=True)
class NormalFrame:
    """Orthonormal basis (rows of ``basis``, shape (p, n)) of the normal space at ``point``."""

    point: np.ndarray
    basis: np.ndarray

    @property
    def codim(self):
        return self.basis.shape[0]

    @property
    def ambient(self):
        return self.basis.shape[1]


@dataclass(frozen=True)
class TangentSample:
    point: np.ndarray
    radius: float
    frame: Optional[NormalFrame]
    lam: float

    @property
    def regular(self):
        return self.frame is not None and self.lam > 0.0


def singular_values(J):
    """Singular values (descending) of a (p, n) or batched (N, p, n) Jacobian."""
    return np.linalg.svd(J, compute_uv=False)


def full_rank(s):
    """Rank test on descending singular values along the last axis."""
    s = np.asarray(s)
    top = s[..., 0]
    return (top > 0.0) & (s[..., -1] > RANK_TOL * top)


def frames_from_jacobians(J):
    """Batched orthonormalisation of Jacobian rows.

    Returns (bases (N, p, n), ok mask). Rows of rank-deficient Jacobians are NaN.
    The sign convention makes basis vector i have a positive component along
    Jacobian row i (positive diagonal of the triangular factor).
    """
    J = np.asarray(J, dtype=np.float64)
    ok = full_rank(singular_values(J))
    bases = np.full(J.shape, np.nan)
    if np.any(ok):
        Q, R = np.linalg.qr(np.swapaxes(J[ok], -1, -2))
        sign = np.sign(np.diagonal(R, axis1=-2, axis2=-1))
        sign[sign == 0] = 1.0
        Q = Q * sign[:, None, :]
        bases[ok] = np.swapaxes(Q, -1, -2)
    return bases, ok


def normal_frame(f: AnalyticMap, x) -> NormalFrame:
    x = np.asarray(x, dtype=np.float64)
    bases, ok = frames_from_jacobians(jacobian(f, x)[None])
    if not ok[0]:
        raise RankDeficientError(f"Jacobian is rank-deficient at {x.tolist()}")
    return NormalFrame(x.copy(), bases[0])


def lambda_from_jacobians(J):
    """Lambda for batched Jacobians: the p-th singular value at full rank, else 0."""
    s = singular_values(np.asarray(J, dtype=np.float64))
    return np.where(full_rank(s), s[..., -1], 0.0)


def lambda_value(f: AnalyticMap, x) -> float:
    """Smallest stretch of d_x f transverse to its kernel (0 when rank < p)."""
    return float(lambda_from_jacobians(jacobian(f, np.asarray(x, dtype=np.float64))))


def _basis(F):
    return F.basis if isinstance(F, NormalFrame) else np.atleast_2d(np.asarray(F, dtype=np.float64))


def principal_angles(B1, B2):
    """Principal angles (descending) between spans of orthonormal row bases.

    Each angle is recovered from both its cosine (singular values of B1 B2^T)
    and its sine (singular values of the residual of B1 after projecting onto
    span B2), which keeps full relative accuracy for nearly parallel spaces.
    """
    B1 = np.asarray(B1, dtype=np.float64)
    B2 = np.asarray(B2, dtype=np.float64)
    M = B1 @ np.swapaxes(B2, -1, -2)
    cos = np.clip(np.linalg.svd(M, compute_uv=False)[..., ::-1], 0.0, 1.0)
    sin = np.clip(np.linalg.svd(B1 - M @ B2, compute_uv=False), 0.0, 1.0)
    return np.arctan2(sin, cos)


def delta_from_bases(B1, B2):
    """Delta between spans of orthonormal row bases; broadcasts over leading axes.

    Infimum over orthonormal bases of max_j ||v1_j - v2_j||. Principal-vector
    differences are mutually orthogonal with norms c_j = 2 sin(theta_j / 2);
    the trace inequality bounds the sum of squared pair distances below by
    sum c_j^2, and a common rotation equalising the rows attains it, so the
    infimum is the root mean square of the c_j. For a single normal direction
    this is the chord 2 sin(theta / 2).
    """
    chords = 2.0 * np.sin(0.5 * principal_angles(B1, B2))
    return np.sqrt(np.mean(chords**2, axis=-1))


def grassmann_delta(F1, F2) -> float:
    """Delta(T1, T2) from normal frames (or orthonormal row bases)."""
    B1, B2 = _basis(F1), _basis(F2)
    if B1.shape != B2.shape:
        raise ValueError(f"frame dimension mismatch: {B1.shape} vs {B2.shape}")
    return float(delta_from_bases(B1, B2))


def _skew(params, p):
    A = np.zeros((p, p))
    iu = np.triu_indices(p, 1)
    A[iu] = params
    return A - A.T


def grassmann_delta_oracle(F1, F2, restarts: int = 20, steps: int = 400, seed: int = 0) -> float:
    """Brute-force minimum of max_j ||v1_j - v2_j|| over orthonormal bases.

    Each basis is moved by an orthogonal p x p matrix (rotation times a
    reflection pattern); a Nelder-Mead search with random restarts minimises
    the pairing cost. Slow; a test oracle only.
    """
    B1, B2 = _basis(F1), _basis(F2)
    if B1.shape != B2.shape:
        raise ValueError(f"frame dimension mismatch: {B1.shape} vs {B2.shape}")
    p = B1.shape[0]
    if p == 1:
        return float(min(np.linalg.norm(B1 - B2), np.linalg.norm(B1 + B2)))
    m = p * (p - 1) // 2
    rng = np.random.default_rng(seed)
    signs = [np.diag(s) for s in np.array(np.meshgrid(*[[1.0, -1.0]] * p)).T.reshape(-1, p)]

    def cost(params, D):
        Q1 = expm(_skew(params[:m], p))
        Q2 = expm(_skew(params[m:], p)) @ D
        diff = Q1 @ B1 - Q2 @ B2
        return float(np.max(np.linalg.norm(diff, axis=1)))

    best = math.inf
    for D in signs:
        for _ in range(restarts):
            x0 = rng.uniform(-math.pi, math.pi, size=2 * m)
            res = minimize(cost, x0, args=(D,), method="Nelder-Mead",
                           options={"maxiter": steps * 2 * m, "xatol": 1e-12, "fatol": 1e-14})
            res = minimize(cost, res.x, args=(D,), method="Nelder-Mead",
                           options={"maxiter": steps * 2 * m, "xatol": 1e-13, "fatol": 1e-15})
            best = min(best, res.fun)
    return float(best)


# ---------------------------------------------------------------- horn tests


@dataclass(frozen=True)
class HornResult:
    inside: bool
    distance: float
    witness: np.ndarray
    delta: float = float("nan")

    def __bool__(self):
        return self.inside


def _cloud(family):
    pts = family.points
    if pts.shape[0] == 0:
        raise ValueError("empty cloud family")
    return pts


def horn_contains(family, x, sigma: float) -> HornResult:
    """Is ``x`` in the horn neighbourhood H(B, sigma) of the sampled set B?"""
    from .sampler import project_to_variety

    x = np.asarray(x, dtype=np.float64)
    nx = float(np.linalg.norm(x))
    if nx == 0.0:
        raise ValueError("horn test needs x != O")
    pts = _cloud(family)
    dist, idx = kernels.nearest(pts, x[None])
    d, y = float(dist[0]), pts[idx[0]]
    if family.map is not None:
        proj = project_to_variety(family.map, x)
        if proj is not None:
            dp = float(np.linalg.norm(x - proj))
            if dp < d:
                d, y = dp, proj
    return HornResult(d < nx**sigma, d, y)


def tangential_horn_contains(family, sample: TangentSample, tau: float, m: int = 8) -> HornResult:
    """Is (x, T_x) in the tangential horn neighbourhood TH(B, tau)?

    Candidates are the ``m`` nearest cloud points plus the Gauss-Newton
    projection of x onto B's defining map; the witness minimises
    max(||x - y||, Delta).
    """
    from .sampler import project_to_variety

    if sample.frame is None:
        raise ValueError("sample has no normal frame")
    x = np.asarray(sample.point, dtype=np.float64)
    nx = float(np.linalg.norm(x))
    pts = _cloud(family)
    frames = family.frames
    idx = kernels.knn(pts, x[None], m)[0]
    cand_pts = [pts[i] for i in idx]
    cand_frames = [frames[i] for i in idx]
    if family.map is not None:
        proj = project_to_variety(family.map, x)
        if proj is not None:
            bases, ok = frames_from_jacobians(jacobian(family.map, proj)[None])
            if ok[0]:
                cand_pts.append(proj)
                cand_frames.append(bases[0])
    bound = nx**tau
    best = None
    for y, B in zip(cand_pts, cand_frames):
        if np.any(np.isnan(B)):
            continue
        d = float(np.linalg.norm(x - y))
        dl = float(delta_from_bases(sample.frame.basis, B))
        score = max(d, dl)
        if best is None or score < best[0]:
            best = (score, d, dl, y)
    if best is None:
        return HornResult(False, math.inf, x, math.inf)
    _, d, dl, y = best
    return HornResult(d < bound and dl < bound, d, np.asarray(y), dl)
