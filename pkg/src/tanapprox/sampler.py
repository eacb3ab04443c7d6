"""Point clouds of V(f) on shrinking spheres, and the isolated-singularity check.

Points are found by Gauss-Newton with pseudo-inverse steps on the augmented
system ``f(x) = 0, (|x|^2 - r^2) / 2r = 0``, started from quasi-uniform
directions on the sphere. Iteration continues until the step stalls rather
than stopping at the residual tolerance, so regular points are polished to
machine precision and singular points (where convergence is only linear)
are driven close enough to the singular locus for Lambda to expose them.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.stats import norm, qmc

from .expr import AnalyticMap, value_and_jacobian
from .geometry import (
    RANK_TOL,
    NormalFrame,
    TangentSample,
    frames_from_jacobians,
    lambda_from_jacobians,
    singular_values,
)

RES_TOL = 1e-10
SPHERE_TOL = 1e-12
STEP_TOL = 1e-14
DEDUPE = 1e-3
LAMBDA_FLOOR = 1e-8
MAX_ITER = 50


def _residual_ok(F, J):
    jn = np.linalg.norm(J, ord=2, axis=(-2, -1)) if J.ndim == 3 else np.linalg.norm(J, 2)
    return np.linalg.norm(F, axis=-1) <= RES_TOL * np.maximum(1.0, jn)


def gauss_newton(f: AnalyticMap, X0, radius: Optional[float] = None, max_iter: int = MAX_ITER):
    """Batched Gauss-Newton toward V(f) (or V(f) intersected with S_radius).

    Returns the final iterates (NaN rows where an iterate blew up) and the
    number of iterations used per point.
    """
    X = np.array(X0, dtype=np.float64, copy=True)
    if X.ndim == 1:
        X = X[None]
    N = X.shape[0]
    if radius is None:
        scale = np.maximum(np.linalg.norm(X, axis=1), 1e-300)
        scale = np.where(np.linalg.norm(X, axis=1) == 0.0, 1.0, scale)
    else:
        scale = np.full(N, float(radius))
    active = np.isfinite(X).all(axis=1)
    iters = np.zeros(N, dtype=int)
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        Xa = X[idx]
        F, J = value_and_jacobian(f, Xa)
        if radius is not None:
            r = float(radius)
            F = np.concatenate([F, ((np.sum(Xa * Xa, axis=1) - r * r) / (2 * r))[:, None]], axis=1)
            J = np.concatenate([J, (Xa / r)[:, None, :]], axis=1)
        with np.errstate(all="ignore"):
            step = np.einsum("nij,nj->ni", np.linalg.pinv(J, rcond=1e-13), F)
        bad = ~np.isfinite(step).all(axis=1)
        step[bad] = 0.0
        X[idx] = Xa - step
        X[idx[bad]] = np.nan
        iters[idx] += 1
        done = bad | (np.linalg.norm(step, axis=1) <= STEP_TOL * scale[idx])
        active[idx[done]] = False
    return X, iters


def project_to_variety(f: AnalyticMap, x0, max_iter: int = MAX_ITER):
    """Nearby zero of ``f`` reached by Gauss-Newton from ``x0``, or ``None``.

    Fails when the iteration does not meet the residual tolerance or ends at
    a point where the Jacobian vanishes identically (no step is defined).
    """
    x0 = np.asarray(x0, dtype=np.float64)
    Y, _ = project_batch(f, x0[None], max_iter=max_iter)
    return None if np.isnan(Y[0, 0]) else Y[0]


def project_batch(f: AnalyticMap, X0, radius: Optional[float] = None, max_iter: int = MAX_ITER):
    """Batched projection; failed rows are NaN. Returns (points, jacobians)."""
    X, _ = gauss_newton(f, X0, radius=radius, max_iter=max_iter)
    ok = np.isfinite(X).all(axis=1)
    if radius is not None and np.any(ok):
        nrm = np.linalg.norm(X[ok], axis=1)
        X[ok] = X[ok] * (radius / nrm)[:, None]
    J = np.full((X.shape[0], f.codim, f.arity), np.nan)
    if np.any(ok):
        F, Jok = value_and_jacobian(f, X[ok])
        good = _residual_ok(F, Jok) & (np.abs(Jok).max(axis=(1, 2)) > 0.0)
        if radius is not None:
            good &= np.abs(np.linalg.norm(X[ok], axis=1) - radius) <= SPHERE_TOL * radius
        J[ok] = Jok
        ok[np.flatnonzero(ok)[~good]] = False
    X[~ok] = np.nan
    J[~ok] = np.nan
    return X, J


def sphere_directions(n: int, count: int, rng_seed: int) -> np.ndarray:
    """Low-discrepancy unit vectors (scrambled Halton pushed through the normal quantile)."""
    if count <= 0:
        return np.zeros((0, n))
    u = qmc.Halton(d=n, scramble=True, seed=np.random.default_rng(rng_seed)).random(count)
    g = norm.ppf(np.clip(u, 1e-12, 1 - 1e-12))
    nrm = np.linalg.norm(g, axis=1)
    nrm[nrm == 0.0] = 1.0
    return g / nrm[:, None]


def dedupe(points: np.ndarray, radius: float) -> np.ndarray:
    """Indices of a greedy (in input order) subset with pairwise separation >= radius."""
    keep = []
    kept = np.zeros((0, points.shape[1]))
    for i, x in enumerate(points):
        if kept.shape[0]:
            d = np.sqrt(np.min(np.sum((kept - x) ** 2, axis=1)))
            if d < radius:
                continue
        keep.append(i)
        kept = np.vstack([kept, x])
    return np.array(keep, dtype=int)


@dataclass(frozen=True)
class SphereSlice:
    """Sampled V(f) intersected with the sphere of radius ``radius``."""

    radius: float
    map: AnalyticMap
    points: np.ndarray  # (N, n)
    frames: np.ndarray  # (N, p, n), NaN rows at singular points
    lambdas: np.ndarray  # (N,)
    seeds: int = 0
    hits: int = 0

    def __len__(self):
        return self.points.shape[0]

    @property
    def samples(self):
        out = []
        for x, B, lam in zip(self.points, self.frames, self.lambdas):
            frame = None if np.isnan(B).any() else NormalFrame(x, B)
            out.append(TangentSample(x, float(np.linalg.norm(x)), frame, float(lam)))
        return out

    @property
    def regular(self):
        return ~np.isnan(self.frames).any(axis=(1, 2)) & (self.lambdas > 0.0)

    @property
    def coverage(self):
        """Fraction of seeds that converged (a heuristic completeness flag)."""
        return self.hits / self.seeds if self.seeds else 0.0

    def to_jsonl(self) -> str:
        lines = []
        for x, B, lam in zip(self.points, self.frames, self.lambdas):
            frame = None if np.isnan(B).any() else B.tolist()
            rec = {"r": self.radius, "x": x.tolist(), "frame": frame, "lambda": float(lam)}
            lines.append(json.dumps(rec, separators=(",", ":")))
        return "\n".join(lines) + ("\n" if lines else "")

    def to_csv(self) -> str:
        n = self.map.arity
        p = self.map.codim
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        head = ["r"] + [f"x{i + 1}" for i in range(n)] + ["lambda"]
        head += [f"frame_{i + 1}_{j + 1}" for i in range(p) for j in range(n)]
        w.writerow(head)
        for x, B, lam in zip(self.points, self.frames, self.lambdas):
            w.writerow([repr(float(self.radius))] + [repr(float(v)) for v in x] + [repr(float(lam))]
                       + [repr(float(v)) for v in B.reshape(-1)])
        return buf.getvalue()


def read_cloud(text: str) -> np.ndarray:
    """Points from slice JSON lines (or a CSV with x1..xn columns)."""
    text = text.strip()
    if not text:
        return np.zeros((0, 0))
    if text.startswith("{"):
        return np.array([json.loads(line)["x"] for line in text.splitlines() if line.strip()])
    rows = list(csv.DictReader(io.StringIO(text)))
    cols = sorted((k for k in rows[0] if k.startswith("x") and k[1:].isdigit()), key=lambda k: int(k[1:]))
    return np.array([[float(r[c]) for c in cols] for r in rows])


def _finish_slice(f, r, X, seeds):
    """Residual/sphere filtering, dedupe, frames and Lambda for raw iterates."""
    n, p = f.arity, f.codim
    ok = np.isfinite(X).all(axis=1)
    X = X[ok]
    if X.shape[0]:
        X = X * (r / np.linalg.norm(X, axis=1))[:, None]
        F, J = value_and_jacobian(f, X)
        good = _residual_ok(F, J) & (np.abs(np.linalg.norm(X, axis=1) - r) <= SPHERE_TOL * r)
        X, J = X[good], J[good]
    else:
        J = np.zeros((0, p, n))
    hits = X.shape[0]
    keep = dedupe(X, DEDUPE * r)
    X, J = X[keep], J[keep]
    frames, _ = frames_from_jacobians(J) if X.shape[0] else (np.zeros((0, p, n)), None)
    lambdas = lambda_from_jacobians(J) if X.shape[0] else np.zeros(0)
    return SphereSlice(float(r), f, X, frames, lambdas, seeds=seeds, hits=hits)


def sample_slice(f: AnalyticMap, r: float, budget: int = 500, rng_seed: int = 0) -> SphereSlice:
    """Sample V(f) on the sphere of radius ``r`` from ``budget`` seed directions."""
    if r <= 0 or budget < 1:
        raise ValueError("need r > 0 and budget >= 1")
    seeds = r * sphere_directions(f.arity, budget, rng_seed)
    X, _ = gauss_newton(f, seeds, radius=r)
    return _finish_slice(f, r, X, budget)


@dataclass(frozen=True)
class SphereSliceFamily:
    map: AnalyticMap
    slices: tuple
    seed: int = 0
    budget: int = 0

    @property
    def radii(self):
        return tuple(s.radius for s in self.slices)

    @property
    def points(self):
        return np.concatenate([s.points for s in self.slices], axis=0)

    @property
    def frames(self):
        return np.concatenate([s.frames for s in self.slices], axis=0)

    @property
    def lambdas(self):
        return np.concatenate([s.lambdas for s in self.slices], axis=0)

    @property
    def empty_slices(self):
        return [s.radius for s in self.slices if len(s) == 0]

    @property
    def provenance(self):
        return {"map": self.map.source, "digest": self.map.digest, "seed": self.seed, "budget": self.budget}


def geometric_schedule(R: float, rho: float, count: int) -> tuple:
    if not (R > 0 and 0 < rho < 1 and count >= 1):
        raise ValueError("schedule needs R > 0, 0 < rho < 1, count >= 1")
    return tuple(R * rho**j for j in range(count))


def continue_family(f: AnalyticMap, schedule: Sequence[float], budget: int = 500, rng_seed: int = 0) -> SphereSliceFamily:
    """Slices along a decreasing schedule, warm-starting each from the previous one."""
    radii = [float(r) for r in schedule]
    if any(b >= a for a, b in zip(radii, radii[1:])):
        raise ValueError("schedule must be strictly decreasing")
    slices = []
    prev = None
    for j, r in enumerate(radii):
        if prev is None or len(prev) == 0:
            seeds = r * sphere_directions(f.arity, budget, rng_seed + 7919 * j)
        else:
            warm = prev.points * (r / prev.radius)
            fresh = r * sphere_directions(f.arity, max(0, budget - warm.shape[0]), rng_seed + 7919 * j)
            seeds = np.concatenate([warm, fresh], axis=0)
        X, _ = gauss_newton(f, seeds, radius=r)
        prev = _finish_slice(f, r, X, seeds.shape[0])
        slices.append(prev)
    return SphereSliceFamily(f, tuple(slices), seed=rng_seed, budget=budget)


# ---------------------------------------------------------------- IS check

IS_VERDICT = "IS"
ISOLATED = "O isolated"
SINGULAR = "singular locus touches slice"
EMPTY = "empty slice"
DIMENSION = "dimension mismatch"


@dataclass(frozen=True)
class ISRow:
    radius: float
    count: int
    min_lambda: float
    dimension: Optional[int]

    def to_dict(self):
        return {"r": self.radius, "count": self.count, "min_lambda": self.min_lambda,
                "dimension": self.dimension}


@dataclass(frozen=True)
class ISReport:
    arity: int
    codim: int
    rows: tuple
    verdict: str
    lambda_floor: float = LAMBDA_FLOOR

    @property
    def is_IS(self):
        return self.verdict == IS_VERDICT

    @property
    def dimension(self):
        return self.arity - self.codim

    @property
    def label(self):
        if self.is_IS:
            return f"IS of dimension {self.dimension}"
        return self.verdict

    def row_ok(self, row):
        return row.count > 0 and row.min_lambda > self.lambda_floor and row.dimension == self.dimension

    @property
    def passing_radii(self):
        return [row.radius for row in self.rows if self.row_ok(row)]

    def to_dict(self):
        return {"verdict": self.label, "is_IS": self.is_IS, "lambda_floor": self.lambda_floor,
                "rows": [r.to_dict() for r in self.rows]}


def _numerical_dimension(sl: SphereSlice, lambda_floor: float):
    if len(sl) == 0:
        return None
    _, J = value_and_jacobian(sl.map, sl.points)
    s = singular_values(J)
    tol = np.maximum(RANK_TOL * s[:, :1], lambda_floor)
    ranks = np.sum(s > tol, axis=1)
    dims = sl.map.arity - ranks
    return int(np.argmax(np.bincount(dims)))


def summarize_family(family, lambda_floor: float = LAMBDA_FLOOR) -> ISReport:
    """IS verdict from already-sampled slices."""
    f = family.map
    rows = []
    for sl in family.slices:
        min_lam = float(np.min(sl.lambdas)) if len(sl) else float("nan")
        rows.append(ISRow(sl.radius, len(sl), min_lam, _numerical_dimension(sl, lambda_floor)))
    d = f.arity - f.codim
    if all(r.count == 0 for r in rows):
        verdict = ISOLATED
    elif any(r.count > 0 and r.min_lambda <= lambda_floor for r in rows):
        verdict = SINGULAR
    elif any(r.count == 0 for r in rows):
        verdict = EMPTY
    elif any(r.dimension != d for r in rows):
        verdict = DIMENSION
    else:
        verdict = IS_VERDICT
    return ISReport(f.arity, f.codim, tuple(rows), verdict, lambda_floor)


@dataclass(frozen=True)
class _Slices:
    map: AnalyticMap
    slices: tuple


def validate_is(f: AnalyticMap, radii: Sequence[float], budget: int = 500, rng_seed: int = 0,
                lambda_floor: float = LAMBDA_FLOOR) -> ISReport:
    """Check numerically that f defines an isolated singularity at O."""
    if not f.vanishes_at_origin:
        raise ValueError("validate_is needs f(O) = 0")
    slices = tuple(sample_slice(f, r, budget, rng_seed + 7919 * j) for j, r in enumerate(radii))
    return summarize_family(_Slices(f, slices), lambda_floor)
