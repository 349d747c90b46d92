"""Integrated path stability selection applied to importance-score thresholding.

Pipeline: optional preselection, 2B half-sample importance fits, a
geometric threshold grid, selection-probability curves, the stopping rule
for the integration interval, and per-feature efp scores.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed

from . import control
from .backends import DEFAULT_B, evaluate, resolve_backend
from .dataio import Dataset, standardize_columns
from .preselect import preselect

log = logging.getLogger(__name__)

GRID_DECADES = 8


@dataclass(frozen=True)
class SubsamplePlan:
    pairs: list[tuple[np.ndarray, np.ndarray]]
    per_pair_seeds: np.ndarray
    master_seed: int

    @property
    def B(self) -> int:
        return len(self.pairs)


@dataclass(frozen=True)
class LambdaGrid:
    points: np.ndarray  # decreasing, length K + 1

    @property
    def K(self) -> int:
        return self.points.size - 1

    @property
    def midpoints(self) -> np.ndarray:
        return np.sqrt(self.points[:-1] * self.points[1:])


@dataclass(frozen=True)
class SelectionCurves:
    pi_hat: np.ndarray  # p x (K + 1)


@dataclass(frozen=True)
class IpssConfig:
    B: int | None = None  # None: 100 for gb, 50 for rf
    cutoff: float = 0.05
    delta: float = 1.0
    K: int = 100
    m: int = 3
    backend: object = "gb"
    seed: int = 0
    n_jobs: int = 1
    preselect: bool = True

    def __post_init__(self):
        if self.cutoff <= 0:
            raise ValueError("cutoff must be positive")
        if self.K < 2:
            raise ValueError("grid size K must be at least 2")
        if self.m not in (1, 2, 3):
            raise ValueError("m must be 1, 2 or 3")
        if self.B is not None and self.B < 1:
            raise ValueError("B must be at least 1")

    @property
    def n_pairs(self) -> int:
        if self.B is not None:
            return self.B
        return DEFAULT_B.get(self.backend, 100) if isinstance(self.backend, str) else 100


@dataclass(frozen=True)
class IpssResult:
    efp: np.ndarray
    q_values: np.ndarray
    lambda_interval: tuple[float, float]
    integral_value: float
    k_star: int
    preselected: np.ndarray
    curves: SelectionCurves | None
    runtime_seconds: float
    B: int
    warnings: list[str] = field(default_factory=list)


class NoInformativeFeatures(ValueError):
    pass


def make_subsample_plan(n: int, B: int, seed: int) -> SubsamplePlan:
    if n < 4:
        raise ValueError("need at least 4 samples to draw two halves of size >= 2")
    half = n // 2
    children = np.random.SeedSequence(int(seed)).spawn(B)
    pairs = []
    seeds = np.empty(B, dtype=np.uint64)
    for b, child in enumerate(children):
        rng = np.random.default_rng(child)
        perm = rng.permutation(n)
        pairs.append((np.sort(perm[:half]), np.sort(perm[half:2 * half])))
        seeds[b] = rng.integers(0, 2 ** 63, dtype=np.uint64)
    return SubsamplePlan(pairs, seeds, int(seed))


def _half_seeds(pair_seed) -> tuple[int, int]:
    a, b = np.random.SeedSequence(int(pair_seed)).generate_state(2, dtype=np.uint64)
    return int(a), int(b)


def compute_scores(d: Dataset, plan: SubsamplePlan, backend, n_jobs: int = 1) -> np.ndarray:
    """2B x p matrix; rows 2b and 2b+1 come from the two halves of pair b."""
    backend = resolve_backend(backend)
    X, y = d.features, d.response
    jobs = []
    for (first, second), pair_seed in zip(plan.pairs, plan.per_pair_seeds):
        s1, s2 = _half_seeds(pair_seed)
        jobs.append((first, s1))
        jobs.append((second, s2))
    rows = Parallel(n_jobs=n_jobs)(
        delayed(evaluate)(backend, X[idx], y[idx], d.task, s) for idx, s in jobs
    )
    return np.vstack(rows)


def lambda_grid(scores: np.ndarray, K: int) -> LambdaGrid:
    top = float(np.max(scores)) if np.size(scores) else 0.0
    if not top > 0:
        raise NoInformativeFeatures("no informative features: every importance score is zero")
    exponents = -GRID_DECADES * np.arange(K + 1) / K
    return LambdaGrid(top * 10.0 ** exponents)


def _selection_counts(scores: np.ndarray, lams: np.ndarray) -> np.ndarray:
    """counts[j, k] = #{b : scores[b, j] >= lams[k]}."""
    sorted_scores = np.sort(scores, axis=0)
    rows = scores.shape[0]
    counts = np.empty((scores.shape[1], lams.size), dtype=np.int64)
    for j in range(scores.shape[1]):
        counts[j] = rows - np.searchsorted(sorted_scores[:, j], lams, side="left")
    return counts


def selection_probabilities(scores: np.ndarray, grid: LambdaGrid) -> SelectionCurves:
    return SelectionCurves(_selection_counts(scores, grid.points) / scores.shape[0])


def q_hat(scores: np.ndarray, lam) -> np.ndarray | float:
    """Average size of {j : score >= lam} over the score rows."""
    lam_arr = np.atleast_1d(np.asarray(lam, dtype=float))
    flat = np.sort(np.asarray(scores, dtype=float).ravel())
    out = (flat.size - np.searchsorted(flat, lam_arr, side="left")) / scores.shape[0]
    return float(out[0]) if np.ndim(lam) == 0 else out


def bound_integrand(q, B: int, p: int):
    q = np.asarray(q, dtype=float)
    out = q ** 2 / (B ** 2 * p) + 3 * q ** 4 / (B * p ** 3) + q ** 6 / p ** 5
    return float(out) if out.ndim == 0 else out


def interval_masses(points: np.ndarray, delta: float) -> np.ndarray:
    """Unnormalized mass of lambda^-delta on each [points[i+1], points[i]]."""
    hi, lo = points[:-1], points[1:]
    if delta == 1:
        return np.log(hi / lo)
    e = 1.0 - delta
    return (hi ** e - lo ** e) / e


def mu_weights(grid_prefix, delta: float = 1.0) -> np.ndarray:
    points = np.asarray(grid_prefix, dtype=float)
    if points.size < 2:
        raise ValueError("need at least one interval")
    masses = interval_masses(points, delta)
    return masses / masses.sum()


def find_lambda_min(scores: np.ndarray, grid: LambdaGrid, cfg: IpssConfig) -> tuple[int, float]:
    """Smallest k with the running integral over [lambda_k, lambda_0] at or above the cutoff.

    The measure is renormalized over each candidate interval. If the full
    grid never reaches the cutoff, returns (K, achieved integral).
    """
    B = scores.shape[0] // 2
    p = scores.shape[1]
    integrand = bound_integrand(q_hat(scores, grid.midpoints), B, p)
    masses = interval_masses(grid.points, cfg.delta)
    running = np.cumsum(masses * integrand) / np.cumsum(masses)
    hit = np.flatnonzero(running >= cfg.cutoff)
    k = int(hit[0]) + 1 if hit.size else grid.K
    return k, float(running[k - 1])


def score_transform(x, m: int = 3):
    x = np.asarray(x, dtype=float)
    out = np.where(x >= 0.5, (2 * x - 1) ** m, 0.0)
    return float(out) if out.ndim == 0 else out


def efp_scores(curves: SelectionCurves, k_star: int, weights, integral_value: float, p: int, m: int = 3) -> np.ndarray:
    """efp_j = min(I / sum_i w_i h_m(pi_j), p) over the first k_star grid intervals.

    Each interval [lambda_{i+1}, lambda_i] reads pi at its lower end
    lambda_{i+1}.
    """
    weights = np.asarray(weights, dtype=float)
    if weights.size != k_star:
        raise ValueError("expected one weight per interval of the integration range")
    pi_low = curves.pi_hat[:, 1:k_star + 1]
    denom = score_transform(pi_low, m) @ weights
    efp = np.full(denom.shape, float(p))
    if integral_value > 0:
        pos = denom > 0
        efp[pos] = np.minimum(integral_value / denom[pos], p)
    return efp


def ipss_from_scores(scores: np.ndarray, cfg: IpssConfig):
    """Grid, stopping index, curves and efp scores for a fixed score matrix."""
    p = scores.shape[1]
    grid = lambda_grid(scores, cfg.K)
    k_star, integral = find_lambda_min(scores, grid, cfg)
    curves = selection_probabilities(scores, grid)
    weights = mu_weights(grid.points[:k_star + 1], cfg.delta)
    efp = efp_scores(curves, k_star, weights, integral, p, cfg.m)
    return efp, grid, k_star, integral, curves


def run_ipss(d: Dataset, cfg: IpssConfig = IpssConfig()) -> IpssResult:
    start = time.perf_counter()
    notes: list[str] = []
    backend = resolve_backend(cfg.backend)
    pre_seed, plan_seed = np.random.SeedSequence(int(cfg.seed)).generate_state(2, dtype=np.uint64)
    d, _ = standardize_columns(d)

    kept = np.arange(d.p)
    if cfg.preselect:
        kept = preselect(d, backend, int(pre_seed), cfg.n_jobs).kept
    sub = d if kept.size == d.p else Dataset(d.features[:, kept], tuple(d.feature_names[j] for j in kept),
                                             d.response, d.response_kind)

    plan = make_subsample_plan(sub.n, cfg.n_pairs, int(plan_seed))
    scores = compute_scores(sub, plan, backend, cfg.n_jobs)

    efp = np.full(d.p, float(d.p))
    try:
        efp_kept, grid, k_star, integral, curves = ipss_from_scores(scores, cfg)
    except NoInformativeFeatures as exc:
        notes.append(str(exc))
        log.warning("%s; every efp score set to p", exc)
        k_star, integral, curves, interval = 0, 0.0, None, (0.0, 0.0)
    else:
        efp[kept] = efp_kept
        interval = (float(grid.points[k_star]), float(grid.points[0]))
        if integral < cfg.cutoff:
            msg = f"integral {integral:.3g} stayed below cutoff {cfg.cutoff} over the whole grid"
            notes.append(msg)
            log.warning(msg)

    return IpssResult(
        efp=efp,
        q_values=control.q_values(efp),
        lambda_interval=interval,
        integral_value=integral,
        k_star=k_star,
        preselected=kept,
        curves=curves,
        runtime_seconds=time.perf_counter() - start,
        B=plan.B,
        warnings=notes,
    )
