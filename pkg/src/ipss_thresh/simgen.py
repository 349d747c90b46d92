"""Synthetic trials with nonlinear grouped signal, and selection accuracy metrics."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .dataio import Dataset, standardize_matrix

P_TRUE_RANGE = (10, 30)  # inclusive
SNR_RANGE = (0.5, 2.0)
U_RANGE = (1.0, 3.0)
ALPHA_RANGE = (0.5, 1.5)
BETA_RANGE = (-1.0, 1.0)
GAMMA_RANGE = (1.0, 3.0)

# loadings ~ U(-a, a) with a set so the mean absolute pairwise correlation
# of the standardized columns is about 0.17, as in the expression data
LOADING_SCALE = 0.77


@dataclass(frozen=True)
class ThetaParams:
    alpha: float
    beta: float
    gamma: float
    delta1: int
    delta2: int
    branch: str  # "tanh" or "gaussian"

    @classmethod
    def draw(cls, rng: np.random.Generator) -> "ThetaParams":
        branch = "tanh" if rng.random() < 0.5 else "gaussian"
        return cls(
            alpha=float(rng.uniform(*ALPHA_RANGE)),
            beta=float(rng.uniform(*BETA_RANGE)),
            gamma=float(rng.uniform(*GAMMA_RANGE)),
            delta1=int(rng.choice((-1, 1))),
            delta2=int(rng.choice((-1, 1))),
            branch=branch,
        )


def eval_f_theta(theta: ThetaParams, x):
    x = np.asarray(x, dtype=float)
    if theta.branch == "tanh":
        out = 0.5 * theta.delta1 * (1.0 + np.tanh(theta.alpha * (theta.delta2 * x - theta.beta)))
    elif theta.branch == "gaussian":
        out = theta.delta1 * np.exp(-theta.gamma * x ** 2)
    else:
        raise ValueError(f"unknown branch {theta.branch!r}")
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class SimConfig:
    n: int = 500
    p: int = 500
    task: str = "regression"
    seed: int = 0
    n_factors: int = 10
    p_true_range: tuple[int, int] = P_TRUE_RANGE
    snr_range: tuple[float, float] = SNR_RANGE
    u_range: tuple[float, float] = U_RANGE

    def __post_init__(self):
        if self.task not in ("regression", "classification"):
            raise ValueError(f"unknown task {self.task!r}")
        if self.n < 4:
            raise ValueError("n must be at least 4")
        if self.p_true_range[1] > self.p:
            raise ValueError(f"p_true range {self.p_true_range} exceeds p = {self.p}")


@dataclass(frozen=True)
class SimTrial:
    X: np.ndarray
    y: np.ndarray
    S: np.ndarray
    groups: list[np.ndarray]
    thetas: list[ThetaParams]
    task: str
    snr: float | None = None
    sigma2: float | None = None
    u: float | None = None
    eta: np.ndarray | None = field(default=None, repr=False)
    seed: int = 0

    @property
    def p_true(self) -> int:
        return int(self.S.size)

    def dataset(self) -> Dataset:
        kind = "binary" if self.task == "classification" else "continuous"
        names = tuple(f"x{j + 1}" for j in range(self.X.shape[1]))
        return Dataset(self.X, names, self.y, kind)

    def sidecar(self) -> dict:
        return {
            "task": self.task,
            "seed": self.seed,
            "n": int(self.X.shape[0]),
            "p": int(self.X.shape[1]),
            "true_features": [int(j) for j in self.S],
            "groups": [[int(j) for j in g] for g in self.groups],
            "thetas": [asdict(t) for t in self.thetas],
            "snr": self.snr,
            "sigma2": self.sigma2,
            "u": self.u,
        }

    def save(self, stem) -> tuple[Path, Path]:
        """Write ``<stem>.csv`` (features then ``y``) and ``<stem>.json``."""
        stem = Path(stem)
        frame = pd.DataFrame(self.X, columns=[f"x{j + 1}" for j in range(self.X.shape[1])])
        frame["y"] = self.y
        csv_path = stem.with_suffix(".csv")
        json_path = stem.with_suffix(".json")
        frame.to_csv(csv_path, index=False, float_format="%.17g")
        json_path.write_text(json.dumps(self.sidecar(), indent=2) + "\n")
        return csv_path, json_path


def surrogate_features(n: int, p: int, n_factors: int, rng: np.random.Generator) -> np.ndarray:
    """Correlated stand-in for an expression matrix: factors times uniform loadings plus noise."""
    F = rng.standard_normal((n, n_factors))
    L = rng.uniform(-LOADING_SCALE, LOADING_SCALE, size=(n_factors, p))
    return F @ L + rng.standard_normal((n, p))


def partition_groups(S: np.ndarray, G: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Assign members of S to G groups uniformly, then refill empty groups from the largest."""
    labels = rng.integers(0, G, size=S.size)
    for g in range(G):
        if not np.any(labels == g):
            sizes = np.bincount(labels, minlength=G)
            donor = int(np.argmax(sizes))
            labels[np.flatnonzero(labels == donor)[0]] = g
    return [np.sort(S[labels == g]) for g in range(G)]


def _standardize_vector(v):
    v = v - v.mean()
    sd = np.sqrt(np.mean(v ** 2))
    return v / sd if sd > 0 else v


def generate_trial(source, cfg: SimConfig) -> SimTrial:
    """One simulated dataset.

    ``source`` is a samples-by-features array to draw rows and columns from,
    or None to generate surrogate features.
    """
    rng = np.random.default_rng(np.random.SeedSequence(int(cfg.seed)))
    n, p = cfg.n, cfg.p
    if source is None:
        X = surrogate_features(n, p, cfg.n_factors, rng)
    else:
        source = np.asarray(source, dtype=float)
        if source.shape[0] < n or source.shape[1] < p:
            raise ValueError(f"source matrix {source.shape} is smaller than the requested {n} x {p}")
        rows = rng.choice(source.shape[0], size=n, replace=False)
        cols = rng.choice(source.shape[1], size=p, replace=False)
        X = source[np.ix_(rows, cols)]
    X, _ = standardize_matrix(X)

    lo, hi = cfg.p_true_range
    if hi > p:
        raise ValueError(f"p_true range {cfg.p_true_range} exceeds p = {p}")
    p_true = int(rng.integers(lo, hi + 1))
    S = np.sort(rng.choice(p, size=p_true, replace=False))
    G = int(rng.integers(p_true // 2, p_true + 1))
    groups = partition_groups(S, G, rng)

    eta = np.zeros(n)
    thetas = []
    for g in groups:
        xi = _standardize_vector(X[:, g].sum(axis=1))
        theta = ThetaParams.draw(rng)
        thetas.append(theta)
        eta += eval_f_theta(theta, xi)

    if cfg.task == "regression":
        snr = float(rng.uniform(*cfg.snr_range))
        sigma2 = float(np.sum(eta ** 2) / (n * snr))
        y = eta + rng.normal(0.0, np.sqrt(sigma2), size=n)
        return SimTrial(X, y, S, groups, thetas, cfg.task, snr=snr, sigma2=sigma2, eta=eta, seed=cfg.seed)

    u = float(rng.uniform(*cfg.u_range))
    prob = 1.0 / (1.0 + np.exp(-u * eta))
    y = (rng.random(n) < prob).astype(float)
    return SimTrial(X, y, S, groups, thetas, cfg.task, u=u, eta=eta, seed=cfg.seed)


@dataclass(frozen=True)
class SelectionMetrics:
    tp: int
    fp: int
    fn: int
    fdr: float
    tpr: float


def selection_metrics(S_true, S_hat) -> SelectionMetrics:
    truth = {int(j) for j in S_true}
    chosen = {int(j) for j in S_hat}
    tp = len(truth & chosen)
    fp = len(chosen - truth)
    fn = len(truth - chosen)
    fdr = fp / (tp + fp) if tp + fp else 0.0
    tpr = tp / (tp + fn) if tp + fn else 0.0
    return SelectionMetrics(tp, fp, fn, fdr, tpr)
