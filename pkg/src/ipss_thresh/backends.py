"""Importance functions usable by the selection pipeline.

A backend is any picklable callable ``(X, y, task, seed) -> scores`` that
returns one nonnegative importance per column of ``X``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .trees import BOOSTING_CONFIG, FOREST_CONFIG, TreeConfig, fit_boosting_arrays, fit_forest_arrays, mdi_importance


@dataclass(frozen=True)
class BoostingImportance:
    config: TreeConfig = BOOSTING_CONFIG

    def __call__(self, X, y, task, seed):
        cfg = replace(self.config, seed=int(seed), max_depth=1)
        return mdi_importance(fit_boosting_arrays(X, y, task, cfg))


@dataclass(frozen=True)
class ForestImportance:
    config: TreeConfig = FOREST_CONFIG

    def __call__(self, X, y, task, seed):
        cfg = replace(self.config, seed=int(seed))
        return mdi_importance(fit_forest_arrays(X, y, task, cfg))


DEFAULT_B = {"gb": 100, "rf": 50}


def resolve_backend(backend):
    if callable(backend):
        return backend
    if backend == "gb":
        return BoostingImportance()
    if backend == "rf":
        return ForestImportance()
    raise ValueError(f"unknown backend {backend!r}; expected 'gb', 'rf' or a callable")


def evaluate(backend, X, y, task, seed) -> np.ndarray:
    scores = np.asarray(backend(X, y, task, seed), dtype=float)
    if scores.shape != (X.shape[1],):
        raise ValueError(f"backend returned shape {scores.shape}, expected ({X.shape[1]},)")
    if np.isnan(scores).any() or (scores < 0).any():
        raise ValueError("backend returned negative or NaN importance scores")
    return scores
