"""Screening step that keeps the top features by full-data importance when p is large."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .backends import evaluate, resolve_backend
from .dataio import Dataset

PRESELECT_ABOVE = 200
N_FITS = 3


@dataclass(frozen=True)
class PreselectionResult:
    kept: np.ndarray
    mean_scores: np.ndarray | None  # None when no fits were run


def n_kept(p: int) -> int:
    if p <= PRESELECT_ABOVE:
        return p
    return math.ceil(max(PRESELECT_ABOVE, p / 20))


def preselect(d: Dataset, backend, seed: int, n_jobs: int = 1) -> PreselectionResult:
    p = d.p
    if p <= PRESELECT_ABOVE:
        return PreselectionResult(np.arange(p), None)

    from joblib import Parallel, delayed

    backend = resolve_backend(backend)
    seeds = np.random.SeedSequence(int(seed)).generate_state(N_FITS, dtype=np.uint64)
    runs = Parallel(n_jobs=n_jobs)(
        delayed(evaluate)(backend, d.features, d.response, d.task, int(s)) for s in seeds
    )
    mean_scores = np.mean(runs, axis=0)
    # stable sort on -score keeps the lower index first among ties
    top = np.argsort(-mean_scores, kind="stable")[: n_kept(p)]
    return PreselectionResult(np.sort(top), mean_scores)
