"""Turn efp scores into selections under an E(FP) or FDR target, and q-values."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SelectionOutcome:
    selected: np.ndarray  # ascending feature indices
    t_used: float
    fdr_estimate: float | None


def _breakpoints(efp):
    """Distinct efp values ascending, with |S(t)| at each one."""
    values = np.sort(np.asarray(efp, dtype=float))
    distinct = np.unique(values)
    sizes = np.searchsorted(values, distinct, side="right")
    return distinct, sizes


def select_at_efp(efp, t: float) -> SelectionOutcome:
    if t < 0:
        raise ValueError("target E(FP) must be nonnegative")
    efp = np.asarray(efp, dtype=float)
    selected = np.flatnonzero(efp <= t)
    fdr = t / selected.size if selected.size else None
    return SelectionOutcome(selected, float(t), fdr)


def select_at_fdr(efp, alpha: float) -> SelectionOutcome:
    """Largest S(t) = {j : efp_j <= t} whose estimated FDR t/|S(t)| is at most alpha.

    On each stretch where |S(t)| is constant the ratio is smallest at the
    left end, so only the distinct efp values need checking.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    efp = np.asarray(efp, dtype=float)
    if efp.size == 0:
        return SelectionOutcome(np.array([], dtype=np.int64), 0.0, None)
    t_values, sizes = _breakpoints(efp)
    ok = np.flatnonzero(t_values / sizes <= alpha)
    if ok.size == 0:
        return SelectionOutcome(np.array([], dtype=np.int64), 0.0, None)
    t = float(t_values[ok[-1]])
    return select_at_efp(efp, t)


def q_values(efp) -> np.ndarray:
    """q_j = min over breakpoints t >= efp_j of t/|S(t)|, capped at 1."""
    efp = np.asarray(efp, dtype=float)
    if efp.size == 0:
        return np.array([])
    t_values, sizes = _breakpoints(efp)
    ratio = t_values / sizes
    # running minimum from the largest breakpoint downwards
    tail_min = np.minimum.accumulate(ratio[::-1])[::-1]
    pos = np.searchsorted(t_values, efp, side="left")
    return np.minimum(tail_min[pos], 1.0)
