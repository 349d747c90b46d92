"""Monte Carlo error-control benchmark over simulated trials."""

from __future__ import annotations

import csv
import io
import time
from dataclasses import asdict, dataclass

import numpy as np

from .control import select_at_efp, select_at_fdr
from .ipss import IpssConfig, run_ipss
from .simgen import SimConfig, generate_trial, selection_metrics

CSV_HEADER = ["target_kind", "target_value", "mean_fp", "mean_tp", "mean_fdr", "mean_tpr", "trials"]


@dataclass(frozen=True)
class BenchmarkConfig:
    trials: int = 10
    n: int = 500
    p: int = 500
    task: str = "regression"
    method: str = "gb"
    target_efp: tuple[float, ...] = ()
    target_fdr: tuple[float, ...] = ()
    seed: int = 0
    n_jobs: int = 1
    B: int | None = None

    def targets(self):
        return [("efp", float(t)) for t in self.target_efp] + [("fdr", float(a)) for a in self.target_fdr]


def trial_seeds(seed: int, trials: int) -> list[tuple[int, int]]:
    out = []
    for child in np.random.SeedSequence(int(seed)).spawn(trials):
        a, b = child.generate_state(2, dtype=np.uint64)
        out.append((int(a), int(b)))
    return out


def run_benchmark(cfg: BenchmarkConfig, source=None, progress=None) -> dict:
    """Run every trial and score every target on it.

    Returns ``{"summary": [...], "trials": [...]}``; summary rows follow
    ``CSV_HEADER``.
    """
    targets = cfg.targets()
    if not targets:
        raise ValueError("give at least one target E(FP) or target FDR")
    records = []
    for i, (sim_seed, ipss_seed) in enumerate(trial_seeds(cfg.seed, cfg.trials)):
        trial = generate_trial(source, SimConfig(n=cfg.n, p=cfg.p, task=cfg.task, seed=sim_seed))
        start = time.perf_counter()
        result = run_ipss(trial.dataset(), IpssConfig(B=cfg.B, backend=cfg.method, seed=ipss_seed, n_jobs=cfg.n_jobs))
        elapsed = time.perf_counter() - start
        per_target = []
        for kind, value in targets:
            outcome = select_at_efp(result.efp, value) if kind == "efp" else select_at_fdr(result.efp, value)
            m = selection_metrics(trial.S, outcome.selected)
            per_target.append({"target_kind": kind, "target_value": value, **asdict(m),
                               "selected": [int(j) for j in outcome.selected]})
        records.append({
            "trial": i,
            "sim_seed": sim_seed,
            "ipss_seed": ipss_seed,
            "p_true": trial.p_true,
            "true_features": [int(j) for j in trial.S],
            "integral_value": result.integral_value,
            "runtime_seconds": elapsed,
            "results": per_target,
        })
        if progress is not None:
            progress(i, records[-1])

    summary = []
    for t, (kind, value) in enumerate(targets):
        rows = [r["results"][t] for r in records]
        summary.append({
            "target_kind": kind,
            "target_value": value,
            "mean_fp": float(np.mean([r["fp"] for r in rows])),
            "mean_tp": float(np.mean([r["tp"] for r in rows])),
            "mean_fdr": float(np.mean([r["fdr"] for r in rows])),
            "mean_tpr": float(np.mean([r["tpr"] for r in rows])),
            "trials": len(rows),
        })
    return {"summary": summary, "trials": records}


def summary_csv(summary: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in summary:
        writer.writerow([repr(row[k]) if isinstance(row[k], float) else row[k] for k in CSV_HEADER])
    return buf.getvalue()
