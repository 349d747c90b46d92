"""Acceptance checks. Each test records one PASS/FAIL line, printed at the end of the run."""

import csv
import json
import math
import os
import time
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import ACCEPTANCE_RESULTS
from ipss_thresh.cli import main
from ipss_thresh.control import q_values, select_at_efp
from ipss_thresh.dataio import Dataset
from ipss_thresh.ipss import (
    IpssConfig, _selection_counts, ipss_from_scores, lambda_grid, q_hat, run_ipss, selection_probabilities,
)
from ipss_thresh.simgen import (
    ALPHA_RANGE, BETA_RANGE, GAMMA_RANGE, SNR_RANGE, U_RANGE, SimConfig, generate_trial,
)
from ipss_thresh.trees import best_split, delta_impurity, fit_forest_arrays, impurity, mdi_importance, TreeConfig
from test_trees import frac_delta, frac_impurity, oracle_split

FIXTURES = Path(__file__).with_name("fixtures") / "score_matrices.npz"
THREADS = str(max(1, min(4, os.cpu_count() or 1)))


def record(name, ok, detail=""):
    ACCEPTANCE_RESULTS[name] = (bool(ok), detail)
    print(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")
    assert ok, f"{name}: {detail}"


# ---------------------------------------------------------------- 1, 2

@pytest.fixture(scope="module")
def benchmark_summary(tmp_path_factory):
    out = tmp_path_factory.mktemp("bench") / "summary.csv"
    code = main(["benchmark", "--trials", "25", "--n", "300", "--p", "500", "--task", "regression",
                 "--method", "gb", "--target-efp", "3", "--target-fdr", "0.2", "--seed", "2024",
                 "--source", "surrogate", "--threads", THREADS, "--out", str(out)])
    assert code == 0
    rows = {(r["target_kind"], float(r["target_value"])): r for r in csv.DictReader(out.open())}
    return rows


def test_1_efp_control(benchmark_summary):
    r = benchmark_summary[("efp", 3.0)]
    fp, tp = float(r["mean_fp"]), float(r["mean_tp"])
    record("1. E(FP) control", fp <= 5.0 and tp >= 3.0,
           f"mean FP {fp:.2f} (<= 5.0), mean TP {tp:.2f} (>= 3.0) over {r['trials']} trials")


def test_2_fdr_control(benchmark_summary):
    r = benchmark_summary[("fdr", 0.2)]
    fdr = float(r["mean_fdr"])
    record("2. FDR control", fdr <= 0.35, f"mean FDR {fdr:.3f} (<= 0.35), mean TP {float(r['mean_tp']):.2f}")


# ---------------------------------------------------------------- 3

def oracle_efp(scores, K=100, cutoff=0.05, m=3, sub=64):
    """Plain-loop re-derivation of the efp scores for delta = 1."""
    rows, p = scores.shape
    B = rows // 2
    lam0 = max(float(v) for v in scores.ravel())
    lams = [lam0 * 10.0 ** (-8.0 * k / K) for k in range(K + 1)]

    def n_selected(col, lam):
        return sum(1 for b in range(rows) if scores[b, col] >= lam)

    def integrand(q):
        return q * q / (B * B * p) + 3 * q ** 4 / (B * p ** 3) + q ** 6 / p ** 5

    num = den = 0.0
    k_star = K
    for i in range(K):
        hi, lo = lams[i], lams[i + 1]
        mid = math.sqrt(hi * lo)
        q = sum(n_selected(j, mid) for j in range(p)) / rows
        mass = math.log(hi) - math.log(lo)
        num += mass * integrand(q)
        den += mass
        if num / den >= cutoff:
            k_star = i + 1
            break
    I = num / den

    # dense re-integration: each grid interval cut into `sub` log-equal pieces,
    # h_m(pi) read at the interval's lower grid point
    efp = []
    for j in range(p):
        acc = total = 0.0
        for i in range(k_star):
            hi, lo = lams[i], lams[i + 1]
            pi = n_selected(j, lo) / rows
            h = (2 * pi - 1) ** m if pi >= 0.5 else 0.0
            edges = [hi * (lo / hi) ** (s / sub) for s in range(sub + 1)]
            for a, b in zip(edges[:-1], edges[1:]):
                piece = math.log(a / b)
                acc += h * piece
                total += piece
        denom = acc / total
        efp.append(float(p) if denom == 0 or I == 0 else min(I / denom, p))
    return np.array(efp), k_star, I


def test_3_efp_matches_oracle():
    store = np.load(FIXTURES)
    worst = 0.0
    for name in store.files:
        S = store[name]
        efp, _, k, I, _ = ipss_from_scores(S, IpssConfig())
        want, k_o, I_o = oracle_efp(S)
        assert k == k_o, name
        worst = max(worst, abs(I - I_o), float(np.max(np.abs(efp - want))))
    record("3. efp vs brute-force oracle", worst <= 1e-10,
           f"{len(store.files)} stored score matrices, max abs difference {worst:.2e} (<= 1e-10)")


# ---------------------------------------------------------------- 4

CASES = 200
PROPERTY_COUNTS: dict[str, int] = {}


def random_scores(seed):
    gen = np.random.default_rng(seed)
    B = int(gen.integers(1, 16))
    p = int(gen.integers(2, 45))
    kind = gen.integers(0, 3)
    if kind == 0:
        S = gen.exponential(size=(2 * B, p)) * (gen.random((2 * B, p)) < gen.uniform(0.05, 0.9))
    elif kind == 1:
        S = gen.integers(0, 5, size=(2 * B, p)) / 5.0  # heavy ties
    else:
        S = gen.pareto(1.2, size=(2 * B, p))
    S[:, : int(gen.integers(0, min(p, 5) + 1))] += gen.uniform(0, 4)
    if not S.max() > 0:
        S[0, 0] = 1.0
    return S


def count(name):
    PROPERTY_COUNTS[name] = PROPERTY_COUNTS.get(name, 0) + 1


seeds = st.integers(0, 2 ** 63 - 1)


@settings(max_examples=CASES, deadline=None)
@given(seeds)
def test_4a_efp_range(seed):
    S = random_scores(seed)
    p = S.shape[1]
    efp, _, _, I, _ = ipss_from_scores(S, IpssConfig())
    count("efp range")
    assert np.all(efp <= p)
    assert np.all(efp >= min(I, p) - 1e-12 * p)


@settings(max_examples=CASES, deadline=None)
@given(seeds, st.floats(0, 50), st.floats(0, 50))
def test_4b_nested_selection(seed, t1, t2):
    efp, *_ = ipss_from_scores(random_scores(seed), IpssConfig())
    lo, hi = sorted((t1, t2))
    count("nestedness")
    assert set(select_at_efp(efp, lo).selected) <= set(select_at_efp(efp, hi).selected)


@settings(max_examples=CASES, deadline=None)
@given(seeds)
def test_4c_q_value_monotone(seed):
    efp, *_ = ipss_from_scores(random_scores(seed), IpssConfig())
    q = q_values(efp)
    order = np.argsort(efp, kind="stable")
    count("q-value monotonicity")
    assert np.all(np.diff(q[order]) >= 0)
    assert np.all((q >= 0) & (q <= 1))


class ScaledBackend:
    """Cheap deterministic importance (|correlation| with a seeded jitter), times c."""

    def __init__(self, c):
        self.c = c

    def __call__(self, X, y, task, seed):
        gen = np.random.default_rng(seed)
        yc = y - y.mean()
        corr = np.abs((X - X.mean(0)).T @ yc) / (np.linalg.norm(yc) * np.sqrt(X.shape[0]) + 1e-300)
        keep = gen.random(X.shape[1]) < 0.7
        return self.c * corr * keep


@settings(max_examples=CASES, deadline=None)
@given(seeds)
def test_4d_scale_equivariance(seed):
    gen = np.random.default_rng(seed)
    n, p = int(gen.integers(12, 60)), int(gen.integers(3, 30))
    X = gen.normal(size=(n, p))
    y = X[:, 0] * gen.uniform(0, 3) + gen.normal(size=n)
    d = Dataset.from_arrays(X, y, response_kind="continuous")
    B = int(gen.integers(2, 12))
    base = run_ipss(d, IpssConfig(B=B, backend=ScaledBackend(1.0), seed=seed % 1000))
    for c in (1e-3, 1.0, 1e3):
        res = run_ipss(d, IpssConfig(B=B, backend=ScaledBackend(c), seed=seed % 1000))
        assert res.k_star == base.k_star
        np.testing.assert_allclose(res.lambda_interval, np.multiply(base.lambda_interval, c), rtol=1e-12)
        np.testing.assert_array_equal(res.curves.pi_hat, base.curves.pi_hat)
        assert np.max(np.abs(res.efp - base.efp)) <= 1e-10
    count("scale equivariance")


@settings(max_examples=CASES, deadline=None)
@given(seeds)
def test_4e_selection_curves_monotone(seed):
    S = random_scores(seed)
    curves = selection_probabilities(S, lambda_grid(S, 100))
    count("pi-hat monotonicity")
    assert np.all(np.diff(curves.pi_hat, axis=1) >= 0)
    assert np.all((curves.pi_hat >= 0) & (curves.pi_hat <= 1))


@settings(max_examples=CASES, deadline=None)
@given(seeds)
def test_4f_q_hat_is_sum_of_pi(seed):
    S = random_scores(seed)
    grid = lambda_grid(S, 100)
    lams = np.concatenate([grid.points, grid.midpoints])
    counts = _selection_counts(S, lams)
    rows = S.shape[0]
    count("q-hat = sum of pi-hat")
    # compare in counts, where the identity is exact integer arithmetic
    np.testing.assert_array_equal(np.rint(q_hat(S, lams) * rows).astype(np.int64), counts.sum(axis=0))
    assert np.all(q_hat(S, lams) == counts.sum(axis=0) / rows)


def test_4_summary():
    names = ["efp range", "nestedness", "q-value monotonicity", "scale equivariance",
             "pi-hat monotonicity", "q-hat = sum of pi-hat"]
    got = {k: PROPERTY_COUNTS.get(k, 0) for k in names}
    record("4. invariant suite", all(v >= CASES for v in got.values()),
           ", ".join(f"{k}: {v}" for k, v in got.items()))


# ---------------------------------------------------------------- 5

def test_5_tree_oracles():
    gen = np.random.default_rng(55)
    worst, mismatches, nodes = 0.0, 0, 0
    for _ in range(2000):
        task = "classification" if gen.random() < 0.5 else "regression"
        n, p = int(gen.integers(2, 9)), int(gen.integers(1, 5))
        X = gen.integers(-3, 4, size=(n, p)).astype(float)
        y = (gen.integers(0, 2, size=n) if task == "classification" else gen.integers(-5, 6, size=n)).astype(float)
        worst = max(worst, abs(impurity(y, task) - float(frac_impurity(y.tolist(), task))))
        if n >= 2:
            cut = int(gen.integers(1, n))
            got = delta_impurity(y, y[:cut], y[cut:], task)
            worst = max(worst, abs(got - float(frac_delta(y.tolist(), y[:cut].tolist(), y[cut:].tolist(), task))))
        f, thr, gain = best_split(X, y, task)
        of, othr, ogain = oracle_split(X, y, task)
        worst = max(worst, abs(gain - float(ogain)))
        mismatches += f != of or (f >= 0 and thr != othr)
        nodes += 1

    identity_ok = True
    for seed in range(10):
        g2 = np.random.default_rng(seed)
        X = g2.normal(size=(60, 6))
        y = X[:, 0] + g2.normal(size=60)
        e = fit_forest_arrays(X, y, "regression", TreeConfig(n_trees=1, seed=seed))
        per = np.zeros(6)
        for node in e.trees[0].split_nodes():
            per[node.feature] += node.delta_impurity
        identity_ok &= np.array_equal(mdi_importance(e) * 1, per)
    ok = worst <= 1e-12 and mismatches == 0 and identity_ok
    record("5. tree oracles", ok,
           f"{nodes} random nodes, max error {worst:.1e}, split mismatches {mismatches}, MDI identity {identity_ok}")


# ---------------------------------------------------------------- 6

def test_6_control_example():
    efp = np.array([0.05, 0.05, 2.0])
    q = q_values(efp)
    from ipss_thresh.control import select_at_fdr
    sel = select_at_fdr(efp, 0.1).selected.tolist()
    grid = np.linspace(0.05, 3.0, 10_000)
    sizes = (efp[None, :] <= grid[:, None]).sum(axis=1)
    ratio = grid / sizes
    scan_q = np.array([min(1.0, ratio[grid >= e].min()) for e in efp])
    scan_sel = np.flatnonzero(efp <= grid[ratio <= 0.1].max()).tolist()
    step = grid[1] - grid[0]
    ok = (np.allclose(q, [0.025, 0.025, 2 / 3], rtol=0, atol=1e-15) and sel == [0, 1]
          and scan_sel == sel and np.all(np.abs(scan_q - q) <= step))
    record("6. control worked example", ok, f"q = {np.round(q, 6).tolist()}, FDR 0.1 selects {sel}")


# ---------------------------------------------------------------- 7

def test_7_simulation_generator():
    problems = []
    worst_std = 0.0
    base = np.random.SeedSequence(7).generate_state(100, dtype=np.uint64)
    for i, s in enumerate(base):
        task = "regression" if i % 2 == 0 else "classification"
        tr = generate_trial(None, SimConfig(n=300, p=500, task=task, seed=int(s)))
        X, n = tr.X, tr.X.shape[0]
        worst_std = max(worst_std, np.abs(X.mean(0)).max(), np.abs(X.std(0) - 1).max())
        G = len(tr.groups)
        if not 10 <= tr.p_true <= 30 or not tr.p_true // 2 <= G <= tr.p_true:
            problems.append(f"trial {i}: p_true {tr.p_true}, G {G}")
        for th in tr.thetas:
            if not (ALPHA_RANGE[0] <= th.alpha <= ALPHA_RANGE[1] and BETA_RANGE[0] <= th.beta <= BETA_RANGE[1]
                    and GAMMA_RANGE[0] <= th.gamma <= GAMMA_RANGE[1] and th.delta1 in (-1, 1)
                    and th.delta2 in (-1, 1) and th.branch in ("tanh", "gaussian")):
                problems.append(f"trial {i}: theta {th}")
        # eta rebuilt from the stored groups and parameters
        eta = np.zeros(n)
        for g, th in zip(tr.groups, tr.thetas):
            xi = X[:, g].sum(axis=1)
            xi = (xi - xi.mean()) / xi.std()
            if th.branch == "tanh":
                eta += 0.5 * th.delta1 * (1 + np.tanh(th.alpha * (th.delta2 * xi - th.beta)))
            else:
                eta += th.delta1 * np.exp(-th.gamma * xi ** 2)
        if np.max(np.abs(eta - tr.eta)) > 1e-10:
            problems.append(f"trial {i}: eta mismatch")
        if np.max(np.abs(tr.eta)) > G:
            problems.append(f"trial {i}: |eta| exceeds G")
        if task == "regression":
            if not SNR_RANGE[0] <= tr.snr <= SNR_RANGE[1]:
                problems.append(f"trial {i}: snr {tr.snr}")
            if tr.sigma2 != np.sum(tr.eta ** 2) / (n * tr.snr):
                problems.append(f"trial {i}: sigma2")
        else:
            if not U_RANGE[0] <= tr.u <= U_RANGE[1] or not set(np.unique(tr.y)) <= {0.0, 1.0}:
                problems.append(f"trial {i}: u {tr.u}")
    ok = not problems and worst_std < 1e-8
    record("7. simulation generator", ok,
           f"100 trials, max standardization residual {worst_std:.1e}, problems: {problems[:3] or 'none'}")


# ---------------------------------------------------------------- 8

def test_8_performance(tmp_path):
    gen = np.random.default_rng(8)
    X = gen.normal(size=(500, 2000))
    y = X[:, :5].sum(axis=1) + gen.normal(size=500)
    path = tmp_path / "big.csv"
    header = ",".join([f"g{j}" for j in range(2000)] + ["y"])
    body = np.column_stack([X, y])
    np.savetxt(path, body, delimiter=",", header=header, comments="", fmt="%.17g")
    start = time.perf_counter()
    code = main(["select", "--data", str(path), "--response", "y", "--method", "gb", "--B", "100",
                 "--target-efp", "1", "--threads", THREADS, "--out", str(tmp_path / "r.json")])
    wall = time.perf_counter() - start
    record("8. performance", code == 0 and wall <= 60.0,
           f"select gb n=500 p=2000 B=100 in {wall:.1f} s (<= 60 s) with {THREADS} thread(s)")


# ---------------------------------------------------------------- 9

def test_9_determinism(tmp_path):
    gen = np.random.default_rng(9)
    X = gen.normal(size=(90, 12))
    y = (X[:, 2] + 0.5 * gen.normal(size=90) > 0).astype(int)
    data = tmp_path / "d.csv"
    lines = [",".join([f"v{j}" for j in range(12)] + ["label"])]
    lines += [",".join([*(repr(float(v)) for v in row), str(t)]) for row, t in zip(X, y)]
    data.write_text("\n".join(lines) + "\n")

    outputs = {}
    for method in ("gb", "rf"):
        for threads in ("1", "3"):
            out = tmp_path / f"{method}_{threads}.json"
            assert main(["select", "--data", str(data), "--response", "label", "--method", method, "--B", "6",
                         "--target-fdr", "0.2", "--seed", "5", "--no-timing", "--threads", threads,
                         "--out", str(out)]) == 0
            outputs[(method, threads)] = out.read_bytes()
    same_select = all(outputs[(m, "1")] == outputs[(m, "3")] for m in ("gb", "rf"))

    for tag in ("a", "b"):
        assert main(["simulate", "--n", "50", "--p", "40", "--trials", "2", "--seed", "3",
                     "--out-dir", str(tmp_path / tag)]) == 0
    same_sim = all((tmp_path / "a" / f.name).read_bytes() == f.read_bytes() for f in (tmp_path / "b").iterdir())

    bench = []
    for threads in ("1", "2"):
        out = tmp_path / f"bench_{threads}.csv"
        assert main(["benchmark", "--trials", "3", "--n", "60", "--p", "40", "--B", "4", "--target-efp", "1",
                     "--target-fdr", "0.3", "--seed", "4", "--threads", threads, "--out", str(out)]) == 0
        bench.append(out.read_bytes())
        side = json.loads(out.with_suffix(".json").read_text())
        for r in side["trials"]:
            r.pop("runtime_seconds", None)
        bench.append(json.dumps(side["trials"]).encode())
    same_bench = bench[0] == bench[2] and bench[1] == bench[3]
    record("9. determinism", same_select and same_sim and same_bench,
           f"select {same_select}, simulate {same_sim}, benchmark {same_bench}")
