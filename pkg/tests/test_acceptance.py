"""Exit criteria for the package, one test per criterion.

Each test records a PASS/FAIL line that is echoed in the pytest terminal
summary. Run just this module with ``pytest tests/test_acceptance.py``
(or ``python tests/test_acceptance.py``).
"""

import json
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from taskal.harness import ExperimentConfig, run_al_loop
from taskal.learner import PARAM_NAMES, full_loss, init_model, loss_and_grad
from taskal.metrics import coverage_radius, miou, rmse
from taskal.pca import pca_fit, pca_project
from taskal.pool import EmbeddingMatrix, PoolState
from taskal.samplers import (ScoreVector, bvsb_scores, hybrid_select, kcenter_greedy,
                             uncertainty_select)

from oracles import finite_difference, matrix_greedy, optimal_kcenter_radius, radius, rank_r_data


def test_greedy_oracle_equivalence(criterion):
    rng = np.random.default_rng(20240501)
    mismatches, elapsed = 0, 0.0
    for trial in range(500):
        n = int(rng.integers(1, 201))
        d = int(rng.integers(1, 9))
        if trial % 4 == 0:
            X = rng.integers(-4, 5, size=(n, d)).astype(float)  # many exact ties
        else:
            X = rng.standard_normal((n, d)) * rng.uniform(0.1, 10)
        ids = rng.choice(10 * n, size=n, replace=False)
        k0 = int(rng.integers(0, n))
        s0 = [int(i) for i in rng.choice(ids, size=k0, replace=False)]
        b = int(rng.integers(0 if s0 else 1, min(50, n - k0) + 1))
        Z = EmbeddingMatrix(X, ids)
        t = time.perf_counter()
        got = kcenter_greedy(Z, s0, b)
        elapsed += time.perf_counter() - t
        mismatches += got != matrix_greedy(X, ids, s0, b)
    ok = mismatches == 0 and elapsed < 60.0
    criterion("greedy-oracle equivalence", ok,
              f"{mismatches} mismatches / 500 instances, kcenter time {elapsed:.2f}s (< 60s)")
    assert ok


def test_two_approximation(criterion):
    rng = np.random.default_rng(7)
    violations, worst = 0, 0.0
    for _ in range(200):
        n = int(rng.integers(2, 13))
        k = int(rng.integers(1, min(4, n) + 1))
        X = rng.standard_normal((n, int(rng.integers(1, 4))))
        pts = [tuple(r) for r in X]
        seed_point = int(rng.integers(n))
        picks = kcenter_greedy(EmbeddingMatrix(X, np.arange(n)), [seed_point], k - 1)
        greedy = coverage_radius(EmbeddingMatrix(X, np.arange(n)), [seed_point] + picks)
        opt = optimal_kcenter_radius(pts, k)
        assert greedy == pytest.approx(radius(pts, [seed_point] + picks), abs=1e-12)
        if opt > 0:
            worst = max(worst, greedy / opt)
        violations += greedy > 2 * opt + 1e-12
    ok = violations == 0
    criterion("2-approximation", ok, f"{violations} violations / 200, worst ratio {worst:.3f}")
    assert ok


def test_pca_correctness(criterion):
    rng = np.random.default_rng(11)
    rec_err = ortho_err = trace_err = 0.0
    for r in (1, 2, 4):
        for _ in range(40):
            d = int(rng.integers(r, 17))
            n = int(rng.integers(max(r + 1, 2), 60))
            X = rank_r_data(rng, n, d, r)
            emb = EmbeddingMatrix(X, np.arange(n))
            m = pca_fit(emb, r)
            coords = pca_project(m, emb).data
            rec_err = max(rec_err, float(np.abs(m.reconstruct(coords) - X).max()))
            ortho_err = max(ortho_err, float(np.abs(m.components @ m.components.T - np.eye(r)).max()))
            full = pca_fit(emb, min(n - 1, d))
            ortho_err = max(ortho_err, float(np.abs(full.components @ full.components.T
                                                    - np.eye(full.r)).max()))
            trace_err = max(trace_err, abs(float(full.explained_variance.sum())
                                           - float(X.var(axis=0, ddof=1).sum())))
    ok = rec_err <= 1e-6 and ortho_err <= 1e-6 and trace_err <= 1e-6
    criterion("PCA correctness", ok, f"reconstruction {rec_err:.2e}, orthonormality "
              f"{ortho_err:.2e}, trace {trace_err:.2e} (all <= 1e-6)")
    assert ok


def test_gradient_check(criterion):
    rng = np.random.default_rng(3)
    worst, models = 0.0, 0
    for task in ("classifier", "dense_regressor"):
        for k in range(12):
            d, h, out, n = (int(v) for v in rng.integers(1, 7, size=4))
            out = max(out, 2) if task == "classifier" else out
            model = init_model(task, d, h, out, seed=k)
            model = model.with_flat(model.flat() + rng.normal(0, 0.5, size=model.flat().size))
            X = rng.standard_normal((n, d))
            y = rng.integers(0, out, size=n) if task == "classifier" else rng.standard_normal((n, out))
            _, grad = loss_and_grad(model, X, y)
            analytic = np.concatenate([grad[p].ravel() for p in PARAM_NAMES])
            numeric = finite_difference(lambda v: full_loss(model.with_flat(v), X, y),
                                        model.flat(), eps=1e-5)
            rel = np.abs(analytic - numeric) / np.maximum(1.0, np.abs(numeric))
            worst = max(worst, float(rel.max()))
            models += 1
    ok = worst <= 1e-4 and models >= 20
    criterion("gradient check", ok, f"max relative error {worst:.2e} over {models} models (<= 1e-4)")
    assert ok


def test_bvsb(criterion):
    rng = np.random.default_rng(5)
    C = rng.integers(2, 8)
    P = rng.dirichlet(np.ones(C) * 0.7, size=1000)
    P[::50] = P[::50].round(1)  # some exact ties in the margins
    P = P / P.sum(axis=1, keepdims=True)
    ids = rng.permutation(5000)[:1000]
    scores = bvsb_scores(P, ids=ids)
    oracle = {int(i): sorted(row)[-1] - sorted(row)[-2] for i, row in zip(ids, P.tolist())}
    score_ok = all(abs(scores.values[k] - oracle[int(i)]) <= 1e-15 for k, i in enumerate(ids))
    order = sorted(oracle, key=lambda i: (oracle[i], i))
    got = uncertainty_select(ScoreVector(ids, [oracle[int(i)] for i in ids]), 1000)
    ordering_ok = got == order and uncertainty_select(scores, 1000)[:300] == order[:300]
    exact = (bvsb_scores([[0.5, 0.5]]).values[0] == 0.0
             and bvsb_scores([[1.0, 0.0, 0.0]]).values[0] == 1.0)
    ok = score_ok and ordering_ok and exact
    criterion("BvSB", ok, f"scores match oracle: {score_ok}, ordering matches full sort: "
              f"{ordering_ok}, exact examples: {exact}")
    assert ok


def test_hybrid_bookkeeping(criterion):
    rng = np.random.default_rng(9)
    n, labelled = 900, 100
    Z = EmbeddingMatrix(rng.standard_normal((n, 6)), np.arange(n))
    pool = PoolState.from_ids(range(n), range(labelled))
    scores = ScoreVector(pool.unlabelled, rng.uniform(size=n - labelled))
    failures = []
    for gamma in (0, 0.1, 0.5, 0.75, 1):
        for b in (10, 100, 655):
            out = hybrid_select(Z, pool, scores, b, gamma)
            if len(out) != b or len(set(out)) != b or set(out) & set(pool.labelled):
                failures.append((gamma, b))
    ok = not failures
    criterion("hybrid bookkeeping", ok, f"15 (gamma, b) combinations, failures: {failures}")
    assert ok


def _trend_config(kind, gamma=None):
    return ExperimentConfig.from_dict({
        "task": "toy_classification",
        "strategy": {"kind": kind, "budget": 100, "gamma": gamma},
        "initial_size": 100, "rounds": 5, "seeds": list(range(10)),
        "synthetic": {"n": 2000, "classes": 4},
    })


def _accuracy_table(records):
    seeds = sorted({r.seed for r in records})
    return np.array([[r.value for r in records if r.seed == s and r.metric == "accuracy"]
                     for s in seeds])


def test_trend_reproduction(criterion):
    t = time.perf_counter()
    acc = {}
    for kind, gamma in (("random", None), ("kcenter", None), ("uncertainty", None), ("hybrid", 0.5)):
        acc[kind] = _accuracy_table(run_al_loop(_trend_config(kind, gamma)))
    elapsed = time.perf_counter() - t
    kc, rnd = acc["kcenter"].mean(axis=0), acc["random"].mean(axis=0)
    rounds_ok = bool(np.all(kc[2:6] >= rnd[2:6]))
    rival = np.maximum(acc["uncertainty"][:, -1], acc["kcenter"][:, -1])
    wins = int(np.sum(acc["hybrid"][:, -1] >= rival))
    ok = rounds_ok and wins >= 7 and elapsed < 300
    criterion("trend reproduction", ok,
              f"kcenter - random mean accuracy rounds 2-5: {np.round(kc[2:6] - rnd[2:6], 4).tolist()}; "
              f"hybrid@0.5 >= max(uncertainty, kcenter) at round 5 in {wins}/10 seeds; "
              f"{elapsed:.0f}s (< 300s)")
    assert ok


def test_simulate_determinism(tmp_path, criterion):
    cfg = {"task": "toy_classification",
           "strategy": {"kind": "hybrid", "budget": 50, "gamma": 0.5},
           "initial_size": 50, "rounds": 3, "seeds": [0, 1],
           "learner": {"epochs": 20}, "synthetic": {"n": 600}}
    (tmp_path / "cfg.json").write_text(json.dumps(cfg))
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}.csv"
        subprocess.run([sys.executable, "-m", "taskal.cli", "simulate", "--config",
                        str(tmp_path / "cfg.json"), "--out", str(out)], check=True)
        outs.append(out.read_bytes())
    ok = outs[0] == outs[1] and len(outs[0]) > 0
    criterion("determinism", ok, f"two simulate runs byte-identical: {outs[0] == outs[1]}")
    assert ok


def test_metric_identities(criterion):
    rng = np.random.default_rng(2)
    x = rng.standard_normal(100)
    mask = rng.integers(0, 4, size=(8, 8))
    Z = EmbeddingMatrix(rng.standard_normal((30, 5)), np.arange(30))
    values = (rmse(x, x), miou(mask, mask, 4), coverage_radius(Z, range(30)))
    ok = values == (0.0, 1.0, 0.0)
    criterion("metric identities", ok, f"rmse(x,x)={values[0]}, miou(identical)={values[1]}, "
              f"coverage_radius(all)={values[2]}")
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-rA"]))
