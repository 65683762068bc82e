"""Acceptance criteria, each at its stated tolerance and time budget.

Every test records one PASS/FAIL line, collected in the pytest summary.
Set CCP_COIL20_CSV (and optionally CCP_COIL20_LABEL) to run the
conditional Coil-20 reproduction check.
"""

import math
import os
import shutil
import subprocess
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
from scipy.stats import pearsonr, spearmanr

import oracles
from acceptance_log import record
from ccp.centrality import (betweenness_centrality, closeness_centrality, degree_centrality,
                            eigenvector_centrality)
from ccp.clustering import kmedoids_partition, partition_loss
from ccp.dataset import load_csv, write_csv
from ccp.evaluation import Pipeline, accuracy_sweep, cross_validate, kernel_grid, subsample_tune
from ccp.feature_metrics import feature_distance_matrix
from ccp.projection import KernelConfig, fit, kernel_values, transform
from ccp.rs_scores import feature_cluster_report, rs_scores
from ccp.shape import extract_isosurface, rigidity_density
from ccp.synthetic import correlated_blobs, two_block

THREADS = os.cpu_count() or 1
N_SWEEP = (10, 20, 30, 40, 50)
SEEDS = (0, 1, 2, 3, 4)


def finish(criterion, checks, elapsed, budget, detail):
    """Record and assert: every check holds and the run fits its budget."""
    ok = all(checks) and elapsed < budget
    record(criterion, ok, f"{detail}; {elapsed:.1f}s (budget {budget}s)")
    assert all(checks), detail
    assert elapsed < budget, f"took {elapsed:.1f}s, budget {budget}s"


# 1 ------------------------------------------------------------------------

def test_criterion_1_kernel_laws():
    start = time.perf_counter()
    eta, r_c = 1.3, 2.5
    d = np.concatenate([np.linspace(0, 5, 2001), [r_c]])
    d.sort()
    checks = []
    for family in ("exponential", "lorentz"):
        for kappa in (0.5, 1, 2, 5):
            for tau in (1, 2, 6):
                phi = kernel_values(d, family, kappa, tau, eta, r_c)
                checks.append(phi[0] == 1.0)
                checks.append(bool(np.all(np.diff(phi) <= 0)))
                checks.append(bool(np.all(phi[d >= r_c] == 0.0)))
                checks.append(bool(np.all(phi[d < r_c] > 0)))
    finish("criterion 1 kernel laws", checks, time.perf_counter() - start, 1,
           f"{len(checks)} exact checks over 24 kernels")


# 2 ------------------------------------------------------------------------

def naive_transform(train, query, clusters, family, kappa, tau):
    """Double loop over query and training rows, per cluster."""
    out = np.zeros((len(query), len(clusters)))
    for n, cols in enumerate(clusters):
        T = train[:, cols]
        Q = query[:, cols]
        M = T.shape[0]
        nearest = []
        for i in range(M):
            d = np.sqrt(((T - T[i]) ** 2).sum(axis=1))
            d[i] = np.inf
            nearest.append(d.min())
        eta = math.fsum(nearest) / M
        for i in range(Q.shape[0]):
            terms = []
            for m in range(M):
                dist = math.sqrt(float(((Q[i] - T[m]) ** 2).sum()))
                terms.append(oracles.kernel(dist, family, kappa, tau, eta))
            out[i, n] = math.fsum(terms)
    return out


def random_graph(n, p, rng):
    A = np.triu(rng.uniform(size=(n, n)) < p, 1)
    return A | A.T


def test_criterion_2_oracle_equivalence():
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    transform_ok = True
    for _ in range(30):
        M = int(rng.integers(20, 201))
        I = int(rng.integers(20, 501))
        N = int(rng.integers(1, 21))
        train = rng.standard_normal((M, I))
        query = rng.standard_normal((5, I))
        kernel = KernelConfig(str(rng.choice(["exponential", "lorentz"])),
                              float(rng.choice([0.5, 1, 2])), float(rng.choice([1, 2, 6])), None)
        model = fit(train, N, kernel=kernel, seed=int(rng.integers(1000)))
        got = transform(model, query)
        want = naive_transform(train, query, model.partition.clusters(), kernel.family,
                               kernel.kappa, kernel.tau)
        rel = float(np.max(np.abs(got - want) / np.abs(want)))
        worst = max(worst, rel)
        transform_ok &= rel <= 1e-12

    rs_ok = True
    for _ in range(10):
        M = int(rng.integers(2, 40))
        pts = rng.standard_normal((M, 3))
        y = rng.integers(0, 3, M)
        R, S = rs_scores(pts, y)
        oR, oS = oracles.rs_scores(pts.tolist(), y.tolist())
        rs_ok &= np.allclose(R, oR, rtol=1e-12, atol=1e-15) and \
            np.allclose(S, oS, rtol=1e-12, atol=1e-15)

    loss_ok = True
    for _ in range(10):
        I = int(rng.integers(2, 60))
        D = rng.uniform(size=(I, I))
        D = (D + D.T) / 2
        np.fill_diagonal(D, 0)
        N = int(rng.integers(1, I + 1))
        part = kmedoids_partition(D, N, seed=int(rng.integers(1000)))
        want = oracles.partition_loss(D.tolist(), part.assignments.tolist(),
                                      part.medoids.tolist())
        loss_ok &= math.isclose(partition_loss(D, part.assignments, part.medoids), want,
                                rel_tol=1e-12, abs_tol=1e-15)

    density_ok = True
    for _ in range(3):
        pts = rng.uniform(-1, 1, size=(20, 2))
        cfg = KernelConfig("exponential", 2.0, 1.0, None)
        grid = rigidity_density(pts, cfg, resolution=15)
        want = [oracles.density(pts.tolist(), node.tolist(), "exponential", 2.0, 1.0, grid.eta)
                for node in grid.nodes()]
        density_ok &= np.allclose(grid.values.ravel(), want, rtol=1e-12, atol=0)

    graph_ok = True
    eig_worst = 0.0
    for g in range(40):
        A = random_graph(2 + g % 7, 0.5, rng)
        adj = [np.flatnonzero(row) for row in A]
        L = A.tolist()
        graph_ok &= degree_centrality(adj).tolist() == [float(sum(r)) for r in L]
        graph_ok &= np.allclose(closeness_centrality(adj), oracles.harmonic_closeness(L),
                                rtol=1e-12, atol=1e-12)
        graph_ok &= np.allclose(betweenness_centrality(adj), oracles.betweenness(L),
                                rtol=1e-12, atol=1e-12)
        err = float(np.max(np.abs(eigenvector_centrality(adj) - oracles.eigenvector(L))))
        eig_worst = max(eig_worst, err)
        graph_ok &= err <= 1e-8

    finish("criterion 2 oracle equivalence",
           [transform_ok, rs_ok, loss_ok, density_ok, graph_ok], time.perf_counter() - start, 30,
           f"transform worst rel err {worst:.1e} (tol 1e-12); rs={rs_ok} loss={loss_ok} "
           f"density={density_ok} centralities={graph_ok} (eigenvector worst {eig_worst:.1e})")


# 3 ------------------------------------------------------------------------

def test_criterion_3_kmedoids_monotone():
    start = time.perf_counter()
    rng = np.random.default_rng(3)
    bad = 0
    for run in range(50):
        I = int(rng.integers(10, 301))
        pts = rng.standard_normal((I, 4))
        D = np.sqrt(((pts[:, None] - pts[None]) ** 2).sum(-1))
        part = kmedoids_partition(D, int(rng.integers(2, 16)), seed=run)
        h = part.loss_history
        bad += any(b > a for a, b in zip(h, h[1:]))
    finish("criterion 3 k-medoids monotonicity", [bad == 0], time.perf_counter() - start, 10,
           f"{50 - bad}/50 runs with non-increasing loss")


# 4 ------------------------------------------------------------------------

def test_criterion_4_two_block_recovery():
    start = time.perf_counter()
    recovered = 0
    construction = True
    for seed in range(10):
        data, truth = two_block(M=200, I=400, seed=seed)
        D = feature_distance_matrix(data, threads=THREADS).values
        same = truth[:, None] == truth[None, :]
        off = ~np.eye(400, dtype=bool)
        construction &= D[same & off].max() < 0.2 and D[~same].min() > 0.8
        model = fit(data, 2, seed=seed, threads=THREADS)
        a = model.partition.assignments
        recovered += bool(np.array_equal(a, truth) or np.array_equal(a, 1 - truth))
    finish("criterion 4 two-block recovery", [construction, recovered >= 9],
           time.perf_counter() - start, 20,
           f"recovered {recovered}/10 seeds (need 9); construction bounds hold={construction}")


# 5 and 7 share one sweep --------------------------------------------------

@pytest.fixture(scope="module")
def blobs():
    data, labels, _ = correlated_blobs(M=300, I=500, n_classes=3, informative=50, seed=0)
    return data, labels


@pytest.fixture(scope="module")
def sweep(blobs):
    start = time.perf_counter()
    result = accuracy_sweep(*blobs, Pipeline(n_components=10, k_nn=5), N_SWEEP, 5, SEEDS,
                            THREADS)
    return result, time.perf_counter() - start


def test_criterion_5_classification(sweep):
    result, elapsed = sweep
    acc = [rep.overall_mean for _, rep in result]
    spread = max(acc) - min(acc)
    failures = sum(rep.failures for _, rep in result)
    finish("criterion 5 end-to-end classification",
           [acc[0] >= 0.95, spread <= 0.03, failures == 0], elapsed, 180,
           f"accuracy at N=10 {acc[0]:.4f} (need >= 0.95); over N={list(N_SWEEP)} "
           f"{[round(a, 4) for a in acc]}, spread {spread:.4f} (need <= 0.03)")


def test_criterion_7_rs_diagnostics(blobs, sweep):
    result, _ = sweep
    start = time.perf_counter()
    acc = np.array([rep.overall_mean for _, rep in result])
    rsi = np.array([rep.rs_indices["rsi"] for _, rep in result])
    r = pearsonr(rsi, acc)[0] if np.ptp(acc) > 0 and np.ptp(rsi) > 0 else math.nan
    data, _ = blobs
    D = feature_distance_matrix(data, threads=THREADS)
    rsd = [feature_cluster_report(data, kmedoids_partition(D, n, seed=0).assignments).rsd
           for n in N_SWEEP]
    rho = spearmanr(N_SWEEP, rsd)[0]
    finish("criterion 7 R-S diagnostics", [r >= 0.7, rho <= -0.5],
           time.perf_counter() - start, 120,
           f"Pearson(RSI, accuracy) {r:.3f} (need >= 0.7; RSI {np.round(rsi, 3).tolist()}, "
           f"accuracy range {np.ptp(acc):.4f}); Spearman(N, feature RSD) {rho:.2f} "
           f"(need <= -0.5; RSD {np.round(rsd, 3).tolist()})")


# 6 ------------------------------------------------------------------------

def test_criterion_6_subsample_stability(blobs):
    start = time.perf_counter()
    data, labels = blobs
    grid = kernel_grid(("exponential", "lorentz"), (1.0, 2.0), (1.0, 2.0, 6.0), 3.0)
    pipe = Pipeline(n_components=10, k_nn=5)
    small = subsample_tune(data, labels, 0.1, 0, grid, pipe, 5, (0,), THREADS)
    full = subsample_tune(data, labels, 1.0, 0, grid, pipe, 5, (0,), THREADS)

    def score(cfg):
        return cross_validate(data, labels, replace(pipe, kernel=cfg), 5, SEEDS,
                              THREADS).overall_mean

    a = score(small)
    b = a if small == full else score(full)
    finish("criterion 6 subsampling stability", [abs(a - b) <= 0.02],
           time.perf_counter() - start, 300,
           f"fraction 0.1 picks {small.to_dict()} -> {a:.4f}; fraction 1.0 picks "
           f"{full.to_dict()} -> {b:.4f}; gap {abs(a - b):.4f} (need <= 0.02)")


# 8 ------------------------------------------------------------------------

def test_criterion_8_shape_fidelity():
    start = time.perf_counter()
    pts = np.array([[0.0, 0.0], [1.0, 0.0]])
    cfg = KernelConfig("exponential", 2.0, 0.4, None)
    grid = rigidity_density(pts, cfg, resolution=128, padding=1.0)
    mesh = extract_isosurface(grid, 0.5)
    h = float(grid.spacing.max())
    measured, roots, interp_ok = [], [], True
    for v in mesh.vertices:
        k = int(np.argmin(np.linalg.norm(pts - v, axis=1)))
        r = float(np.linalg.norm(v - pts[k]))
        u = ((v - pts[k]) / r).tolist()
        roots.append(oracles.contour_root(pts.tolist(), pts[k].tolist(), u, mesh.isovalue,
                                          "exponential", 2.0, 0.4, grid.eta, 1.0))
        measured.append(r)
        cell = np.clip(np.floor((v - grid.origin) / grid.spacing + 1e-9).astype(int), 0,
                       np.asarray(grid.dims) - 2)
        corners = grid.values[cell[0]:cell[0] + 2, cell[1]:cell[1] + 2]
        mu = oracles.density(pts.tolist(), v.tolist(), "exponential", 2.0, 0.4, grid.eta)
        interp_ok &= abs(mu - mesh.isovalue) <= corners.max() - corners.min()
    gap = abs(np.mean(measured) - np.mean(roots))
    finish("criterion 8 shape fidelity", [gap <= 2 * h, interp_ok, len(measured) > 0],
           time.perf_counter() - start, 30,
           f"mean radius {np.mean(measured):.5f} vs root {np.mean(roots):.5f}, gap "
           f"{gap / h:.3f} spacings (need <= 2); {len(measured)} vertices within the cell bound "
           f"={interp_ok}")


# 9 ------------------------------------------------------------------------

COIL = {4: (0.842, 0.158), 16: (0.887, 0.113), 36: (0.952, 0.048), 64: (0.992, -0.008)}


def test_criterion_9_coil20_reproduction():
    path = os.environ.get("CCP_COIL20_CSV")
    if not path:
        record("criterion 9 Coil-20 reproduction", None,
               "conditional; set CCP_COIL20_CSV to a 1440x16384 CSV to run")
        pytest.skip("Coil-20 CSV not supplied")
    start = time.perf_counter()
    data, _ = load_csv(path, label_column=os.environ.get("CCP_COIL20_LABEL"))
    D = feature_distance_matrix(data, threads=THREADS)
    checks, parts = [], []
    for n, (want_rsi, want_rsd) in COIL.items():
        rep = feature_cluster_report(data, kmedoids_partition(D, n, seed=0).assignments)
        checks += [abs(rep.rsi - want_rsi) <= 0.05, abs(rep.rsd - want_rsd) <= 0.05]
        parts.append(f"N={n} RSI {rep.rsi:.3f}/{want_rsi} RSD {rep.rsd:.3f}/{want_rsd}")
    finish("criterion 9 Coil-20 reproduction", checks, time.perf_counter() - start, math.inf,
           "; ".join(parts))


# 10 -----------------------------------------------------------------------

WORKFLOWS = [
    ["fit", "--input", "d.csv", "--labels", "y", "--n", "6", "--out", "model.ccp"],
    ["transform", "--model", "model.ccp", "--input", "d.csv", "--labels", "y",
     "--out", "emb.csv"],
    ["eval", "--input", "d.csv", "--labels", "y", "--n-sweep", "4:8:2", "--folds", "3",
     "--seeds", "2", "--out", "sweep.csv", "--report", "report.json"],
    ["eval", "--input", "d.csv", "--labels", "y", "--reducer", "ccp_centrality",
     "--centrality", "betweenness", "--n-sweep", "4", "--folds", "3", "--seeds", "1",
     "--out", "sweep_betweenness.csv"],
    ["eval", "--input", "d.csv", "--labels", "y", "--reducer", "pca", "--n-sweep", "4",
     "--folds", "3", "--seeds", "1", "--out", "sweep_pca.csv"],
    ["rs", "--input", "emb.csv", "--labels", "y", "--out", "rs.csv"],
    ["fit", "--input", "d.csv", "--labels", "y", "--n", "2", "--out", "model2.ccp"],
    ["transform", "--model", "model2.ccp", "--input", "d.csv", "--labels", "y",
     "--out", "emb2.csv"],
    ["shape", "--input", "emb2.csv", "--labels", "y", "--resolution", "64", "--out", "seg.csv",
     "--grid-out", "grid2.bin"],
    ["fit", "--input", "d.csv", "--labels", "y", "--n", "3", "--out", "model3.ccp"],
    ["transform", "--model", "model3.ccp", "--input", "d.csv", "--labels", "y",
     "--out", "emb3.csv"],
    ["shape", "--input", "emb3.csv", "--labels", "y", "--resolution", "32", "--out", "mesh.obj",
     "--grid-out", "grid3.csv"],
    ["tune", "--input", "d.csv", "--labels", "y", "--fraction", "0.5", "--n", "4", "--folds",
     "3", "--out", "kernel.json"],
    ["cluster-curve", "--input", "d.csv", "--labels", "y", "--n-sweep", "2:10:2",
     "--out", "curve.csv"],
]


def run_workflows(root: Path, source: Path, threads: int) -> dict:
    root.mkdir()
    shutil.copy(source, root / "d.csv")
    for argv in WORKFLOWS:
        proc = subprocess.run([sys.executable, "-m", "ccp", *argv, "--threads", str(threads)],
                              cwd=root, capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
    return {p.name: p.read_bytes() for p in sorted(root.iterdir())}


def test_criterion_10_cli_determinism(tmp_path):
    start = time.perf_counter()
    data, labels, _ = correlated_blobs(M=90, I=60, informative=15, seed=7)
    source = tmp_path / "d.csv"
    write_csv(source, data, labels)
    runs = {(t, k): run_workflows(tmp_path / f"t{t}_{k}", source, t)
            for t in (1, 8) for k in (0, 1)}
    base = runs[(1, 0)]
    same_files = all(set(r) == set(base) for r in runs.values())
    repeat = all(runs[(t, 0)] == runs[(t, 1)] for t in (1, 8))
    across = runs[(1, 0)] == runs[(8, 0)]
    finish("criterion 10 CLI determinism", [same_files, repeat, across],
           time.perf_counter() - start, 120,
           f"{len(WORKFLOWS)} commands, {len(base)} output files; reruns identical={repeat}, "
           f"1 vs 8 threads identical={across}")
