"""kNN classification, cross-validation, a PCA baseline and subsampled
kernel-parameter tuning."""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .centrality import centrality_project
from .dataset import as_array, as_labels, column_stats, make_folds, subsample
from .projection import FAMILIES, KernelConfig, fit, transform
from .rs_scores import rs_report

log = logging.getLogger(__name__)

REDUCERS = ("ccp", "ccp_centrality", "pca", "none")
_QUERY_BLOCK = 512


class ConvergenceError(ArithmeticError):
    """An iterative solver ran out of sweeps."""


def knn_classify(train_points, train_labels, query_points, k: int = 5) -> np.ndarray:
    """Majority vote among the k nearest training points.

    Distance ties go to the lower training index; vote ties go to the
    label whose member appears first in distance order.
    """
    train = as_array(train_points)
    query = as_array(query_points)
    y = as_labels(train_labels)
    if not 1 <= k <= train.shape[0]:
        raise ValueError(f"k must satisfy 1 <= k <= {train.shape[0]}, got {k}")
    out = np.empty(query.shape[0], dtype=np.int64)
    n_labels = int(y.max()) + 1
    for a in range(0, query.shape[0], _QUERY_BLOCK):
        d = cdist(query[a:a + _QUERY_BLOCK], train, "sqeuclidean")
        nearest = np.argsort(d, axis=1, kind="stable")[:, :k]
        for r, idx in enumerate(nearest):
            votes = y[idx]
            counts = np.bincount(votes, minlength=n_labels)
            best = counts.max()
            out[a + r] = next(v for v in votes if counts[v] == best)
    return out


def pca_baseline_fit_transform(train, test, N: int, seed: int = 0, tol: float = 1e-10,
                               max_sweeps: int = 1000):
    """Project onto the top-N principal directions of the training rows.

    Directions come from orthogonal (block power) iteration on the
    training covariance with a few extra guard vectors, and a
    Rayleigh-Ritz rotation every sweep; only the top N Ritz pairs have to
    meet the residual test. Each direction is signed so its
    largest-magnitude entry is positive.
    """
    X = as_array(train)
    T = as_array(test)
    M, I = X.shape
    if not 1 <= N <= min(M, I):
        raise ValueError(f"component count must satisfy 1 <= N <= {min(M, I)}, got {N}")
    mean = X.mean(axis=0)
    Xc = X - mean
    C = Xc.T @ Xc / M
    scale = np.linalg.norm(C) or 1.0
    # guard vectors make the rate lambda_{b+1}/lambda_N rather than lambda_{N+1}/lambda_N
    b = min(I, N + max(5, N // 2))
    Q, _ = np.linalg.qr(np.random.default_rng(seed).standard_normal((I, b)))
    for _ in range(max_sweeps):
        Z = C @ Q
        theta, U = np.linalg.eigh((Q.T @ Z + Z.T @ Q) / 2)
        U = U[:, ::-1]
        W = Q @ U[:, :N]
        if np.linalg.norm(Z @ U[:, :N] - W * theta[::-1][:N]) <= tol * scale:
            break
        Q, _ = np.linalg.qr(Z @ U)
    else:
        raise ConvergenceError(f"orthogonal iteration did not converge in {max_sweeps} sweeps")
    pivot = np.argmax(np.abs(W), axis=0)
    W = W * np.sign(W[pivot, np.arange(N)])
    return Xc @ W, (T - mean) @ W


@dataclass(frozen=True)
class Pipeline:
    reducer: str = "ccp"
    n_components: int = 10
    metric: str = "covariance"
    kernel: KernelConfig = field(default_factory=KernelConfig)
    partition_scheme: str = "correlated"
    update_rule: str = "min_sum"
    standardize: bool = False
    centrality: str = "degree"
    rc_fraction: float = 0.7
    k_nn: int = 5
    post_scale: bool = False

    def __post_init__(self):
        if self.reducer not in REDUCERS:
            raise ValueError(f"unknown reducer {self.reducer!r}; expected one of {REDUCERS}")

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["kernel"] = self.kernel.to_dict()
        return doc


def reduce(pipeline: Pipeline, train, test, seed: int = 0, threads: int = 1):
    """Fit the pipeline's reducer on ``train`` and embed both row sets."""
    if pipeline.reducer == "none":
        return as_array(train), as_array(test)
    if pipeline.reducer == "pca":
        return pca_baseline_fit_transform(train, test, pipeline.n_components, seed=seed)
    model = fit(train, pipeline.n_components, metric=pipeline.metric, kernel=pipeline.kernel,
                seed=seed, partition_scheme=pipeline.partition_scheme,
                standardize=pipeline.standardize, update_rule=pipeline.update_rule,
                threads=threads)
    if pipeline.reducer == "ccp":
        return transform(model, train, threads), transform(model, test, threads)
    return (centrality_project(model, None, pipeline.centrality, pipeline.rc_fraction, threads),
            centrality_project(model, test, pipeline.centrality, pipeline.rc_fraction, threads))


def _post_scale(train_emb, test_emb):
    center, scale = column_stats(train_emb)
    return (train_emb - center) / scale, (test_emb - center) / scale


@dataclass
class FoldResult:
    seed: int
    fold: int
    test: np.ndarray
    accuracy: Optional[float]
    predictions: Optional[np.ndarray]
    rs: Optional[dict]
    error: Optional[str] = None


@dataclass
class CvReport:
    per_fold_accuracy: list
    per_seed_mean: list
    overall_mean: float
    overall_sd: float
    per_class_accuracy: list
    predictions: list
    failures: int
    rs_indices: dict
    config_echo: dict

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)


def _compact(y):
    _, inv = np.unique(y, return_inverse=True)
    return inv


def run_fold(data, labels, pipeline: Pipeline, train_idx, test_idx, seed: int, fold: int,
             threads: int = 1) -> FoldResult:
    X = as_array(data)
    y = as_labels(labels)
    try:
        tr, te = reduce(pipeline, X[train_idx], X[test_idx], seed=seed, threads=threads)
        if pipeline.post_scale:
            tr, te = _post_scale(tr, te)
        if not (np.all(np.isfinite(tr)) and np.all(np.isfinite(te))):
            raise FloatingPointError("non-finite embedding")
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        log.warning("seed %d fold %d failed: %s", seed, fold, exc)
        return FoldResult(seed, fold, test_idx, None, None, None, str(exc))
    pred = knn_classify(tr, y[train_idx], te, pipeline.k_nn)
    acc = float(np.mean(pred == y[test_idx]))
    rep = rs_report(te, _compact(y[test_idx]))
    rs = {"ri": rep.ri, "si": rep.si, "rsd": rep.rsd, "rsi": rep.rsi}
    return FoldResult(seed, fold, test_idx, acc, pred, rs)


def cross_validate(data, labels, pipeline: Optional[Pipeline] = None, k_folds: int = 5,
                   seeds: Sequence[int] = (0,), threads: int = 1) -> CvReport:
    """k-fold cross-validation repeated over seeds.

    The reducer is fit on each fold's training rows only. Failed folds are
    counted and left out of every mean.
    """
    pipeline = pipeline or Pipeline()
    X = as_array(data)
    y = as_labels(labels)
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ValueError("need at least one seed")
    if y.size != X.shape[0]:
        raise ValueError("labels length does not match the data")
    tasks = []
    for s in seeds:
        plan = make_folds(X.shape[0], k_folds, s)
        tasks += [(s, f, tr, te) for f, (tr, te) in enumerate(plan.folds)]

    def work(task):
        s, f, tr, te = task
        return run_fold(X, y, pipeline, tr, te, s, f)

    if threads > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, tasks))
    else:
        results = [work(t) for t in tasks]
    return _aggregate(results, seeds, y, pipeline, k_folds)


def _aggregate(results, seeds, y, pipeline, k_folds) -> CvReport:
    L = int(y.max()) + 1
    per_fold, per_seed, predictions = [], [], []
    correct = np.zeros(L)
    total = np.zeros(L)
    rs_rows = []
    for s in seeds:
        rows = [r for r in results if r.seed == s]
        accs = [r.accuracy for r in rows]
        per_fold.append(accs)
        ok = [a for a in accs if a is not None]
        per_seed.append(float(np.mean(ok)) if ok else None)
        pred = np.full(y.size, -1, dtype=np.int64)
        for r in rows:
            if r.predictions is not None:
                pred[r.test] = r.predictions
                rs_rows.append(r.rs)
        predictions.append(pred.tolist())
        seen = pred >= 0
        total += np.bincount(y[seen], minlength=L)
        correct += np.bincount(y[seen], weights=(pred[seen] == y[seen]), minlength=L)
    ok_seed = [m for m in per_seed if m is not None]
    flat = [a for accs in per_fold for a in accs if a is not None]
    failures = sum(a is None for accs in per_fold for a in accs)
    rs = {key: float(np.mean([r[key] for r in rs_rows])) if rs_rows else None
          for key in ("ri", "si", "rsd", "rsi")}
    with np.errstate(invalid="ignore", divide="ignore"):
        per_class = np.where(total > 0, correct / np.maximum(total, 1), np.nan)
    return CvReport(
        per_fold_accuracy=per_fold,
        per_seed_mean=per_seed,
        overall_mean=float(np.mean(ok_seed)) if ok_seed else math.nan,
        overall_sd=float(np.std(flat)) if flat else math.nan,
        per_class_accuracy=[None if math.isnan(v) else float(v) for v in per_class],
        predictions=predictions,
        failures=failures,
        rs_indices=rs,
        config_echo={"pipeline": pipeline.to_dict(), "k_folds": k_folds, "seeds": list(seeds)},
    )


def accuracy_sweep(data, labels, pipeline: Pipeline, n_values: Sequence[int], k_folds: int = 5,
                   seeds: Sequence[int] = (0,), threads: int = 1) -> list[tuple[int, CvReport]]:
    return [(int(n), cross_validate(data, labels, replace(pipeline, n_components=int(n)),
                                    k_folds, seeds, threads))
            for n in n_values]


def write_sweep_csv(path, sweep) -> None:
    L = len(sweep[0][1].per_class_accuracy) if sweep else 0
    header = ["N", "mean", "sd", "failures", "ri", "si", "rsd", "rsi"]
    header += [f"class_{l}" for l in range(L)]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for n, rep in sweep:
            rs = rep.rs_indices
            row = [n, repr(rep.overall_mean), repr(rep.overall_sd), rep.failures]
            row += [repr(rs[k]) if rs[k] is not None else "" for k in ("ri", "si", "rsd", "rsi")]
            row += ["" if v is None else repr(v) for v in rep.per_class_accuracy]
            writer.writerow(row)


def kernel_grid(families: Sequence[str] = FAMILIES, kappas: Sequence[float] = (1.0, 2.0),
                taus: Sequence[float] = (1.0, 2.0, 6.0),
                cutoff_sd: Optional[float] = 3.0) -> list[KernelConfig]:
    return [KernelConfig(f, float(k), float(t), cutoff_sd)
            for f in families for k in kappas for t in taus]


def _tie_key(cfg: KernelConfig):
    return (cfg.kappa, cfg.tau, FAMILIES.index(cfg.family))


def grid_scores(data, labels, grid: Sequence[KernelConfig], pipeline: Optional[Pipeline] = None,
                k_folds: int = 5, seeds: Sequence[int] = (0,),
                threads: int = 1) -> list[tuple[KernelConfig, float]]:
    pipeline = pipeline or Pipeline()
    return [(cfg, cross_validate(data, labels, replace(pipeline, kernel=cfg), k_folds, seeds,
                                 threads).overall_mean)
            for cfg in grid]


def subsample_tune(data, labels, fraction: float, seed: int, param_grid: Sequence[KernelConfig],
                   pipeline: Optional[Pipeline] = None, k_folds: int = 5,
                   seeds: Sequence[int] = (0,), threads: int = 1) -> KernelConfig:
    """Pick the kernel with the best CV accuracy on a row subsample.

    Ties prefer smaller kappa, then smaller tau, then the exponential
    family.
    """
    if not param_grid:
        raise ValueError("empty parameter grid")
    sub, sub_labels, _ = subsample(data, labels, fraction, seed)
    if sub.n_samples < 2 * k_folds:
        raise ValueError(f"subsample of {sub.n_samples} rows is too small for {k_folds}-fold CV")
    scores = grid_scores(sub, sub_labels, param_grid, pipeline, k_folds, seeds, threads)
    # A grid point whose every fold failed scores NaN and never wins.
    best = max(scores, key=lambda item: (-math.inf if math.isnan(item[1]) else item[1],
                                         tuple(-v for v in _tie_key(item[0]))))
    return best[0]
