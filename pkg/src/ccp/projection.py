"""Rigidity projection of feature clusters.

Each feature cluster ``S`` becomes one output coordinate. For a sample
``z`` the coordinate is the sum, over the retained training rows ``z_m``,
of ``phi(||z[S] - z_m[S]||)`` where ``phi`` is a generalized exponential
or Lorentz kernel whose length scale ``tau * eta`` adapts to the cluster
(``eta`` is the mean nearest-neighbour distance among training rows).
"""

from __future__ import annotations

import json
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .clustering import (FeaturePartition, equal_variance_partition, kmedoids_partition,
                         random_equal_partition)
from .dataset import DataError, as_array, column_stats
from .feature_metrics import feature_distance_matrix

FAMILIES = ("exponential", "lorentz")
FAMILY_ALIASES = {"exp": "exponential", "exponential": "exponential",
                  "lorentz": "lorentz", "lor": "lorentz"}
MODEL_VERSION = 1
_MAGIC = b"CCPM"
_EXACT_PAIRS = 2000
_SAMPLED_PAIRS = 2_000_000
_CELL_MAX_DIM = 6
# Below this many training rows one dense pass is cheaper than binning.
_CELL_MIN_ROWS = 1024
_ROW_BLOCK = 256


@dataclass(frozen=True)
class KernelConfig:
    family: str = "exponential"
    kappa: float = 1.0
    tau: float = 2.0
    # None disables the cutoff; a number s means mean + s * sd of the
    # within-cluster pairwise distances.
    cutoff_sd: Optional[float] = 3.0

    def __post_init__(self):
        family = FAMILY_ALIASES.get(self.family)
        if family is None:
            raise ValueError(f"unknown kernel family {self.family!r}")
        object.__setattr__(self, "family", family)
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.cutoff_sd is not None and self.cutoff_sd < 0:
            raise ValueError("cutoff standard-deviation multiplier must be >= 0")

    @property
    def cutoff_policy(self) -> str:
        return "none" if self.cutoff_sd is None else f"mean_plus_sd({self.cutoff_sd!r})"

    def to_dict(self) -> dict:
        return {"family": self.family, "kappa": self.kappa, "tau": self.tau,
                "cutoff_policy": self.cutoff_policy}

    @classmethod
    def from_dict(cls, doc: dict) -> "KernelConfig":
        policy = doc.get("cutoff_policy", "none")
        if policy == "none":
            sd = None
        elif policy.startswith("mean_plus_sd(") and policy.endswith(")"):
            sd = float(policy[len("mean_plus_sd("):-1])
        else:
            raise ValueError(f"unknown cutoff policy {policy!r}")
        return cls(doc["family"], float(doc["kappa"]), float(doc["tau"]), sd)


def _check_kernel_args(eta, tau, kappa):
    if not eta > 0:
        raise ValueError("eta must be positive")
    if not tau > 0:
        raise ValueError("tau must be positive")
    if not kappa > 0:
        raise ValueError("kappa must be positive")


def kernel_values(dist, family: str, kappa: float, tau: float, eta: float,
                  r_c: float = math.inf) -> np.ndarray:
    """Vectorized kernel; entries with ``dist >= r_c`` are exactly zero."""
    _check_kernel_args(eta, tau, kappa)
    family = FAMILY_ALIASES[family]
    dist = np.asarray(dist, dtype=float)
    scaled = (dist / (tau * eta)) ** kappa
    if family == "exponential":
        out = np.exp(-scaled)
    else:
        out = 1.0 / (1.0 + scaled)
    return np.where(dist < r_c, out, 0.0)


def kernel_eval(dist: float, family: str, kappa: float, tau: float, eta: float,
                r_c: float = math.inf) -> float:
    if dist < 0:
        raise ValueError("distance must be non-negative")
    return float(kernel_values(dist, family, kappa, tau, eta, r_c))


def _nearest_distances(rows: np.ndarray) -> np.ndarray:
    M = rows.shape[0]
    nearest = np.empty(M)
    for a in range(0, M, _ROW_BLOCK):
        d = cdist(rows[a:a + _ROW_BLOCK], rows)
        d[np.arange(d.shape[0]), np.arange(a, a + d.shape[0])] = np.inf
        nearest[a:a + d.shape[0]] = d.min(axis=1)
    return nearest


def cluster_scale_eta(cluster_rows) -> float:
    """Mean over rows of the distance to the nearest other row.

    Falls back to the smallest nonzero pairwise distance when the mean is
    zero, and to 1 when every row is identical.
    """
    rows = as_array(cluster_rows)
    if rows.shape[0] < 2:
        raise ValueError("need at least two rows to define a length scale")
    eta = float(np.mean(_nearest_distances(rows)))
    if eta > 0:
        return eta
    d = pdist(rows)
    nonzero = d[d > 0]
    return float(nonzero.min()) if nonzero.size else 1.0


def cluster_cutoff(cluster_rows, cutoff_sd: Optional[float], seed: int = 0) -> float:
    """Mean plus ``cutoff_sd`` standard deviations of pairwise distances."""
    if cutoff_sd is None:
        return math.inf
    rows = as_array(cluster_rows)
    M = rows.shape[0]
    if M < 2:
        raise ValueError("need at least two rows to define a cutoff")
    if M <= _EXACT_PAIRS:
        d = pdist(rows)
    else:
        rng = np.random.default_rng(seed)
        i = rng.integers(0, M, size=_SAMPLED_PAIRS)
        j = rng.integers(0, M - 1, size=_SAMPLED_PAIRS)
        j = j + (j >= i)
        d = np.sqrt(np.sum((rows[i] - rows[j]) ** 2, axis=1))
    r_c = float(d.mean() + cutoff_sd * d.std())
    # All rows coincide: a zero cutoff would drop even the self term.
    return r_c if r_c > 0 else math.inf


@dataclass
class CcpModel:
    partition: FeaturePartition
    kernel: KernelConfig
    etas: np.ndarray
    cutoffs: np.ndarray
    train_clusters: list
    standardize_flag: bool = False
    center: Optional[np.ndarray] = None
    scale: Optional[np.ndarray] = None
    n_features: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def N(self) -> int:
        return self.partition.N

    @property
    def n_train(self) -> int:
        return self.train_clusters[0].shape[0]

    def validate(self) -> None:
        self.partition.validate()
        if np.any(~(self.etas > 0)):
            raise ValueError("every cluster scale must be positive")
        for n, block in enumerate(self.train_clusters):
            if block.shape[1] != self.partition.members(n).size:
                raise ValueError(f"cluster {n} training block has the wrong width")

    def prepare(self, samples) -> np.ndarray:
        values = as_array(samples)
        if values.shape[1] != self.n_features:
            raise DataError(f"expected {self.n_features} columns, got {values.shape[1]}")
        if self.standardize_flag:
            values = (values - self.center) / self.scale
        return values

    # serialization: JSON header plus a binary sidecar for the training rows
    def to_dict(self) -> dict:
        doc = {
            "version": MODEL_VERSION,
            "kernel": self.kernel.to_dict(),
            "partition": self.partition.to_dict(),
            "etas": [float(v) for v in self.etas],
            "cutoffs": [float(v) if math.isfinite(v) else "inf" for v in self.cutoffs],
            "standardize_flag": self.standardize_flag,
            "n_features": self.n_features,
        }
        if self.standardize_flag:
            doc["center"] = [float(v) for v in self.center]
            doc["scale"] = [float(v) for v in self.scale]
        if self.meta:
            doc["meta"] = self.meta
        return doc

    def save(self, path) -> tuple[Path, Path]:
        path = Path(path)
        sidecar = path.with_name(path.name + ".bin")
        path.write_text(json.dumps(self.to_dict(), indent=1) + "\n")
        with sidecar.open("wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<I", self.N))
            for block in self.train_clusters:
                fh.write(struct.pack("<II", *block.shape))
                fh.write(np.ascontiguousarray(block, dtype="<f8").tobytes())
        return path, sidecar

    @classmethod
    def load(cls, path) -> "CcpModel":
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
            raw = path.with_name(path.name + ".bin").read_bytes()
        except (OSError, ValueError) as exc:
            raise DataError(f"cannot read model {path}: {exc}") from exc
        if doc.get("version") != MODEL_VERSION or raw[:4] != _MAGIC:
            raise DataError(f"{path}: unsupported model format")
        try:
            (N,) = struct.unpack("<I", raw[4:8])
            pos, blocks = 8, []
            for _ in range(N):
                rows, cols = struct.unpack("<II", raw[pos:pos + 8])
                pos += 8
                nbytes = rows * cols * 8
                blocks.append(np.frombuffer(raw[pos:pos + nbytes], dtype="<f8")
                              .reshape(rows, cols).astype(float))
                pos += nbytes
        except (struct.error, ValueError) as exc:
            raise DataError(f"{path}: truncated model sidecar") from exc
        if pos != len(raw):
            raise DataError(f"{path}: trailing bytes in model sidecar")
        model = cls(
            partition=FeaturePartition.from_dict(doc["partition"]),
            kernel=KernelConfig.from_dict(doc["kernel"]),
            etas=np.array(doc["etas"], dtype=float),
            cutoffs=np.array([math.inf if v == "inf" else v for v in doc["cutoffs"]], dtype=float),
            train_clusters=blocks,
            standardize_flag=bool(doc["standardize_flag"]),
            center=np.array(doc["center"]) if "center" in doc else None,
            scale=np.array(doc["scale"]) if "scale" in doc else None,
            n_features=int(doc["n_features"]),
            meta=doc.get("meta", {}),
        )
        model.validate()
        return model


def make_partition(train, N: int, scheme: str = "correlated", metric: str = "covariance",
                   seed: int = 0, max_iter: int = 300, update_rule: str = "min_sum",
                   threads: int = 1) -> FeaturePartition:
    values = as_array(train)
    if scheme == "correlated":
        D = feature_distance_matrix(values, metric, threads=threads)
        return kmedoids_partition(D, N, seed=seed, max_iter=max_iter, update_rule=update_rule,
                                  data=values if update_rule == "center_proxy" else None)
    if scheme == "random":
        return random_equal_partition(values.shape[1], N, seed)
    if scheme == "variance":
        return equal_variance_partition(values, N)
    raise ValueError(f"unknown partition scheme {scheme!r}")


def fit(train, N: int, metric: str = "covariance", kernel: Optional[KernelConfig] = None,
        seed: int = 0, partition_scheme: str = "correlated", standardize: bool = False,
        update_rule: str = "min_sum", max_iter: int = 300, threads: int = 1,
        partition: Optional[FeaturePartition] = None) -> CcpModel:
    """Partition the features of ``train`` and fit per-cluster scales.

    Only training rows are used for the scale and cutoff statistics;
    ``standardize`` z-scores columns with training statistics before
    projection (the clustering metrics are scale invariant already).
    """
    kernel = kernel or KernelConfig()
    values = as_array(train)
    M, I = values.shape
    if M < 2:
        raise ValueError("need at least two training rows")
    if not 1 <= N <= I:
        raise ValueError(f"cluster count must satisfy 1 <= N <= I={I}, got {N}")
    if partition is None:
        partition = make_partition(values, N, partition_scheme, metric, seed, max_iter,
                                   update_rule, threads)
    center = scale = None
    work = values
    if standardize:
        center, scale = column_stats(values)
        work = (values - center) / scale

    blocks = [np.ascontiguousarray(work[:, partition.members(n)]) for n in range(partition.N)]

    def stats(n):
        return cluster_scale_eta(blocks[n]), cluster_cutoff(blocks[n], kernel.cutoff_sd, seed + n)

    results = _map(stats, range(partition.N), threads)
    model = CcpModel(
        partition=partition, kernel=kernel,
        etas=np.array([r[0] for r in results]), cutoffs=np.array([r[1] for r in results]),
        train_clusters=blocks, standardize_flag=standardize, center=center, scale=scale,
        n_features=I,
        meta={"metric": metric, "seed": seed, "scheme": partition.scheme},
    )
    model.validate()
    return model


def _map(fn, items, threads: int):
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


class CellList:
    """Uniform grid over training points with cell side at least ``r_c``.

    Any pair closer than ``r_c`` lies in the same or an adjacent cell, so
    the candidate set of a query is the union of its 3**d neighbour cells.
    """

    def __init__(self, points: np.ndarray, r_c: float):
        self.side = r_c * (1 + 1e-9)
        self.origin = points.min(axis=0)
        keys = np.floor((points - self.origin) / self.side).astype(np.int64)
        self.extent = tuple(int(v) for v in keys.max(axis=0) + 1)
        lin = np.ravel_multi_index(keys.T, self.extent)
        self.order = np.argsort(lin, kind="stable")
        self.sorted_keys = lin[self.order]
        dim = points.shape[1]
        self.offsets = np.array(np.meshgrid(*[[-1, 0, 1]] * dim, indexing="ij")).reshape(dim, -1).T

    @staticmethod
    def feasible(points: np.ndarray, r_c: float) -> bool:
        span = (points.max(axis=0) - points.min(axis=0)) / (r_c * (1 + 1e-9))
        return bool(np.sum(np.log2(span + 2)) < 62)

    def candidate_mask(self, queries: np.ndarray) -> np.ndarray:
        """Boolean (queries x points) mask of pairs in neighbouring cells."""
        Mq, Mt = queries.shape[0], self.order.size
        keys = np.floor((queries - self.origin) / self.side).astype(np.int64)
        extent = np.asarray(self.extent)
        marks = np.zeros((Mq, Mt + 1), dtype=np.int32)
        for off in self.offsets:
            cell = keys + off
            valid = np.all((cell >= 0) & (cell < extent), axis=1)
            if not valid.any():
                continue
            rows = np.flatnonzero(valid)
            lin = np.ravel_multi_index(cell[valid].T, self.extent)
            lo = np.searchsorted(self.sorted_keys, lin, side="left")
            hi = np.searchsorted(self.sorted_keys, lin, side="right")
            np.add.at(marks, (rows, lo), 1)
            np.add.at(marks, (rows, hi), -1)
        inside = np.cumsum(marks, axis=1)[:, :Mt] > 0
        mask = np.empty_like(inside)
        mask[:, self.order] = inside
        return mask


def _rigidity_dense(query, train, kernel: KernelConfig, eta, r_c):
    out = np.empty(query.shape[0])
    for a in range(0, query.shape[0], _ROW_BLOCK):
        d = cdist(query[a:a + _ROW_BLOCK], train)
        k = kernel_values(d, kernel.family, kernel.kappa, kernel.tau, eta, r_c)
        out[a:a + d.shape[0]] = k.sum(axis=1)
    return out


def _rigidity_cells(query, train, kernel: KernelConfig, eta, r_c):
    grid = CellList(train, r_c)
    out = np.empty(query.shape[0])
    row = np.zeros(train.shape[0])
    for a in range(0, query.shape[0], _ROW_BLOCK):
        mask = grid.candidate_mask(query[a:a + _ROW_BLOCK])
        for r, hits in enumerate(mask):
            idx = np.flatnonzero(hits)
            row[:] = 0.0
            if idx.size:
                d = cdist(query[a + r][None, :], train[idx])[0]
                row[idx] = kernel_values(d, kernel.family, kernel.kappa, kernel.tau, eta, r_c)
            # Same layout and reduction as the dense path, so sums are bit-identical.
            out[a + r] = row[None, :].sum(axis=1)[0]
    return out


def rigidity(query, train, kernel: KernelConfig, eta: float, r_c: float = math.inf,
             accelerate: Optional[bool] = None) -> np.ndarray:
    """Kernel sums of each query row against all training rows."""
    query = np.ascontiguousarray(query, dtype=float)
    train = np.ascontiguousarray(train, dtype=float)
    finite = math.isfinite(r_c) and r_c > 0
    if accelerate is None:
        accelerate = (finite and train.shape[1] <= _CELL_MAX_DIM
                      and train.shape[0] >= _CELL_MIN_ROWS)
    if accelerate and finite and CellList.feasible(train, r_c):
        return _rigidity_cells(query, train, kernel, eta, r_c)
    return _rigidity_dense(query, train, kernel, eta, r_c)


def transform(model: CcpModel, samples, threads: int = 1,
              accelerate: Optional[bool] = None) -> np.ndarray:
    """Embed ``samples`` into N coordinates, one per feature cluster.

    A training row transformed by its own model includes its self term
    ``phi(0) = 1``.
    """
    values = model.prepare(samples)
    members = model.partition.clusters()

    def column(n):
        query = values[:, members[n]]
        return rigidity(query, model.train_clusters[n], model.kernel,
                        model.etas[n], model.cutoffs[n], accelerate)

    cols = _map(column, range(model.N), threads)
    return np.column_stack(cols)


def write_embedding_csv(path, embedding, labels=None, label_column: str = "y") -> None:
    emb = np.asarray(embedding, dtype=float)
    header = [f"x{n + 1}" for n in range(emb.shape[1])]
    lines = [",".join(header + ([label_column] if labels is not None else []))]
    for i, row in enumerate(emb):
        cells = [repr(float(v)) for v in row]
        if labels is not None:
            cells.append(str(labels[i]))
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n")
