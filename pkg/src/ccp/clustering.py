"""Feature partitioning: k-medoids on a feature distance matrix and two
reference schemes (random equal split, equal variance split)."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dataset import as_array
from .feature_metrics import DistanceMatrix, covariance_distance, correlation_distance

UPDATE_RULES = ("min_sum", "center_proxy")
SCHEMES = ("correlated", "random", "variance")
NOT_METRIC_LOSS = -1.0


@dataclass
class FeaturePartition:
    assignments: np.ndarray
    medoids: np.ndarray
    loss: float
    scheme: str = "correlated"
    metric: Optional[str] = None
    seed: Optional[int] = None
    n_iter: int = 0
    loss_history: list = field(default_factory=list)

    def __post_init__(self):
        self.assignments = np.asarray(self.assignments, dtype=np.int64)
        self.medoids = np.asarray(self.medoids, dtype=np.int64)

    @property
    def N(self) -> int:
        return int(self.medoids.size)

    @property
    def I(self) -> int:
        return int(self.assignments.size)

    def members(self, n: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == n)

    def clusters(self) -> list[np.ndarray]:
        return [self.members(n) for n in range(self.N)]

    def validate(self) -> None:
        if self.assignments.min() < 0 or self.assignments.max() >= self.N:
            raise ValueError("cluster id out of range")
        counts = np.bincount(self.assignments, minlength=self.N)
        if np.any(counts == 0):
            raise ValueError(f"empty clusters: {np.flatnonzero(counts == 0).tolist()}")
        if np.any(self.assignments[self.medoids] != np.arange(self.N)):
            raise ValueError("a medoid is not assigned to its own cluster")

    def to_dict(self) -> dict:
        return {
            "N": self.N,
            "assignments": self.assignments.tolist(),
            "medoids": self.medoids.tolist(),
            "loss": self.loss,
            "scheme": self.scheme,
            "metric": self.metric,
            "seed": self.seed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, doc: dict) -> "FeaturePartition":
        part = cls(
            np.array(doc["assignments"]), np.array(doc["medoids"]), float(doc["loss"]),
            scheme=doc.get("scheme", "correlated"), metric=doc.get("metric"),
            seed=doc.get("seed"),
        )
        part.validate()
        return part


def _dist(D) -> np.ndarray:
    return D.values if isinstance(D, DistanceMatrix) else np.asarray(D, dtype=float)


def partition_loss(D, assignments, medoids) -> float:
    """Sum over features of the distance to the medoid of their cluster."""
    D = _dist(D)
    assignments = np.asarray(assignments, dtype=np.int64)
    medoids = np.asarray(medoids, dtype=np.int64)
    I = D.shape[0]
    if assignments.size != I:
        raise ValueError("assignments length does not match the distance matrix")
    if medoids.min() < 0 or medoids.max() >= I:
        raise ValueError("medoid index out of range")
    if assignments.min() < 0 or assignments.max() >= medoids.size:
        raise ValueError("cluster id out of range")
    if np.any(assignments[medoids] != np.arange(medoids.size)):
        raise ValueError("a medoid is not assigned to its own cluster")
    return math.fsum(D[np.arange(I), medoids[assignments]])


def _assign(D: np.ndarray, medoids: np.ndarray) -> np.ndarray:
    # argmin returns the first minimum, i.e. the lowest cluster id; medoids
    # are kept sorted, so that is also the lowest medoid index.
    assignments = np.argmin(D[:, medoids], axis=1)
    assignments[medoids] = np.arange(medoids.size)
    return assignments


def _repair_empty(D, assignments, medoids):
    counts = np.bincount(assignments, minlength=medoids.size)
    for n in np.flatnonzero(counts == 0):
        own = D[np.arange(D.shape[0]), medoids[assignments]]
        own[medoids] = -np.inf
        far = int(np.argmax(own))
        assignments[far] = n
        medoids[n] = far
    return assignments, medoids


def _min_sum_medoid(D, members, current):
    sums = D[np.ix_(members, members)].sum(axis=0)
    best = int(members[np.argmin(sums)])
    if best == current:
        return current
    # Only move on a strict decrease of the exactly rounded cluster cost.
    if math.fsum(D[members, best]) < math.fsum(D[members, current]):
        return best
    return current


def _center_proxy_medoid(values, metric, members):
    center = values[:, members].mean(axis=1)
    pair = covariance_distance if metric == "covariance" else correlation_distance
    best, best_d = int(members[0]), math.inf
    for i in members:
        try:
            d = pair(values[:, i], center)
        except ValueError:
            d = 1.0
        if d < best_d:
            best, best_d = int(i), d
    return best


def kmedoids_partition(D, N: int, seed: int = 0, max_iter: int = 300,
                       update_rule: str = "min_sum", data=None) -> FeaturePartition:
    """Partition features into ``N`` clusters around medoids.

    ``update_rule="min_sum"`` picks, per cluster, the member with the
    smallest total distance to the other members. ``"center_proxy"``
    picks the member closest (under the matrix's metric) to the mean of
    the member columns and needs ``data``.
    """
    values_D = _dist(D)
    I = values_D.shape[0]
    if not 1 <= N <= I:
        raise ValueError(f"cluster count must satisfy 1 <= N <= I={I}, got {N}")
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    if update_rule not in UPDATE_RULES:
        raise ValueError(f"unknown update rule {update_rule!r}")
    metric = D.metric if isinstance(D, DistanceMatrix) else None
    if update_rule == "center_proxy":
        if data is None or metric is None:
            raise ValueError("center_proxy needs the data matrix and a tagged DistanceMatrix")
        values = as_array(data)

    rng = np.random.default_rng(seed)
    medoids = np.sort(rng.choice(I, size=N, replace=False))
    assignments = _assign(values_D, medoids)
    assignments, medoids = _repair_empty(values_D, assignments, medoids)
    history = [partition_loss(values_D, assignments, medoids)]

    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        new = medoids.copy()
        for n in range(N):
            members = np.flatnonzero(assignments == n)
            if update_rule == "min_sum":
                new[n] = _min_sum_medoid(values_D, members, int(medoids[n]))
            else:
                new[n] = _center_proxy_medoid(values, metric, members)
        medoids = np.sort(new)
        updated = _assign(values_D, medoids)
        updated, medoids = _repair_empty(values_D, updated, medoids)
        history.append(partition_loss(values_D, updated, medoids))
        if update_rule == "min_sum" and history[-1] > history[-2]:
            raise AssertionError("k-medoids loss increased")
        changed = not np.array_equal(updated, assignments)
        assignments = updated
        if not changed:
            break

    return FeaturePartition(assignments, medoids, history[-1], scheme="correlated",
                            metric=metric, seed=seed, n_iter=n_iter, loss_history=history)


def loss_curve(D, n_values, seed: int = 0, max_iter: int = 300,
               update_rule: str = "min_sum") -> list[tuple[int, float]]:
    """Final k-medoids loss for each N, for reading off an elbow."""
    return [(int(n), kmedoids_partition(D, int(n), seed, max_iter, update_rule).loss)
            for n in n_values]


def random_equal_partition(I: int, N: int, seed: int = 0) -> FeaturePartition:
    if not 1 <= N <= I:
        raise ValueError(f"cluster count must satisfy 1 <= N <= I={I}, got {N}")
    perm = np.random.default_rng(seed).permutation(I)
    assignments = np.empty(I, dtype=np.int64)
    medoids = np.empty(N, dtype=np.int64)
    for n, block in enumerate(np.array_split(perm, N)):
        assignments[block] = n
        medoids[n] = block[0]
    return FeaturePartition(assignments, medoids, NOT_METRIC_LOSS, scheme="random", seed=seed)


def equal_variance_partition(data, N: int) -> FeaturePartition:
    """Split features, sorted by ascending variance, into clusters holding
    roughly equal shares of the total variance.

    Features are walked in ascending order and a cluster is closed as soon
    as the running variance reaches the next multiple of ``total / N``, or
    when only one feature per still-unopened cluster remains.
    """
    values = as_array(data)
    I = values.shape[1]
    if not 1 <= N <= I:
        raise ValueError(f"cluster count must satisfy 1 <= N <= I={I}, got {N}")
    var = values.var(axis=0)
    if not np.any(var > 0):
        warnings.warn("all features have zero variance; falling back to a random equal partition")
        part = random_equal_partition(I, N, seed=0)
        part.scheme = "variance"
        return part
    norm = var / var.max()
    order = np.argsort(norm, kind="stable")
    target = norm.sum() / N
    assignments = np.empty(I, dtype=np.int64)
    medoids = np.empty(N, dtype=np.int64)
    k, cum, opened = 0, 0.0, True
    for pos, j in enumerate(order):
        if opened:
            medoids[k] = j
            opened = False
        assignments[j] = k
        cum += norm[j]
        remaining = I - pos - 1
        if k < N - 1 and (cum >= (k + 1) * target * (1 - 1e-12) or remaining == N - 1 - k):
            k += 1
            opened = True
    return FeaturePartition(assignments, medoids, NOT_METRIC_LOSS, scheme="variance")
