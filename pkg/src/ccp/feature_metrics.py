"""Dissimilarities between feature vectors (columns of the data matrix).

Two metrics are provided:

covariance
    ``1 - max(rho, 0)`` with ``rho`` the Pearson correlation. Negative
    correlation counts as no correlation.
correlation
    ``1 - dCor`` where ``dCor = dCov^2(x, y) / (dCov(x, x) dCov(y, y))``
    is built from doubly centered absolute-difference matrices. Note the
    numerator is the squared distance covariance, so this is the square
    of the textbook distance correlation; both agree at 0 and 1.

Constant features get distance 1 to every other feature in the matrix
fill. Matrix fills are split into fixed-size blocks so that the result is
identical for any worker count.
"""

from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import DataError, as_array

METRICS = ("covariance", "correlation")
_MAGIC = b"CCPD"
_BLOCK = 128


@dataclass(frozen=True)
class DistanceMatrix:
    values: np.ndarray
    metric: str

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric {self.metric!r}")
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError("distance matrix must be square")
        object.__setattr__(self, "values", v)

    @property
    def size(self) -> int:
        return self.values.shape[0]

    def save(self, path) -> None:
        I = self.size
        with Path(path).open("wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<IB", I, METRICS.index(self.metric)))
            fh.write(np.ascontiguousarray(self.values, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "DistanceMatrix":
        raw = Path(path).read_bytes()
        if raw[:4] != _MAGIC:
            raise DataError(f"{path}: not a distance matrix file")
        I, tag = struct.unpack("<IB", raw[4:9])
        values = np.frombuffer(raw[9:], dtype="<f8")
        if values.size != I * I:
            raise DataError(f"{path}: truncated distance matrix")
        return cls(values.reshape(I, I).astype(float), METRICS[tag])


def _check_pair(zi, zj):
    zi = np.asarray(zi, dtype=float).ravel()
    zj = np.asarray(zj, dtype=float).ravel()
    if zi.shape != zj.shape:
        raise ValueError(f"length mismatch: {zi.size} vs {zj.size}")
    if zi.size < 2:
        raise ValueError("need at least two samples")
    return zi, zj


def covariance_distance(zi, zj) -> float:
    zi, zj = _check_pair(zi, zj)
    if np.ptp(zi) == 0 or np.ptp(zj) == 0:
        return 1.0
    a = zi - zi.mean()
    b = zj - zj.mean()
    denom = np.sqrt(np.dot(a, a) * np.dot(b, b))
    if denom == 0:
        return 1.0
    rho = float(np.dot(a, b) / denom)
    return float(np.clip(1.0 - max(min(rho, 1.0), 0.0), 0.0, 1.0))


def double_centered(z) -> np.ndarray:
    """Doubly centered matrix of pairwise absolute differences of ``z``."""
    z = np.asarray(z, dtype=float).ravel()
    a = np.abs(z[:, None] - z[None, :])
    return a - a.mean(axis=0, keepdims=True) - a.mean(axis=1, keepdims=True) + a.mean()


def dcov_sq(zi, zj) -> float:
    """V-statistic squared distance covariance."""
    zi, zj = _check_pair(zi, zj)
    M = zi.size
    return float(np.sum(double_centered(zi) * double_centered(zj)) / (M * M))


def correlation_distance(zi, zj) -> float:
    zi, zj = _check_pair(zi, zj)
    A = double_centered(zi)
    B = double_centered(zj)
    M2 = zi.size ** 2
    vx = np.sum(A * A) / M2
    vy = np.sum(B * B) / M2
    if vx <= 0 or vy <= 0 or np.ptp(zi) == 0 or np.ptp(zj) == 0:
        raise ValueError("constant vector: distance variance is zero")
    dcor = (np.sum(A * B) / M2) / np.sqrt(vx * vy)
    return float(np.clip(1.0 - dcor, 0.0, 1.0))


def _blocks(I: int, size: int = _BLOCK):
    return [(a, min(a + size, I)) for a in range(0, I, size)]


def _run(tasks, threads: int):
    if threads <= 1 or len(tasks) <= 1:
        return [t() for t in tasks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda t: t(), tasks))


def _covariance_matrix(values: np.ndarray, constant: np.ndarray, threads: int) -> np.ndarray:
    M, I = values.shape
    centered = values - values.mean(axis=0)
    norms = np.sqrt(np.einsum("ij,ij->j", centered, centered))
    # spreads so small that the norm underflows count as constant
    constant |= norms == 0
    norms[constant] = 1.0
    unit = centered / norms
    unit[:, constant] = 0.0
    unit_t = np.ascontiguousarray(unit.T)
    out = np.empty((I, I))

    def fill(a, b):
        def task():
            rho = unit_t[a:b] @ unit
            out[a:b] = 1.0 - np.clip(rho, 0.0, 1.0)
        return task

    _run([fill(a, b) for a, b in _blocks(I)], threads)
    return out


def _correlation_matrix(values: np.ndarray, constant: np.ndarray, threads: int,
                        budget: int = 2 ** 24) -> np.ndarray:
    M, I = values.shape
    M2 = M * M
    # Feature block size keeps two blocks of flattened M x M matrices in budget.
    size = max(1, min(_BLOCK, budget // max(M2, 1) // 2))
    blocks = _blocks(I, size)

    def centered_block(a, b):
        return np.stack([double_centered(values[:, j]).ravel() for j in range(a, b)])

    dvar = np.empty(I)
    for a, b in blocks:
        blk = centered_block(a, b)
        dvar[a:b] = np.einsum("ij,ij->i", blk, blk) / M2
    constant |= dvar <= 0
    dsd = np.sqrt(np.where(constant, 1.0, dvar))
    out = np.empty((I, I))

    def fill(bi, bj):
        def task():
            (a, b), (c, d) = bi, bj
            left = centered_block(a, b)
            right = left if bi == bj else centered_block(c, d)
            dc = (left @ right.T) / M2
            dcor = dc / np.outer(dsd[a:b], dsd[c:d])
            out[a:b, c:d] = np.clip(1.0 - dcor, 0.0, 1.0)
        return task

    tasks = [fill(bi, bj) for i, bi in enumerate(blocks) for bj in blocks[i:]]
    _run(tasks, threads)
    return out


def feature_distance_matrix(data, metric: str = "covariance", threads: int = 1) -> DistanceMatrix:
    """Fill the I x I feature dissimilarity matrix for ``metric``.

    The upper triangle is kept and mirrored so the result is exactly
    symmetric.
    """
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")
    values = as_array(data)
    M, I = values.shape
    if M < 2:
        raise ValueError(f"need at least 2 samples, got {M}")
    constant = np.ptp(values, axis=0) == 0
    if metric == "covariance":
        out = _covariance_matrix(values, constant, threads)
    else:
        out = _correlation_matrix(values, constant, threads)
    out = np.triu(out, 1)
    out = out + out.T
    out[constant, :] = 1.0
    out[:, constant] = 1.0
    np.fill_diagonal(out, 0.0)
    return DistanceMatrix(out, metric)
