"""Residue-similarity scores and indices.

For a point ``x_m`` in class ``l``:

* residue ``R_m``: summed Euclidean distance to points of other classes,
  divided by the largest such sum over the data set;
* similarity ``S_m``: mean over class ``l`` (itself included) of
  ``1 - ||x_m - x_j|| / d_max`` with ``d_max`` the largest pairwise
  distance.

Class indices average these per class (CRI, CSI); RI and SI average the
class indices; RSD = RI - SI and RSI = 1 - |RI - SI|.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.spatial.distance import cdist

from .dataset import as_array, as_labels, standardize


@dataclass
class RsReport:
    R: np.ndarray
    S: np.ndarray
    cri: np.ndarray
    csi: np.ndarray
    ri: float
    si: float
    rsd: float
    rsi: float
    labels_used: np.ndarray
    predicted: Optional[np.ndarray] = None

    def to_dict(self) -> dict:
        doc = {
            "R": self.R.tolist(), "S": self.S.tolist(),
            "cri": self.cri.tolist(), "csi": self.csi.tolist(),
            "ri": self.ri, "si": self.si, "rsd": self.rsd, "rsi": self.rsi,
            "labels_used": self.labels_used.tolist(),
        }
        if self.predicted is not None:
            doc["predicted"] = self.predicted.tolist()
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _inputs(points, labels):
    x = as_array(points)
    y = as_labels(labels)
    if x.shape[0] == 0:
        raise ValueError("no points")
    if y.shape != (x.shape[0],):
        raise ValueError(f"labels length {y.size} does not match {x.shape[0]} points")
    return x, y


def rs_scores(points, labels) -> tuple[np.ndarray, np.ndarray]:
    x, y = _inputs(points, labels)
    d = cdist(x, x)
    same = y[:, None] == y[None, :]
    raw = np.where(same, 0.0, d).sum(axis=1)
    r_max = raw.max()
    R = raw / r_max if r_max > 0 else np.zeros_like(raw)
    d_max = d.max()
    if d_max > 0:
        sim = np.where(same, 1.0 - d / d_max, 0.0).sum(axis=1)
        S = sim / same.sum(axis=1)
    else:
        S = np.ones(x.shape[0])
    return np.clip(R, 0.0, 1.0), np.clip(S, 0.0, 1.0)


def rs_indices(R, S, labels, L: Optional[int] = None, predicted=None) -> RsReport:
    R = np.asarray(R, dtype=float)
    S = np.asarray(S, dtype=float)
    y = as_labels(labels)
    if not (R.shape == S.shape == y.shape):
        raise ValueError("R, S and labels must have equal lengths")
    if L is None:
        L = int(getattr(labels, "L", y.max() + 1))
    counts = np.bincount(y, minlength=L)
    if counts.size > L:
        raise ValueError("label id exceeds the class count")
    if np.any(counts == 0):
        raise ValueError(f"classes without members: {np.flatnonzero(counts == 0).tolist()}")
    cri = np.bincount(y, weights=R, minlength=L) / counts
    csi = np.bincount(y, weights=S, minlength=L) / counts
    ri = float(cri.mean())
    si = float(csi.mean())
    return RsReport(R, S, cri, csi, ri, si, ri - si, 1.0 - abs(ri - si), y,
                    None if predicted is None else as_labels(predicted))


def rs_report(points, labels, L: Optional[int] = None, predicted=None) -> RsReport:
    R, S = rs_scores(points, labels)
    return rs_indices(R, S, labels, L, predicted)


def feature_cluster_report(data, assignments) -> RsReport:
    """R-S report of a feature partition.

    Standardized feature vectors are the points and cluster ids the
    labels, so Euclidean distance tracks one minus the correlation.
    """
    points = standardize(as_array(data)).T
    assignments = np.asarray(assignments, dtype=np.int64)
    return rs_report(points, assignments, int(assignments.max()) + 1)


def rs_chart_export(points, labels, path, predicted=None, L: Optional[int] = None) -> RsReport:
    """Write per-sample R and S, grouped by true label, as CSV."""
    y = as_labels(labels)
    report = rs_report(points, labels, L, predicted)
    order = np.argsort(y, kind="stable")
    header = ["sample_id", "true_label"] + (["predicted_label"] if predicted is not None else [])
    header += ["R", "S"]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for m in order:
            row = [int(m), int(y[m])]
            if predicted is not None:
                row.append(int(report.predicted[m]))
            row += [repr(float(report.R[m])), repr(float(report.S[m]))]
            writer.writerow(row)
    return report
