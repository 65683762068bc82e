"""Shape of embedded data: rigidity density on a grid and its level sets.

The density at ``x`` is ``sum_m phi(||x - x_m||)`` over embedded samples
in 2 or 3 dimensions, with the kernel length scale set from the points'
mean nearest-neighbour distance. Level sets are drawn at ``c * mu_max``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from scipy.spatial.distance import cdist

from .dataset import DataError, as_array, as_labels
from .projection import KernelConfig, cluster_scale_eta, kernel_values

_MAGIC = b"CCPG"
_CHUNK = 4096


@dataclass
class DensityGrid:
    origin: np.ndarray
    spacing: np.ndarray
    dims: tuple
    values: np.ndarray
    eta: float = 1.0

    @property
    def mu_max(self) -> float:
        return float(self.values.max())

    @property
    def ndim(self) -> int:
        return len(self.dims)

    def axes(self) -> list[np.ndarray]:
        return [self.origin[k] + np.arange(self.dims[k]) * self.spacing[k]
                for k in range(self.ndim)]

    def nodes(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def upper(self) -> np.ndarray:
        return self.origin + (np.asarray(self.dims) - 1) * self.spacing

    def save_csv(self, path) -> None:
        names = ["x", "y", "z"][: self.ndim] + ["mu"]
        lines = [",".join(names)]
        for node, mu in zip(self.nodes(), self.values.ravel()):
            lines.append(",".join(repr(float(v)) for v in (*node, mu)))
        Path(path).write_text("\n".join(lines) + "\n")

    def save(self, path) -> None:
        with Path(path).open("wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<I", self.ndim))
            fh.write(struct.pack(f"<{self.ndim}I", *self.dims))
            fh.write(np.asarray(self.origin, dtype="<f8").tobytes())
            fh.write(np.asarray(self.spacing, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(self.values, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "DensityGrid":
        raw = Path(path).read_bytes()
        if raw[:4] != _MAGIC:
            raise DataError(f"{path}: not a density grid file")
        (nd,) = struct.unpack("<I", raw[4:8])
        pos = 8
        dims = struct.unpack(f"<{nd}I", raw[pos:pos + 4 * nd])
        pos += 4 * nd
        origin = np.frombuffer(raw[pos:pos + 8 * nd], dtype="<f8").astype(float)
        pos += 8 * nd
        spacing = np.frombuffer(raw[pos:pos + 8 * nd], dtype="<f8").astype(float)
        pos += 8 * nd
        try:
            values = np.frombuffer(raw[pos:], dtype="<f8").astype(float).reshape(dims)
        except ValueError as exc:
            raise DataError(f"{path}: truncated density grid") from exc
        return cls(origin, spacing, tuple(dims), values)


@dataclass
class IsoMesh:
    vertices: np.ndarray
    elements: np.ndarray
    isovalue: float

    @property
    def empty(self) -> bool:
        return self.elements.shape[0] == 0

    def save_obj(self, path, vertex_labels: Optional[Sequence[int]] = None) -> None:
        if self.vertices.shape[1] != 3:
            raise ValueError("OBJ export needs a 3-D mesh")
        lines = [f"# isovalue {self.isovalue!r}"]
        lines += [f"v {x!r} {y!r} {z!r}" for x, y, z in self.vertices.tolist()]
        if vertex_labels is not None:
            lines += [f"# vl {k + 1} {int(l)}" for k, l in enumerate(vertex_labels)]
        lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in self.elements.tolist()]
        Path(path).write_text("\n".join(lines) + "\n")

    def save_segments_csv(self, path) -> None:
        if self.vertices.shape[1] != 2:
            raise ValueError("segment CSV export needs a 2-D contour")
        lines = ["seg_id,x,y"]
        for s, (a, b) in enumerate(self.elements.tolist()):
            for v in (a, b):
                x, y = self.vertices[v]
                lines.append(f"{s},{float(x)!r},{float(y)!r}")
        Path(path).write_text("\n".join(lines) + "\n")


def density_on_grid(points, kernel: KernelConfig, eta: float, origin, spacing, dims) -> np.ndarray:
    """Kernel sum of ``points`` at every node of a regular grid (no cutoff)."""
    points = as_array(points)
    grid = DensityGrid(np.asarray(origin, float), np.asarray(spacing, float),
                       tuple(int(d) for d in dims), np.zeros(0))
    nodes = grid.nodes()
    out = np.empty(nodes.shape[0])
    for a in range(0, nodes.shape[0], _CHUNK):
        d = cdist(nodes[a:a + _CHUNK], points)
        out[a:a + d.shape[0]] = kernel_values(d, kernel.family, kernel.kappa,
                                              kernel.tau, eta).sum(axis=1)
    return out.reshape(grid.dims)


def rigidity_density(points, kernel: Optional[KernelConfig] = None,
                     resolution: Union[int, Sequence[int]] = 128, padding: float = 0.15,
                     class_filter=None) -> DensityGrid:
    """Evaluate the density over the points' padded bounding box.

    ``class_filter`` is ``(label, labels)`` to restrict the sum, the box
    and the length scale to one class.
    """
    kernel = kernel or KernelConfig()
    pts = as_array(points)
    if pts.shape[1] not in (2, 3):
        raise ValueError(f"density grids need 2 or 3 dimensions, got {pts.shape[1]}")
    if class_filter is not None:
        label, labels = class_filter
        pts = pts[as_labels(labels) == label]
    if pts.shape[0] < 2:
        raise ValueError("need at least two points")
    if padding < 0:
        raise ValueError("padding must be non-negative")
    nd = pts.shape[1]
    dims = (int(resolution),) * nd if np.ndim(resolution) == 0 else tuple(int(r) for r in resolution)
    if len(dims) != nd or min(dims) < 2:
        raise ValueError("need at least 2 grid nodes per axis")
    eta = cluster_scale_eta(pts)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    diag = float(np.linalg.norm(hi - lo)) or eta
    lo = lo - padding * diag
    hi = hi + padding * diag
    # Degenerate extents (collinear points) still get a usable box.
    flat = hi - lo <= 0
    lo = np.where(flat, lo - 0.5 * diag, lo)
    hi = np.where(flat, hi + 0.5 * diag, hi)
    spacing = (hi - lo) / (np.asarray(dims) - 1)
    values = density_on_grid(pts, kernel, eta, lo, spacing, dims)
    return DensityGrid(lo, spacing, dims, values, eta)


# Corners in cell order (0,0), (1,0), (1,1), (0,1); edges bottom, right, top, left.
_CORNERS = ((0, 0), (1, 0), (1, 1), (0, 1))
_EDGES = ((0, 1), (1, 2), (3, 2), (0, 3))
_CORNER_EDGES = {0: (0, 3), 1: (0, 1), 2: (1, 2), 3: (2, 3)}


def marching_squares(values: np.ndarray, level: float, origin, spacing):
    """Contour segments of a 2-D grid at ``level``.

    Saddle cells are split with the asymptotic decider: the bilinear
    saddle value decides which diagonal pair of corners is connected.
    """
    V = np.asarray(values, dtype=float)
    above = V >= level
    a = above[:-1, :-1].astype(np.uint8) | (above[1:, :-1] << 1) \
        | (above[1:, 1:] << 2) | (above[:-1, 1:] << 3)
    cells = np.argwhere((a != 0) & (a != 15))
    origin = np.asarray(origin, dtype=float)
    spacing = np.asarray(spacing, dtype=float)
    index: dict = {}
    verts: list = []
    segs: list = []

    def vertex(i, j, edge):
        p, q = _EDGES[edge]
        (pi, pj), (qi, qj) = _CORNERS[p], _CORNERS[q]
        key = (i + pi, j + pj, i + qi, j + qj)
        k = index.get(key)
        if k is None:
            va, vb = V[key[0], key[1]], V[key[2], key[3]]
            t = (level - va) / (vb - va)
            pa = origin + np.array([key[0], key[1]]) * spacing
            pb = origin + np.array([key[2], key[3]]) * spacing
            k = index[key] = len(verts)
            verts.append(pa + t * (pb - pa))
        return k

    for i, j in cells:
        c = [V[i + di, j + dj] for di, dj in _CORNERS]
        up = [v >= level for v in c]
        crossing = [e for e, (p, q) in enumerate(_EDGES) if up[p] != up[q]]
        if len(crossing) == 2:
            segs.append((vertex(i, j, crossing[0]), vertex(i, j, crossing[1])))
            continue
        # Four crossings means diagonal corners agree, so the denominator is nonzero.
        saddle = (c[0] * c[2] - c[1] * c[3]) / (c[0] + c[2] - c[1] - c[3])
        centre_up = saddle >= level
        for corner in range(4):
            if up[corner] != centre_up:
                e1, e2 = _CORNER_EDGES[corner]
                segs.append((vertex(i, j, e1), vertex(i, j, e2)))
    vertices = np.array(verts, dtype=float).reshape(-1, 2)
    return vertices, np.array(segs, dtype=np.int64).reshape(-1, 2)


def extract_isosurface(grid: DensityGrid, c: float = 0.1) -> IsoMesh:
    """Level set ``mu = c * mu_max``: segments in 2-D, triangles in 3-D."""
    if not 0 < c < 1:
        raise ValueError("isovalue fraction must lie in (0, 1)")
    level = c * grid.mu_max
    V = grid.values
    if not (V.min() < level <= V.max()):
        return IsoMesh(np.zeros((0, grid.ndim)), np.zeros((0, grid.ndim), dtype=np.int64), level)
    if grid.ndim == 2:
        verts, segs = marching_squares(V, level, grid.origin, grid.spacing)
        return IsoMesh(verts, segs, level)
    from skimage.measure import marching_cubes

    verts, faces, _, _ = marching_cubes(V, level=level, spacing=tuple(grid.spacing),
                                        method="lewiner", allow_degenerate=False)
    return IsoMesh(verts.astype(float) + grid.origin, faces.astype(np.int64), level)


def nearest_labels(vertices, points, labels) -> np.ndarray:
    """Label of the closest data point for every mesh vertex."""
    y = as_labels(labels)
    out = np.empty(len(vertices), dtype=np.int64)
    for a in range(0, len(vertices), _CHUNK):
        out[a:a + _CHUNK] = y[np.argmin(cdist(vertices[a:a + _CHUNK], as_array(points)), axis=1)]
    return out
