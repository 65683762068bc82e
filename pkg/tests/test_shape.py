import math
from collections import Counter

import numpy as np
import pytest

import oracles
from ccp.dataset import DataError
from ccp.projection import KernelConfig
from ccp.shape import (DensityGrid, density_on_grid, extract_isosurface, marching_squares,
                       nearest_labels, rigidity_density)

GAUSS = KernelConfig("exponential", 2.0, 0.4, None)


def test_value_at_point_includes_self_term():
    pts = np.array([[0.0, 0.0], [0.3, 0.7], [1.0, 0.2]])
    # grid nodes land exactly on the points
    vals = density_on_grid(pts, GAUSS, 0.5, (0.0, 0.0), (0.1, 0.1), (11, 11))
    assert vals[0, 0] >= 1 and vals[3, 7] >= 1 and vals[10, 2] >= 1


@pytest.mark.parametrize("tau", [1.0, 2.0, 6.0])
def test_two_far_points(tau):
    d = 4.0
    pts = np.array([[0.0, 0.0], [d, 0.0]])
    cfg = KernelConfig("exponential", 2.0, tau, None)
    grid = rigidity_density(pts, cfg, resolution=(3, 3), padding=0.0)
    assert grid.eta == d
    # corners (0, 0) and (d, 0) are grid nodes
    assert grid.values[0, 1] == pytest.approx(1 + math.exp(-1 / tau ** 2), rel=1e-12)
    assert grid.values[2, 1] == pytest.approx(1 + math.exp(-1 / tau ** 2), rel=1e-12)


def test_grid_against_naive_sum():
    rng = np.random.default_rng(0)
    pts = rng.uniform(-1, 1, size=(20, 2))
    for cfg in (GAUSS, KernelConfig("lorentz", 1.0, 2.0, None)):
        grid = rigidity_density(pts, cfg, resolution=17, padding=0.2)
        nodes = grid.nodes()
        want = [oracles.density(pts.tolist(), node.tolist(), cfg.family, cfg.kappa, cfg.tau,
                                grid.eta) for node in nodes]
        np.testing.assert_allclose(grid.values.ravel(), want, rtol=1e-12)


def test_grid_3d_against_naive_sum():
    pts = np.random.default_rng(1).uniform(size=(8, 3))
    grid = rigidity_density(pts, GAUSS, resolution=6)
    want = [oracles.density(pts.tolist(), n.tolist(), "exponential", 2, 0.4, grid.eta)
            for n in grid.nodes()]
    np.testing.assert_allclose(grid.values.ravel(), want, rtol=1e-12)


def test_box_covers_points():
    pts = np.random.default_rng(2).normal(size=(30, 2))
    grid = rigidity_density(pts, GAUSS, resolution=10, padding=0.15)
    assert np.all(grid.origin < pts.min(axis=0)) and np.all(grid.upper() > pts.max(axis=0))


def test_collinear_points_get_a_box():
    pts = np.column_stack([np.arange(5.0), np.zeros(5)])
    grid = rigidity_density(pts, GAUSS, resolution=8)
    assert np.all(grid.spacing > 0)


def test_class_filter():
    pts = np.array([[0.0, 0], [1, 0], [10, 10], [11, 10]])
    labels = np.array([0, 0, 1, 1])
    grid = rigidity_density(pts, GAUSS, resolution=9, class_filter=(1, labels))
    assert np.all(grid.origin > 5)


@pytest.mark.parametrize("bad", [dict(resolution=1), dict(padding=-1.0)])
def test_bad_grid_args(bad):
    with pytest.raises(ValueError):
        rigidity_density(np.random.default_rng(0).normal(size=(5, 2)), GAUSS, **bad)


def test_needs_2_or_3_dims():
    with pytest.raises(ValueError):
        rigidity_density(np.zeros((4, 4)) + np.arange(4)[:, None], GAUSS)


def test_constant_grid_empty_mesh():
    grid = DensityGrid(np.zeros(2), np.ones(2), (4, 4), np.full((4, 4), 2.0))
    assert extract_isosurface(grid, 0.5).empty
    grid3 = DensityGrid(np.zeros(3), np.ones(3), (3, 3, 3), np.ones((3, 3, 3)))
    assert extract_isosurface(grid3, 0.5).empty


def test_isovalue_fraction_range():
    grid = DensityGrid(np.zeros(2), np.ones(2), (2, 2), np.eye(2))
    with pytest.raises(ValueError):
        extract_isosurface(grid, 1.0)


def test_marching_squares_single_peak():
    V = np.zeros((3, 3))
    V[1, 1] = 1.0
    verts, segs = marching_squares(V, 0.5, (0, 0), (1, 1))
    assert segs.shape == (4, 2)
    np.testing.assert_allclose(sorted(map(tuple, verts.tolist())),
                               [(0.5, 1), (1, 0.5), (1, 1.5), (1.5, 1)])


def test_marching_squares_saddle_decider():
    V = np.array([[1.0, 0.0], [0.0, 1.0]])
    # saddle value 0.5: below it the high corners join through the centre
    # and the low corners are cut off, above it the reverse
    verts, segs = marching_squares(V, 0.4, (0, 0), (1, 1))
    assert segs.shape == (2, 2)
    mids = sorted(tuple(verts[s].mean(axis=0).round(6)) for s in segs)
    assert mids == [(0.2, 0.8), (0.8, 0.2)]
    verts, segs = marching_squares(V, 0.6, (0, 0), (1, 1))
    mids = sorted(tuple(verts[s].mean(axis=0).round(6)) for s in segs)
    assert mids == [(0.2, 0.2), (0.8, 0.8)]


def closed_loops(mesh):
    deg = Counter(mesh.elements.ravel().tolist())
    return all(v == 2 for v in deg.values())


def two_point_mesh(resolution=128):
    pts = np.array([[0.0, 0.0], [1.0, 0.0]])
    grid = rigidity_density(pts, GAUSS, resolution=resolution, padding=1.0)
    return pts, grid, extract_isosurface(grid, 0.5)


def test_two_point_contour_radius():
    pts, grid, mesh = two_point_mesh()
    assert grid.eta == 1.0
    assert closed_loops(mesh)
    h = float(grid.spacing.max())
    measured, roots = [], []
    for v in mesh.vertices:
        p = pts[np.argmin(np.linalg.norm(pts - v, axis=1))]
        r = float(np.linalg.norm(v - p))
        u = (v - p) / r
        root = oracles.contour_root(pts.tolist(), p.tolist(), u.tolist(), mesh.isovalue,
                                    "exponential", 2, 0.4, 1.0, 1.0)
        assert abs(r - root) <= 2 * h
        measured.append(r)
        roots.append(root)
    assert abs(np.mean(measured) - np.mean(roots)) <= 2 * h


def test_vertex_density_within_interpolation_bound():
    pts, grid, mesh = two_point_mesh(64)
    h = grid.spacing
    s = GAUSS.tau * grid.eta
    # |d2/dt2 exp(-t^2/s^2)| <= 2/s^2; linear interpolation on an edge errs by <= h^2/8 * that
    bound = len(pts) * 2 / s ** 2 * float(h.max()) ** 2 / 8
    for v in mesh.vertices:
        mu = oracles.density(pts.tolist(), v.tolist(), "exponential", 2, 0.4, grid.eta)
        assert abs(mu - mesh.isovalue) <= bound


def edges_watertight(faces):
    count = Counter()
    for a, b, c in faces.tolist():
        for e in ((a, b), (b, c), (c, a)):
            count[tuple(sorted(e))] += 1
    return all(v == 2 for v in count.values())


def test_sphere_watertight_and_radius():
    pts = np.array([[0.0, 0.0, 0.0], [5.0, 5.0, 5.0]])
    cfg = KernelConfig("exponential", 2.0, 0.1, None)
    grid = rigidity_density(pts, cfg, resolution=64, padding=0.3)
    mesh = extract_isosurface(grid, 0.5)
    assert not mesh.empty
    assert edges_watertight(mesh.elements)
    # the far point adds about e^-100, so each sphere solves exp(-(r/s)^2) = level
    s = cfg.tau * grid.eta
    want = s * math.sqrt(math.log(1 / mesh.isovalue))
    near = mesh.vertices[np.linalg.norm(mesh.vertices, axis=1) < 3]
    r = np.linalg.norm(near, axis=1)
    assert abs(r.mean() - want) <= 2 * grid.spacing.max()


def test_exports(tmp_path):
    pts, grid, mesh = two_point_mesh(24)
    mesh.save_segments_csv(tmp_path / "seg.csv")
    lines = (tmp_path / "seg.csv").read_text().splitlines()
    assert lines[0] == "seg_id,x,y" and len(lines) == 1 + 2 * mesh.elements.shape[0]
    grid.save(tmp_path / "g.bin")
    back = DensityGrid.load(tmp_path / "g.bin")
    assert np.array_equal(back.values, grid.values) and back.dims == grid.dims
    grid.save_csv(tmp_path / "g.csv")
    assert len((tmp_path / "g.csv").read_text().splitlines()) == 1 + 24 * 24
    (tmp_path / "bad.bin").write_bytes(b"CCPX")
    with pytest.raises(DataError):
        DensityGrid.load(tmp_path / "bad.bin")
    with pytest.raises(ValueError):
        mesh.save_obj(tmp_path / "m.obj")


def test_obj_with_labels(tmp_path):
    pts = np.array([[0.0, 0, 0], [4.0, 0, 0]])
    grid = rigidity_density(pts, KernelConfig("exponential", 2.0, 0.2, None), resolution=20)
    mesh = extract_isosurface(grid, 0.5)
    labels = nearest_labels(mesh.vertices, pts, [0, 1])
    assert set(labels.tolist()) == {0, 1}
    mesh.save_obj(tmp_path / "m.obj", labels)
    text = (tmp_path / "m.obj").read_text().splitlines()
    assert sum(t.startswith("v ") for t in text) == mesh.vertices.shape[0]
    assert sum(t.startswith("# vl ") for t in text) == mesh.vertices.shape[0]
    assert sum(t.startswith("f ") for t in text) == mesh.elements.shape[0]
