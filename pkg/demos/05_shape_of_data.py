"""Shape of the embedded data as a density level set.

A 2-D embedding gets a density grid and a contour at a tenth of the
peak; a 3-D embedding gets a triangle mesh, written as OBJ with the
nearest sample's class on every vertex.
"""

from pathlib import Path

from ccp import KernelConfig, extract_isosurface, fit, rigidity_density, transform
from ccp.shape import nearest_labels
from ccp.synthetic import correlated_blobs

out = Path("demo_out")
out.mkdir(exist_ok=True)
data, labels, _ = correlated_blobs(M=300, I=500, seed=0)
kernel = KernelConfig("exponential", 2.0, 1.0, None)

emb2 = transform(fit(data, 2), data)
grid = rigidity_density(emb2, kernel, resolution=128)
contour = extract_isosurface(grid, c=0.1)
print("2-D grid", grid.dims, "peak", round(grid.mu_max, 2), "segments", len(contour.elements))
contour.save_segments_csv(out / "contour.csv")
grid.save_csv(out / "grid2d.csv")

# one class on its own
only = rigidity_density(emb2, kernel, resolution=96, class_filter=(0, labels))
print("class 0 contour segments:", len(extract_isosurface(only, 0.1).elements))

emb3 = transform(fit(data, 3), data)
grid3 = rigidity_density(emb3, kernel, resolution=48)
mesh = extract_isosurface(grid3, c=0.1)
print("3-D mesh:", len(mesh.vertices), "vertices", len(mesh.elements), "triangles")
mesh.save_obj(out / "shape.obj", nearest_labels(mesh.vertices, emb3, labels))
grid3.save(out / "grid3d.bin")
print("written to", out.resolve())
