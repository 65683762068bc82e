"""Residue and similarity scores of an embedding.

R is how far a sample sits from other classes (scaled by the largest
such sum), S how close it sits to its own class. RSI near 1 means the two
balance; the per-sample table is what an R-S scatter chart plots.
"""

from pathlib import Path

from ccp import fit, rs_chart_export, transform
from ccp.synthetic import correlated_blobs

out = Path("demo_out")
out.mkdir(exist_ok=True)

data, labels, _ = correlated_blobs(M=300, I=500, seed=0)
for n in (2, 10, 30):
    emb = transform(fit(data, n), data)
    rep = rs_chart_export(emb, labels, out / f"rs_N{n}.csv", L=labels.L)
    print(f"N={n:2d} RI {rep.ri:.3f} SI {rep.si:.3f} RSD {rep.rsd:+.3f} RSI {rep.rsi:.3f}")
    print("      class residue", rep.cri.round(3).tolist(), "similarity", rep.csi.round(3).tolist())
print("chart tables in", out.resolve())
