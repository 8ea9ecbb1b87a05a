"""
Filtering a correlation matrix with a TMFG
==========================================

A dense correlation matrix is pruned down to a planar chordal graph
that keeps the strongest dependencies.
"""
import numpy as np

from homnet.corr import Dataset, pearson_similarity, zscore
from homnet.tmfg import tmfg_construct, verify_tmfg

# twelve noisy features driven by three hidden factors
rng = np.random.default_rng(0)
factors = rng.normal(size=(400, 3))
x = np.repeat(factors, 4, axis=1) + 0.8 * rng.normal(size=(400, 12))
ds = Dataset(tuple(f"f{i}" for i in range(12)), x)

ds, stats = zscore(ds)
w = pearson_similarity(ds, "absolute")
print("similarity matrix", w.values.shape)

###############################################################################
# Build the graph. The trace records the seed tetrahedron and every
# vertex-into-face insertion.
g, trace = tmfg_construct(w.values)
print("seed tetrahedron:", [ds.names[v] for v in trace.initial])
for v, face in trace.insertions[:3]:
    print("insert", ds.names[v], "into", [ds.names[u] for u in face])

###############################################################################
# A TMFG on p vertices has 3p - 6 edges and is chordal.
report = verify_tmfg(g)
print(len(g.edges), "edges; expected", report.expected_edges)
print("chordal:", report.is_chordal, " clique census:", report.clique_counts)

# features sharing a factor should mostly end up linked
same = sum(a // 4 == b // 4 for a, b in g.edges)
print(f"{same} of {len(g.edges)} edges join features of the same factor")
