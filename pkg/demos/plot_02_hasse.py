"""
From cliques to a Hasse diagram
===============================

The chordal graph is read as a simplicial complex. Its clique tree and
face lattice fix the wiring of the sparse network.
"""
from homnet.graph import ChordalGraph
from homnet.homology import clique_tree, hasse_from_graph, maximal_cliques, mcs_order

# seven vertices: one tetrahedron, two triangles and a dangling edge
labels = [str(i) for i in range(1, 8)]
edges = [(3, 4), (3, 5), (3, 6), (4, 5), (4, 6), (5, 6),
         (2, 4), (2, 6), (4, 7), (6, 7), (1, 4)]
g = ChordalGraph.from_edges(7, [(a - 1, b - 1) for a, b in edges], labels=labels)

order, chordal = mcs_order(g)
print("elimination order:", [labels[v] for v in order], "chordal:", chordal)

cliques = maximal_cliques(g)
print("maximal cliques:", [[labels[v] for v in c] for c in cliques])

###############################################################################
# Separators of the clique tree, with how often each one appears.
tree = clique_tree(cliques, g)
for sep, mult in tree.separators:
    print("separator", [labels[v] for v in sep], "x", mult)

###############################################################################
# Layer d of the diagram holds the d-simplexes; each node links down to
# its d + 1 facets.
d = hasse_from_graph(g)
print("layer sizes:", d.sizes, " links:", d.n_links)
for i, s in enumerate(d.layers[2]):
    facets = [d.layers[1][j] for j in d.down_links[2][i]]
    print([labels[v] for v in s], "<-", [[labels[v] for v in f] for f in facets])

with open("hasse.dot", "w") as fh:
    fh.write(d.to_dot(labels))
print("wrote hasse.dot")
