"""
Homological neural networks
===========================

Sparse feed-forward units wired along the simplicial structure of a
chordal dependency graph.

Modules
-------
::

 corr        -- CSV ingestion, z-scoring, Pearson similarity matrices
 graph       -- ChordalGraph container and JSON/DOT serialization
 tmfg        -- Triangulated Maximally Filtered Graph construction
 homology    -- MCS ordering, maximal cliques, clique trees, Hasse diagrams
 hnn         -- sparse unit: forward, backward, training, parameter counts
 timeseries  -- windowing, shared LSTM encoder, LSTM-HNN forecaster
 bench       -- metrics, baselines, t-tests, tabular experiment harness
 synthetic   -- planted-structure and seasonal-AR data generators
 cli         -- ``homnet`` command line entry point
"""
from .corr import Dataset, load_csv, pearson_similarity, zscore
from .graph import ChordalGraph
from .tmfg import tmfg_construct, verify_tmfg
from .homology import (build_hasse, clique_tree, enumerate_simplexes,
                       hasse_from_graph, maximal_cliques, mcs_order)
from .hnn import (HnnModel, TrainConfig, finite_diff_grad, init_model,
                  param_count, train)

__version__ = "0.1.0"

__all__ = [
    "Dataset", "load_csv", "pearson_similarity", "zscore", "ChordalGraph",
    "tmfg_construct", "verify_tmfg", "build_hasse", "clique_tree",
    "enumerate_simplexes", "hasse_from_graph", "maximal_cliques", "mcs_order",
    "HnnModel", "TrainConfig", "finite_diff_grad", "init_model",
    "param_count", "train",
]
