"""PC and Conservative PC causal structure search."""

from .citest import (
    CiDecision,
    DSeparationOracle,
    FactTable,
    FisherZTest,
    GaussianDataset,
    IndependenceSource,
)
from .graph import Dag, Mark, MixedGraph, Triple, TripleClass, dag_to_pattern, d_separated
from .search import SearchConfig, SearchResult, run_search

__version__ = "0.1.0"
