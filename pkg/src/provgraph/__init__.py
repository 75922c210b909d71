"""Undirected provenance graphs for composite images.

Pipeline: keypoints -> NNDR matching -> geometric consistency filter ->
(optional) registration -> pairwise dissimilarity -> minimum spanning forest
-> query component, plus graph scores and a synthetic case generator.
"""

from .config import ExperimentMode, MetricKind, PipelineConfig, RunConfig, load_config
from .dissimilarity import DissimilarityMatrix, analyze_pair, build_matrix, build_matrices
from .errors import ProvGraphError
from .graph import ProvenanceGraph, QueryCase, extract_query_component, kruskal_forest
from .metrics import EvalReport, aggregate, score
from .records import ImageRecord, load_image

__all__ = [
    "DissimilarityMatrix",
    "EvalReport",
    "ExperimentMode",
    "ImageRecord",
    "MetricKind",
    "PipelineConfig",
    "ProvGraphError",
    "ProvenanceGraph",
    "QueryCase",
    "RunConfig",
    "aggregate",
    "analyze_pair",
    "build_matrices",
    "build_matrix",
    "extract_query_component",
    "kruskal_forest",
    "load_config",
    "load_image",
    "score",
]
__version__ = "0.1.0"
