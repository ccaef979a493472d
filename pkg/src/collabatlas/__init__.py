"""Collaboration distance and knowledge flow between national science systems."""

from .corpus import PartySpec, WorkCounts, nationality_of, union_size
from .distance import DistanceMatrix, build_matrix, jaccard_distance, rescale
from .geometry import embed, sphere_radii, tetra_volume, triangle_stats
from .kflow import FlowMatrix, author_flows, build_k_matrix, kfr

__all__ = [
    "DistanceMatrix",
    "FlowMatrix",
    "PartySpec",
    "WorkCounts",
    "author_flows",
    "build_k_matrix",
    "build_matrix",
    "embed",
    "jaccard_distance",
    "kfr",
    "nationality_of",
    "rescale",
    "sphere_radii",
    "tetra_volume",
    "triangle_stats",
    "union_size",
]
__version__ = "0.1.0"
