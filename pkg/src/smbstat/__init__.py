"""Statistics of the information function ``I_n = -log mu(A_n)`` for symbolic measures."""

from .model import (
    BernoulliModel,
    GeometricModel,
    MarkovModel,
    TruncationPolicy,
    cylinder_measure,
    enumerate_cylinders,
    ingest_stream,
    load_model,
    sample_path,
    stationary_distribution,
)

__version__ = "0.1.0"

__all__ = [
    "BernoulliModel",
    "GeometricModel",
    "MarkovModel",
    "TruncationPolicy",
    "cylinder_measure",
    "enumerate_cylinders",
    "ingest_stream",
    "load_model",
    "sample_path",
    "stationary_distribution",
]
