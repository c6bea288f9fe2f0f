"""Entanglement verification under realistic measurement models.

A verdict of entanglement obtained with a simplified measurement
description survives the step to a realistic description whenever the two
observable sets are connected by a positive (not necessarily completely
positive) trace-preserving map, a squashing operation.  This package
builds such maps constructively, certifies when they exist, applies them
to concrete models (ion-trap projector sets, threshold-detector
polarization measurements), and computes quantitative negativity lower
bounds under them.
"""

__version__ = "0.1.0"

from .operators import (
    DensityMatrix,
    HermitianOperator,
    SpectralDecomposition,
    partial_trace,
    partial_transpose,
    spectral,
    tensor,
    trace_norm,
)

__all__ = [
    "DensityMatrix",
    "HermitianOperator",
    "SpectralDecomposition",
    "partial_trace",
    "partial_transpose",
    "spectral",
    "tensor",
    "trace_norm",
    "__version__",
]
