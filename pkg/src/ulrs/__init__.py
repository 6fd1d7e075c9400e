"""Signal detection over a union of learned low-rank subspaces."""

from ulrs.models import (
    CodingMethod,
    DecisionRule,
    DetectorParams,
    FeatureConfig,
    FrameConfig,
    SolverConfig,
    SynthConfig,
)
from ulrs.types import Detection, Dictionary, Hypothesis, RocCurve, SparseCode

__version__ = "0.1.0"

__all__ = [
    "CodingMethod",
    "DecisionRule",
    "Detection",
    "DetectorParams",
    "Dictionary",
    "FeatureConfig",
    "FrameConfig",
    "Hypothesis",
    "RocCurve",
    "SolverConfig",
    "SparseCode",
    "SynthConfig",
]
