"""Exact k-DPP sampling that only inspects a fraction of the items."""

from .alpha_sampler import AlphaSampler, AlphaSamplerConfig, SampleTrace, sample_rescaled_dpp
from .bless import BlessConfig, SearchInterval, bless_i
from .dictionary import Dictionary
from .errors import (
    AccuracyWarning,
    BudgetExhausted,
    ConfigError,
    DPPError,
    EmptyDictionary,
    InfeasibleSize,
    KappaBoundViolated,
    LowConfidenceWarning,
    NotPSD,
    NumericalFailure,
    Unsupported,
)
from .kdpp import BinarySearchConfig, KDPPSampler, KdppResult, binary_search_alpha, sample_kdpp
from .linalg import KernelSource

__version__ = "0.1.0"

__all__ = [
    "AccuracyWarning",
    "AlphaSampler",
    "AlphaSamplerConfig",
    "BinarySearchConfig",
    "BlessConfig",
    "BudgetExhausted",
    "ConfigError",
    "DPPError",
    "Dictionary",
    "EmptyDictionary",
    "InfeasibleSize",
    "KDPPSampler",
    "KappaBoundViolated",
    "KdppResult",
    "KernelSource",
    "LowConfidenceWarning",
    "NotPSD",
    "NumericalFailure",
    "SampleTrace",
    "SearchInterval",
    "Unsupported",
    "binary_search_alpha",
    "bless_i",
    "sample_kdpp",
    "sample_rescaled_dpp",
]
