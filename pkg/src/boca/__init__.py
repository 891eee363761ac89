"""Bayesian orthogonal component analysis (BOCA).

Learns an under-complete dictionary with orthonormal atoms and sparse
Bernoulli-Gaussian codes from noisy observations X = Psi S + noise using a
partially collapsed Gibbs sampler.
"""
from ._accel import backend
from .distributions import rng_stream
from .model import Dictionary, HyperState, ModelConfig, ObservationSet, SourceState
from .sampler import ChainTrace, GibbsState, SamplerSettings, run_chain

__version__ = "0.1.0"

__all__ = [
    "ChainTrace",
    "Dictionary",
    "GibbsState",
    "HyperState",
    "ModelConfig",
    "ObservationSet",
    "SamplerSettings",
    "SourceState",
    "backend",
    "rng_stream",
    "run_chain",
]
