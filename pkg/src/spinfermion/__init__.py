"""Weak-coupling entropic fluctuations of spin-fermion models."""

from .model import (
    CouplingChannel,
    ModelSpec,
    ReservoirSpec,
    SmallSystem,
    SpectralDensity,
    bohr_frequencies,
    jump_component,
    simplest_model,
    validate,
)

__all__ = [
    "CouplingChannel",
    "ModelSpec",
    "ReservoirSpec",
    "SmallSystem",
    "SpectralDensity",
    "bohr_frequencies",
    "jump_component",
    "simplest_model",
    "validate",
]
__version__ = "0.1.0"
