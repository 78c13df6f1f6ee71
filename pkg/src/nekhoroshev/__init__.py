"""Truncated Birkhoff normal forms, small-divisor scans and stability-time
estimates for Hamiltonian PDEs on tori.

Submodules
----------
lattice     signed Fourier modes, momentum-zero enumeration, block partitions
weights     Gevrey and log-ultra weights, weighted norms
polyalg     sparse polynomials and the Poisson bracket
spectrum    frequency models, assumption checkers, divisor scans
normalform  homological equation, Lie transforms, the Birkhoff iteration
stability   explicit constants, balancing, predicted stability times
measure     resonant-parameter sampling and determinant bounds
simulator   Galerkin-truncated split-step integration
cli         batch driver (``python -m nekhoroshev``)
"""
from .kernels import BACKEND
from .lattice import BlockPartition, ModeIndex, ModeTable, MultiIndex
from .polyalg import GaussianRational, HamiltonianSpec, SparsePolynomial, poisson
from .spectrum import BudgetExceeded, FrequencyModel, NonResonanceParams, beam, conv_nls, fractional
from .weights import WeightSpec, gevrey, log_ultra

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "BlockPartition", "BudgetExceeded", "FrequencyModel", "GaussianRational",
    "HamiltonianSpec", "ModeIndex", "ModeTable", "MultiIndex", "NonResonanceParams",
    "SparsePolynomial", "WeightSpec", "beam", "conv_nls", "fractional", "gevrey", "log_ultra",
    "poisson", "__version__",
]
