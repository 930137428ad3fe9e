"""Joint marked point process model for landslide counts and sizes.

Counts follow a log-Gaussian Cox process on pixels, sizes a median-regression
on a flexible heavy-tailed family, and the two share slope-unit ICAR effects.
"""
from .exceptions import DomainError, NumericalError, UpdateError
from .graph import PixelGrid, Projection, SlopeUnitGraph, build_graph, hard_center, icar_quad_form
from .marks import MarkFamily, MarkParams
from .model import SUBMODELS, Dataset, LatentState, ModelConfig, make_projection
from .sampler import ChainOutput, ChainSettings, Sampler, run_chain

__all__ = [
    "ChainOutput",
    "ChainSettings",
    "Dataset",
    "DomainError",
    "LatentState",
    "MarkFamily",
    "MarkParams",
    "ModelConfig",
    "NumericalError",
    "PixelGrid",
    "Projection",
    "SUBMODELS",
    "Sampler",
    "SlopeUnitGraph",
    "UpdateError",
    "build_graph",
    "hard_center",
    "icar_quad_form",
    "make_projection",
    "run_chain",
]
__version__ = "0.1.0"
