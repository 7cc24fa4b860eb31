"""Reversible protection of single-pixel-camera measurement streams.

Hadamard-based compressive acquisition, keyed reversible embedding of
measurements into the stream itself, sparse reconstruction, and the
capacity and distortion analysis tools around them.
"""
from ._backend import NAME as BACKEND
from .capacity import capacity_model, relative_capacity, t_max
from .evaluation import eca_attack, psnr
from .keystream import KeySpec
from .rdh import EmbedParams, MarkedStream, Recovery, embed_stream, extract_stream
from .recon import ReconProblem, fista_solve, reconstruct
from .sensing import MatrixKind, SensingOperator, build_operator, project

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "EmbedParams",
    "KeySpec",
    "MarkedStream",
    "MatrixKind",
    "ReconProblem",
    "Recovery",
    "SensingOperator",
    "build_operator",
    "capacity_model",
    "eca_attack",
    "embed_stream",
    "extract_stream",
    "fista_solve",
    "project",
    "psnr",
    "reconstruct",
    "relative_capacity",
    "t_max",
]
