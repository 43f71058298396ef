"""Mode-wise adaptive, matricization-free Tucker decomposition of dense tensors."""

__version__ = "0.1.0"

from .driver import (
    ModeReport,
    Strategy,
    TuckerDecomposition,
    parse_strategy,
    reconstruct,
    relative_error,
    sthosvd,
)
from .fileio import load_decomposition, read_dten, save_decomposition, write_dten
from .kernels import gram, ttm, ttt_mode
from .selector import DecisionTreeModel, extract_features, load_model, predict, save_model, train
from .solvers import AlsOptions, Solver
from .tensor import DenseTensor, frobenius_norm, matricize, random_tensor, synth_lowrank, tensorize

__all__ = [
    "AlsOptions",
    "DecisionTreeModel",
    "DenseTensor",
    "ModeReport",
    "Solver",
    "Strategy",
    "TuckerDecomposition",
    "extract_features",
    "frobenius_norm",
    "gram",
    "load_decomposition",
    "load_model",
    "matricize",
    "parse_strategy",
    "predict",
    "random_tensor",
    "read_dten",
    "reconstruct",
    "relative_error",
    "save_decomposition",
    "save_model",
    "sthosvd",
    "synth_lowrank",
    "tensorize",
    "train",
    "ttm",
    "ttt_mode",
    "write_dten",
]
