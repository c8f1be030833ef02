"""Robust Kronecker-separable low-rank tensor decomposition.

Decomposes a 3-way tensor of stacked matrix observations into a shared pair
of low-rank bases, per-slice sparse codes and a sparse outlier tensor, with
ADMM and linearised-ADMM solvers, three regularizer families and
missing-value completion.
"""

from .admm import SolverAbort, initialize, residuals, solve
from .data import Metrics, SynthSpec, add_salt_pepper, make_mask, metrics, roc_auc, synth_generate
from .fileio import read_pgm, read_ppm, read_rkt, write_pgm, write_ppm, write_rkt
from .linalg import (
    NumericalError,
    SteinProblem,
    SteinSingularError,
    frobenius_prox,
    schatten_prox,
    selective_shrink,
    soft_shrink,
    stein_solve,
    stein_solve_dense,
    svd,
    symmetric_eig,
    top_singular_value,
)
from .model import FactorModel, RunReport, SolverConfig, default_lambda
from .tensor import (
    fold,
    frobenius,
    inner,
    kronecker,
    l1,
    mode_product,
    reconstruct,
    unfold,
    vectorize,
)
from .variants import LipschitzBounds, compute_lipschitz, solve_variant

__version__ = "0.1.0"

__all__ = [
    "FactorModel",
    "LipschitzBounds",
    "Metrics",
    "NumericalError",
    "RunReport",
    "SolverAbort",
    "SolverConfig",
    "SteinProblem",
    "SteinSingularError",
    "SynthSpec",
    "add_salt_pepper",
    "compute_lipschitz",
    "default_lambda",
    "fold",
    "frobenius",
    "frobenius_prox",
    "initialize",
    "inner",
    "kronecker",
    "l1",
    "make_mask",
    "metrics",
    "mode_product",
    "read_pgm",
    "read_ppm",
    "read_rkt",
    "reconstruct",
    "residuals",
    "roc_auc",
    "schatten_prox",
    "selective_shrink",
    "soft_shrink",
    "solve",
    "solve_variant",
    "stein_solve",
    "stein_solve_dense",
    "svd",
    "symmetric_eig",
    "synth_generate",
    "top_singular_value",
    "unfold",
    "vectorize",
    "write_pgm",
    "write_ppm",
    "write_rkt",
]
