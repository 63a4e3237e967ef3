"""Matrix-free hierarchical kernel solver with GP training and regression."""

from .kernels import Hyperparameters, KernelSpec, NodeSet, eval_block, eval_dense
from .partition import build_tree, mis_aggregate, perm_generator, permute, rank_probe, split_size
from .lowrank import (GenericFactor, LowRankFactor, interpolative_decomposition,
                      nystrom_baseline, range_finder, rsvd_id, rsvd_id_d,
                      subsample_count, svd_derivative)
from .hsolve import SolveConfig, back_solve, dense_solve
from .likelihood import LikelihoodResult, lkl_eval, neg_log_likelihood
from .gp import GPModel, TrainReport, model_select, predict, train

__version__ = "0.1.0"

__all__ = [
    "Hyperparameters", "KernelSpec", "NodeSet", "eval_block", "eval_dense",
    "build_tree", "mis_aggregate", "perm_generator", "permute", "rank_probe",
    "split_size", "GenericFactor", "LowRankFactor",
    "interpolative_decomposition", "nystrom_baseline", "range_finder",
    "rsvd_id", "rsvd_id_d", "subsample_count", "svd_derivative",
    "SolveConfig", "back_solve", "dense_solve", "LikelihoodResult",
    "lkl_eval", "neg_log_likelihood", "GPModel", "TrainReport",
    "model_select", "predict", "train",
]
