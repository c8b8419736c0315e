"""Minimal forcing subsets: the training instances whose removal flips a
convex classifier's decision at a test point."""

__version__ = "0.1.0"

from .data import CsvSchema, flip_labels, gen_blobs, gen_bow_spamlike, gen_halfmoon, inject_poison, load_csv, save_csv
from .errors import ForcingSetError
from .mfs import MfsConfig, MfsResult, MfsStep, confidence_trajectory, construct_mfs, score_instances
from .model import Claim, Dataset, Instance, ModelParams
from .solver import counterfactual_params, one_step_newton_remove, solve_constrained, train

__all__ = [
    "Claim", "CsvSchema", "Dataset", "ForcingSetError", "Instance", "MfsConfig", "MfsResult",
    "MfsStep", "ModelParams", "confidence_trajectory", "construct_mfs", "counterfactual_params",
    "flip_labels", "gen_blobs", "gen_bow_spamlike", "gen_halfmoon", "inject_poison", "load_csv",
    "one_step_newton_remove", "save_csv", "score_instances", "solve_constrained", "train",
]
