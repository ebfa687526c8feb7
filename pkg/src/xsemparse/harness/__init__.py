"""Training, decoding, experiments and the command line."""
from .decode import BeamHypothesis, beam_search, beam_search_core, greedy_decode
from .experiment import (Report, RunRecord, SuiteConfig, build_model, build_view, parse_system, prepare_data,
                         run_experiment, run_system)
from .optim import Adam, adam_step, noam_lr
from .train import TrainConfig, TrainResult, dev_loss, train, train_to_fit
from .trends import TrendCheck, fraction_curve, non_decreasing, system_ordering, within_points

__all__ = [
    "Adam", "BeamHypothesis", "Report", "RunRecord", "SuiteConfig", "TrainConfig", "TrainResult", "TrendCheck",
    "adam_step", "beam_search", "beam_search_core", "build_model", "build_view", "dev_loss", "fraction_curve",
    "greedy_decode", "noam_lr", "non_decreasing", "parse_system", "prepare_data", "run_experiment", "run_system",
    "system_ordering", "train", "train_to_fit", "within_points",
]
