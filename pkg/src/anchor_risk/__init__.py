"""Failure-risk characterization for regressors trained with anchored inputs."""

from .benchmarks import Dataset, SplitSpec, gen_function, load_csv, make_eval_grid, split_targets
from .estimator import AnchoredAutoencoder, AnchoredRegressor, RiskRegimeDetector
from .nn import Mlp, MlpSpec, TrainConfig, make_anchored_tuple, train_anchored

__version__ = "0.1.0"

__all__ = [
    "AnchoredAutoencoder",
    "AnchoredRegressor",
    "Dataset",
    "Mlp",
    "MlpSpec",
    "RiskRegimeDetector",
    "SplitSpec",
    "TrainConfig",
    "gen_function",
    "load_csv",
    "make_anchored_tuple",
    "make_eval_grid",
    "split_targets",
    "train_anchored",
]
