"""Rating prediction with learned beta distributions, baselines and evaluation."""

from .baselines import CmfModel, MfModel, OrdRecModel
from .checkpoint import load_checkpoint, save_checkpoint
from .dataio import (
    MOVIELENS_100K, MOVIELENS_10M, FoldSplit, RatingDataset, RatingScale, RecordError,
    cold_start_guard, kfold_split, parse_ratings,
)
from .distribution import DiscreteRatingDistribution
from .evaluation import EvalReport, evaluate
from .lbd import LbdConfig, LbdModel
from .registry import MODEL_KINDS, build_model
from .specfun import BetaShape, betainc, betainc_grad, beta_pdf, log_beta, logistic_cdf
from .targeted import run_targeted, success_probability
from .training import TrainConfig, train

__version__ = "0.1.0"
