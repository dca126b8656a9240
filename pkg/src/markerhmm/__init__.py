"""Mixture of categorical hidden Markov models over multivariate marker time-series."""

__version__ = "0.1.0"

from .config import PipelineConfig, parse_config, rebalance_weights, trail_weight
from .errors import MarkerHmmError
from .estimation import build_all, extract_parameters
from .evaluation import ConfusionMatrix, CvReport, k_fold_cv, score_fbeta
from .hmm import (
    CategoricalHmm,
    backward,
    baum_welch,
    brute_force,
    extrapolate,
    forward,
    posteriors,
    viterbi,
)
from .ingest import Dataset, Trail, discretize, enforce_intervals, load_dataset
from .mixture import (
    MixtureModel,
    Query,
    export_parameters,
    observation_evaluation,
    predict_future,
    predict_posteriors,
    predict_state_sequence,
    trail_evaluation,
)
from .synthgen import GeneratorSpec, default_spec, generate
