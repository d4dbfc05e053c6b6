"""Sparse Bayesian neural networks trained by prior annealing.

The frequentist pipeline anneals a mixture Gaussian prior into an
over-parameterised network with tempered SG-MCMC, thresholds the weights and
refits the surviving connections; the Bayesian variant keeps the temperature
at one and averages over late snapshots.
"""
from ._kernels import BACKEND
from .config import Config, load_config
from .errors import AnnealBNNError
from .experiments import gen_synthetic, run_replicates, selection_metrics
from .inference import bayesian_interval, laplace_interval
from .network import Dataset, Network, predict
from .pipeline import PosteriorSamples, SparseModel, fit, run_bayesian, run_frequentist
from .prior import PriorParams, inclusion_prob, threshold
from .schedule import AnnealConfig

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "AnnealBNNError", "AnnealConfig", "Config", "Dataset", "Network",
    "PosteriorSamples", "PriorParams", "SparseModel", "bayesian_interval", "fit",
    "gen_synthetic", "inclusion_prob", "laplace_interval", "load_config", "predict",
    "run_bayesian", "run_frequentist", "run_replicates", "selection_metrics", "threshold",
]
