"""Shared temporal factorization of link and content for dynamic attributed networks."""

from .communities import CommunityAssignment, detect_communities, kmeans, stack_embeddings
from .factorization import (
    DivergenceError,
    FactorModel,
    FitResult,
    Hyperparameters,
    compute_gradients,
    compute_residuals,
    evaluate_objective,
    fit,
    fit_with_backoff,
    gradient_step,
    sample_active_mask,
)
from .metrics import jaccard, purity, silhouette
from .network import TemporalNetwork
from .prediction import fit_ar, fit_forecaster, predict_communities, predict_embedding
from .synthetic import SyntheticConfig, generate
from .tuner import SearchSpace, tune

__version__ = "0.1.0"
