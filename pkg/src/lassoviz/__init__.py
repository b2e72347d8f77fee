"""Relevant-filter selection and stride-compensated deconvnet explanations for small CNNs."""
from .kernels import BACKEND
from .network import FeatureId, Network, forward, load_model, save_model, train
from .selector import RelevanceMatrix, solve_mu_lasso
from .explain import explain_image

__version__ = "0.1.0"
__all__ = [
    "BACKEND", "FeatureId", "Network", "RelevanceMatrix", "explain_image", "forward",
    "load_model", "save_model", "solve_mu_lasso", "train",
]
