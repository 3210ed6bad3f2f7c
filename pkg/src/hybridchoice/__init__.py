"""Estimation of multinomial logit, latent class, integrated choice and
latent variable (ICLV) and latent class ICLV models by maximum simulated
likelihood, with data preparation, factor analysis and synthetic-data tools."""
from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .dataset import Dataset, Observation, load_csv, write_csv
from .errors import HybridChoiceError
from .estimator import EstimationResult, estimate, warm_start_pipeline
from .likelihood import halton_draws, loglik
from .modelspec import ModelSpec, Parameter, ParameterVector, paper_presets, validate
from .synth import GeneratorConfig, generate, quadrature_loglik

__all__ = [
    "Dataset", "EstimationResult", "GeneratorConfig", "HybridChoiceError", "ModelSpec", "Observation",
    "Parameter", "ParameterVector", "estimate", "generate", "halton_draws", "load_csv", "loglik",
    "paper_presets", "quadrature_loglik", "validate", "warm_start_pipeline", "write_csv",
]
