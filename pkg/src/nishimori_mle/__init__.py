"""Maximum likelihood estimation regularized by Boltzmann weighting at beta = n."""

__version__ = "0.1.0"

from .core import (
    DataSample,
    DensityModel,
    DiscreteDistribution,
    LogWeightVector,
    ModelSet,
    PredictiveMixture,
    empirical_counts,
    gibbs_average_divergence,
    kl_discrete,
    kl_empirical_discrete,
    mean_log_likelihood,
    normal_model,
    posterior_log_weights,
    predictive_density,
    predictive_mixture,
    sample_model_index,
)
from .errors import (
    ConfigurationError,
    DomainError,
    EstimationError,
    NishimoriError,
    SizeError,
    UsageError,
)

__all__ = [
    "ConfigurationError",
    "DataSample",
    "DensityModel",
    "DiscreteDistribution",
    "DomainError",
    "EstimationError",
    "LogWeightVector",
    "ModelSet",
    "NishimoriError",
    "PredictiveMixture",
    "SizeError",
    "UsageError",
    "empirical_counts",
    "gibbs_average_divergence",
    "kl_discrete",
    "kl_empirical_discrete",
    "mean_log_likelihood",
    "normal_model",
    "posterior_log_weights",
    "predictive_density",
    "predictive_mixture",
    "sample_model_index",
]
