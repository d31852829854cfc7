"""Stratification of right-censored survival data with normalized random measure mixtures."""
from .errors import ConfigError, EstimationError, InputDomainError, ScaleError, UnsupportedMeasureError
from .inference import (SurvivalCurve, kaplan_meier, lpml, predictive_survival, stratum_refit, waic,
                        weibull_mle)
from .kernels import ClusterParams, Dataset, KernelFamily
from .mixing import DP, NIG, PY, BaseMeasure
from .partitions import Partition, optimal_partition, rand_index, vi_distance
from .sampler import Chain, ModelVariant, SamplerConfig, run
from .simulation import DgpSpec, apply_censoring, generate, replicate_study

__version__ = "0.1.0"

__all__ = [
    "BaseMeasure", "Chain", "ClusterParams", "ConfigError", "DP", "Dataset", "DgpSpec",
    "EstimationError", "InputDomainError", "KernelFamily", "ModelVariant", "NIG", "PY",
    "Partition", "SamplerConfig", "ScaleError", "SurvivalCurve", "UnsupportedMeasureError",
    "apply_censoring", "generate", "kaplan_meier", "lpml", "optimal_partition",
    "predictive_survival", "rand_index", "replicate_study", "run", "stratum_refit",
    "vi_distance", "waic", "weibull_mle",
]
