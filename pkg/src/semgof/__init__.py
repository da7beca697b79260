"""Goodness-of-fit testing for linear non-Gaussian SEMs with latent confounders."""

__version__ = "0.1.0"

from .constraints import UnsupportedConfiguration, plan_conditions
from .cumulants import CumulantSet, DataMatrix, SemModel, sample_cumulants
from .gof import GofConfig, GofResult, Method, gof_test
from .poly_test import UTestConfig
from .rank_test import CrConfig, cr_test
from .simlab import SimConfig, run_study
from .tensor_core import SymmetricTensor

__all__ = [
    "CrConfig",
    "CumulantSet",
    "DataMatrix",
    "GofConfig",
    "GofResult",
    "Method",
    "SemModel",
    "SimConfig",
    "SymmetricTensor",
    "UTestConfig",
    "UnsupportedConfiguration",
    "cr_test",
    "gof_test",
    "plan_conditions",
    "run_study",
    "sample_cumulants",
]
