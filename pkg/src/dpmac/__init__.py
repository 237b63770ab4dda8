"""Differentially private network training via auxiliary-coordinate
decomposition, with a noisy-SGD baseline and a moments accountant."""

from .accountant import (AccountantError, MomentsLedger, PrivacySpend,
                         calibrate_sigma, epsilon_for_steps, log_moment_step)
from .estimators import (DPMACClassifier, DPMACRegressor, DPPCA,
                         DPSGDClassifier, DPSGDRegressor)
from .mac import MacConfig, train_dp_mac
from .mechanism import PrivacyParams, gaussian_mechanism, perturb_coefficients
from .network import Dataset, WeightStack
from .pca import dp_pca
from .sensitivity import SensitivityBundle
from .sgd import SgdConfig, train_dp_sgd
from .taylor import TaylorCoefficients

__version__ = "0.1.0"

__all__ = [
    "AccountantError", "MomentsLedger", "PrivacySpend", "calibrate_sigma",
    "epsilon_for_steps", "log_moment_step",
    "DPMACClassifier", "DPMACRegressor", "DPPCA", "DPSGDClassifier",
    "DPSGDRegressor",
    "MacConfig", "train_dp_mac",
    "PrivacyParams", "gaussian_mechanism", "perturb_coefficients",
    "Dataset", "WeightStack",
    "dp_pca",
    "SensitivityBundle",
    "SgdConfig", "train_dp_sgd",
    "TaylorCoefficients",
    "__version__",
]
