"""Post-hoc selective classification with closed-form density-ratio rejectors."""
from ._kernels import BACKEND
from .calibration import CalibrationModel, apply_temperature, fit_temperature
from .divergences import DiscreteDistribution, divergence, phi_alpha, psi_alpha, psi_alpha_inv
from .losses import LossKind, PointwiseRisk, pointwise_risk_direct, pointwise_risk_plugin
from .rejectors import (
    DensityRatioRejector,
    DroConfig,
    RatioRejectionRule,
    RejectorSpec,
    chow_oracle,
    dro_adversarial,
    dro_dual_search,
    evaluate_ratio,
    fit,
    fit_alpha_pos,
    fit_chi_square,
    fit_kl,
    reject,
)

__version__ = "0.1.0"
