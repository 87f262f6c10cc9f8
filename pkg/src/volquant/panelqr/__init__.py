"""Fixed-effects panel quantile regression."""

from .dataset import PanelDataset, build_panel
from .fit import (
    DEFAULT_TAUS,
    CrossingReport,
    QuantileCurve,
    QuantileFit,
    SolverReport,
    crossing_diagnostic,
    directional_derivatives,
    fit_panel_qr,
    fit_quantile_curve,
    fit_univariate_qr,
    objective,
    rearranged_quantiles,
    validate_tau,
    validate_taus,
)
from .solver import check_loss, solve_check_loss

__all__ = [
    "DEFAULT_TAUS", "CrossingReport", "PanelDataset", "QuantileCurve", "QuantileFit",
    "SolverReport", "build_panel", "check_loss", "crossing_diagnostic",
    "directional_derivatives", "fit_panel_qr", "fit_quantile_curve", "fit_univariate_qr",
    "objective", "rearranged_quantiles", "solve_check_loss", "validate_tau", "validate_taus",
]
