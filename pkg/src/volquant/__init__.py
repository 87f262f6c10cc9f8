"""Semi-parametric Value-at-Risk for commodity panels via fixed-effects quantile regression."""

from .errors import DataError, RankDeficiencyError, SolverError
from .inference import BootstrapConfig, bootstrap_fit, confidence_bands, intersect_bands
from .panelqr import PanelDataset, QuantileFit, build_panel, fit_panel_qr, fit_quantile_curve
from .varengine import compare_to_normal, forecast_var, parametric_var, violation_rate

__all__ = [
    "BootstrapConfig", "DataError", "PanelDataset", "QuantileFit", "RankDeficiencyError",
    "SolverError", "bootstrap_fit", "build_panel", "compare_to_normal", "confidence_bands",
    "fit_panel_qr", "fit_quantile_curve", "forecast_var", "intersect_bands",
    "parametric_var", "violation_rate",
]
