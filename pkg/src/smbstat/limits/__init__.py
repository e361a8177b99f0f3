"""Monte Carlo diagnostics for the limit laws of the information function."""

from .clt import (
    CLTReport,
    RateReport,
    clt_report_from_draws,
    clt_sample,
    fit_rate,
    ks_noise_floor,
    ks_statistic,
    normalisation,
    rate_fit,
)
from .paths import LILReport, PathEnsemble, lil_statistic, wip_diagnostics, wip_paths
from .stein import SteinReport, stein_defaults, stein_diagnostic

__all__ = [
    "CLTReport",
    "LILReport",
    "PathEnsemble",
    "RateReport",
    "SteinReport",
    "clt_report_from_draws",
    "clt_sample",
    "fit_rate",
    "ks_noise_floor",
    "ks_statistic",
    "lil_statistic",
    "normalisation",
    "rate_fit",
    "stein_defaults",
    "stein_diagnostic",
    "wip_diagnostics",
    "wip_paths",
]
