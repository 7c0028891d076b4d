"""Throughput of HARQ protocols with quantized channel feedback over block fading."""

__version__ = "0.1.0"

from .dp import dp_full_csi_throughput
from .ergodic import ergodic_bounds_lloyd, ergodic_full_csi, ergodic_no_csi, ergodic_partial_csi
from .errors import ConvergenceError, DomainError, UnsupportedError
from .fading import FadingModel, RayleighFading, e1, exp_e1, rayleigh_model
from .optimizer import optimize_plan, sweep
from .orderstats import maxsum_ccdf, maxsum_cdf, pm_alo, pm_inr_bounds, pm_inr_quadrature, pm_rtd
from .outage import outage_full_csi, outage_no_csi, outage_one_bit, outage_partial_csi
from .protocol import (
    ProtocolKind,
    ThresholdPlan,
    ThroughputReport,
    analytic_throughput,
    classical_plan,
    feedback,
    ptilde_table,
)
from .search import SearchSpec
from .simulator import RenewalStats, empirical_ptilde, simulate

__all__ = [
    "ConvergenceError", "DomainError", "FadingModel", "ProtocolKind", "RayleighFading", "RenewalStats",
    "SearchSpec", "ThresholdPlan", "ThroughputReport", "UnsupportedError", "analytic_throughput",
    "classical_plan", "dp_full_csi_throughput", "e1", "empirical_ptilde", "ergodic_bounds_lloyd",
    "ergodic_full_csi", "ergodic_no_csi", "ergodic_partial_csi", "exp_e1", "feedback", "maxsum_ccdf",
    "maxsum_cdf", "optimize_plan", "outage_full_csi", "outage_no_csi", "outage_one_bit",
    "outage_partial_csi", "pm_alo", "pm_inr_bounds", "pm_inr_quadrature", "pm_rtd", "ptilde_table",
    "rayleigh_model", "simulate", "sweep",
]
