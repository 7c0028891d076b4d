"""Outage capacity (fixed rate, single slot) with quantized CSI.

A transmitter that learns which gain interval the channel is in spends just
enough power to hit a fixed rate ``R`` at the interval's left edge.  The
lowest interval is merged with a top interval ``[s_0, inf)`` and both use
power ``(e^R - 1)/s_0``, so outage happens exactly when ``gamma < s_1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .fading import FadingModel, rayleigh_model
from .search import SearchSpec, maximize_scalar, multistart_maximize

__all__ = [
    "OutageQuantizer",
    "outage_no_csi",
    "outage_one_bit",
    "outage_one_bit_two_variable",
    "outage_partial_csi",
    "outage_full_csi",
    "outage_bound_pair",
    "outage_geometric_ladder",
]


def _check_power(p_avg: float) -> float:
    if not (p_avg > 0 and math.isfinite(p_avg)):
        raise DomainError("average power must be positive and finite")
    return float(p_avg)


def _upper_gain(model: FadingModel) -> float:
    return float(model.isf(1e-15))


@dataclass
class OutageQuantizer:
    """Thresholds ``s_1 <= ... <= s_{F-1} <= wrap`` with a common rate."""

    thresholds: np.ndarray
    wrap: float
    rate: float

    @property
    def theta(self) -> float:
        return math.expm1(self.rate)

    @property
    def powers(self) -> np.ndarray:
        """``P_0`` (outage/wrap region) followed by ``P_1 .. P_{F-1}``."""
        edges = np.concatenate(([self.wrap], self.thresholds))
        with np.errstate(divide="ignore"):
            return self.theta / edges

    def region_masses(self, model: FadingModel | None = None) -> np.ndarray:
        model = model or rayleigh_model()
        s = np.concatenate((self.thresholds, [self.wrap]))
        inner = np.asarray(model.mass(s[:-1], s[1:]), dtype=float)
        m0 = float(model.cdf(self.thresholds[0])) + float(model.sf(self.wrap))
        return np.concatenate(([m0], inner))

    def average_power(self, model: FadingModel | None = None) -> float:
        P, w = self.powers, self.region_masses(model)
        return float(np.sum(np.where(w > 0, P * w, 0.0)))

    def outage_probability(self, model: FadingModel | None = None) -> float:
        model = model or rayleigh_model()
        return float(model.cdf(self.thresholds[0]))

    def throughput(self, model: FadingModel | None = None) -> float:
        return self.rate * (1.0 - self.outage_probability(model))


def _inverse_power_sum(s: np.ndarray, wrap: float, model: FadingModel) -> float:
    """``sum_f Pr[R_f] / s_f`` with the wrap region charged at ``1/wrap``."""
    edges = np.concatenate((s, [wrap]))
    masses = np.asarray(model.mass(edges[:-1], edges[1:]), dtype=float)
    d = float(np.sum(masses / s))
    if math.isfinite(wrap):
        d += (float(model.cdf(s[0])) + float(model.sf(wrap))) / wrap
    return d


def _value(s: np.ndarray, wrap: float, p_avg: float, model: FadingModel) -> float:
    if s[0] <= 0:
        return 0.0
    d = _inverse_power_sum(s, wrap, model)
    return float(model.sf(s[0])) * math.log1p(p_avg / d)


def _quantizer(s: np.ndarray, wrap: float, p_avg: float, model: FadingModel) -> OutageQuantizer:
    d = _inverse_power_sum(s, wrap, model)
    return OutageQuantizer(np.asarray(s, dtype=float), float(wrap), math.log1p(p_avg / d))


def outage_no_csi(p_avg: float, model: FadingModel | None = None) -> tuple[float, float]:
    """Constant power, rate chosen to balance outage; returns ``(eta, s)``."""
    model = model or rayleigh_model()
    p = _check_power(p_avg)
    s, eta = maximize_scalar(lambda x: math.log1p(p * x) * float(model.sf(x)), 0.0, _upper_gain(model))
    return eta, s


def outage_one_bit(p_avg: float, model: FadingModel | None = None) -> tuple[float, float]:
    """One feedback bit with no power spent below ``s_1``; returns ``(eta, s_1)``.

    For Rayleigh the objective is ``exp(-s) log(1 + p s e^s)``.
    """
    model = model or rayleigh_model()
    p = _check_power(p_avg)

    def f(x):
        tail = float(model.sf(x))
        return tail * math.log1p(p * x / tail) if tail > 0 else 0.0

    s, eta = maximize_scalar(f, 0.0, _upper_gain(model))
    return eta, s


def outage_one_bit_two_variable(
    p_avg: float, model: FadingModel | None = None
) -> tuple[float, float, float]:
    """Two-level design with a free wrap threshold; returns ``(eta, s_1, s_0)``."""
    eta, q = outage_partial_csi(p_avg, 2, model)
    return eta, float(q.thresholds[0]), q.wrap


def _ladder_starts(s1_ref: float, n_free: int, wrap: bool, count: int) -> list[np.ndarray]:
    """Log-spaced geometric ladders in (log s_1, log gaps [, log wrap gap]) coordinates."""
    starts = []
    ratios = np.geomspace(1.05, 3.0, max(count // 2, 1))
    scales = [1.0, 0.5]
    for scale in scales:
        for r in ratios:
            s = s1_ref * scale * r ** np.arange(n_free)
            z = np.log(np.concatenate(([s[0]], np.diff(s))))
            if wrap:
                # alternate between a nearby wrap and one effectively at infinity
                far = len(starts) % 2 == 0
                z = np.append(z, 35.0 if far else math.log(max(s[-1], 1.0) * 4.0))
            starts.append(z)
            if len(starts) == count:
                return starts
    return starts


def _decode(z: np.ndarray, n_free: int, wrap: bool) -> tuple[np.ndarray, float]:
    s = np.cumsum(np.exp(z[:n_free]))
    w = s[-1] + math.exp(z[n_free]) if wrap else math.inf
    return s, w


def _search(p_avg, n_free, wrap, model, spec: SearchSpec | None, starts=None):
    spec = spec or SearchSpec(restarts=16, max_evals=3000 + 400 * n_free)
    _, s_ref = outage_one_bit(p_avg, model)
    starts = list(starts or []) + _ladder_starts(s_ref, n_free, wrap, spec.restarts)
    dims = n_free + int(wrap)
    # the wrap gap may need to be effectively infinite
    bounds = spec.bounds or tuple((-30.0, 40.0 if k == n_free else 6.0) for k in range(dims))

    def obj(z):
        s, w = _decode(z, n_free, wrap)
        return _value(s, w, p_avg, model)

    res = multistart_maximize(obj, starts, bounds=bounds, tol=spec.tol, max_evals=spec.max_evals)
    s, w = _decode(res.x, n_free, wrap)
    return res.value, s, w


def outage_partial_csi(
    p_avg: float,
    f_levels: int,
    model: FadingModel | None = None,
    spec: SearchSpec | None = None,
    intervals_only: bool = False,
) -> tuple[float, OutageQuantizer]:
    """Best F-level fixed-rate design; returns ``(eta, quantizer)``.

    ``intervals_only=True`` pins the wrap threshold at infinity, so the lowest
    region gets no power at all.
    """
    model = model or rayleigh_model()
    p = _check_power(p_avg)
    F = int(f_levels)
    if F < 2:
        raise DomainError("partial CSI needs at least two feedback levels")
    starts = []
    if F > 3:
        # a good geometric ladder is a strong start for many levels
        _, s1, xi = outage_geometric_ladder(p, F - 1, model)
        s = s1 * xi ** np.arange(F - 1)
        z = np.log(np.concatenate(([s[0]], np.maximum(np.diff(s), 1e-12))))
        starts.append(z if intervals_only else np.append(z, math.log(4.0 * s[-1])))
    eta, s, w = _search(p, F - 1, not intervals_only, model, spec, starts)
    q = _quantizer(s, w, p, model)
    return q.throughput(model), q


def outage_full_csi(p_avg: float, model: FadingModel | None = None) -> tuple[float, float]:
    """Truncated channel inversion; returns ``(eta, cutoff)``."""
    model = model or rayleigh_model()
    p = _check_power(p_avg)

    def f(x):
        return float(model.sf(x)) * math.log1p(p / model.tail_inverse_mean(x))

    s, eta = maximize_scalar(f, 1e-10, _upper_gain(model), log=True)
    return eta, s


def _interval_eta(p: float, n: int, model: FadingModel, spec: SearchSpec | None) -> tuple[float, np.ndarray]:
    if n == 1:
        eta, s1 = outage_one_bit(p, model)
        return eta, np.array([s1])
    starts = []
    if n > 3:
        _, s1, xi = outage_geometric_ladder(p, n, model)
        s = s1 * xi ** np.arange(n)
        starts.append(np.log(np.concatenate(([s[0]], np.maximum(np.diff(s), 1e-12)))))
    eta, s, _ = _search(p, n, False, model, spec, starts)
    return eta, s


def outage_bound_pair(
    p_avg: float, f_levels: int, model: FadingModel | None = None, spec: SearchSpec | None = None
) -> tuple[float, float, np.ndarray]:
    """Interval-only designs with ``F-1`` and ``F`` thresholds.

    The first is achievable with F levels (wrap at infinity) and the second
    lets the lowest region go unpowered at no feedback cost, so together they
    sandwich the F-level outage capacity.  Returns ``(lower, upper, thresholds
    of the upper design)``.
    """
    model = model or rayleigh_model()
    p = _check_power(p_avg)
    F = int(f_levels)
    if F < 2:
        raise DomainError("need at least two levels")
    lower, _ = _interval_eta(p, F - 1, model, spec)
    upper, s = _interval_eta(p, F, model, spec)
    return lower, upper, s


def outage_geometric_ladder(
    p_avg: float, n_thresholds: int, model: FadingModel | None = None
) -> tuple[float, float, float]:
    """Interval-only design restricted to ``s_f = s_1 xi^(f-1)``; returns ``(eta, s_1, xi)``."""
    model = model or rayleigh_model()
    p = _check_power(p_avg)
    n = int(n_thresholds)
    if n < 1:
        raise DomainError("need at least one threshold")
    k = np.arange(n)

    def obj(z):
        s1, xi = math.exp(z[0]), 1.0 + math.exp(z[1])
        return _value(s1 * xi ** k, math.inf, p, model)

    _, s_ref = outage_one_bit(p, model)
    starts = [np.array([math.log(s_ref * a), math.log(r)]) for a in (0.5, 1.0) for r in (0.05, 0.3, 1.0, 3.0)]
    res = multistart_maximize(obj, starts, bounds=((-30.0, 6.0), (-20.0, 4.0)), tol=1e-13)
    return res.value, math.exp(res.x[0]), 1.0 + math.exp(res.x[1])
