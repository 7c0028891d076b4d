"""Ergodic capacity with quantized CSI at the transmitter.

The transmitter learns which of F gain intervals the channel is in and picks
one of F powers.  Rates are in nats per channel use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .errors import ConvergenceError, DomainError
from .fading import FadingModel, rayleigh_model
from .search import SearchSpec, multistart_maximize

__all__ = [
    "ErgodicQuantizer",
    "waterfill",
    "ergodic_no_csi",
    "ergodic_full_csi",
    "ergodic_partial_csi",
    "ergodic_bounds_lloyd",
]

_LAM_LO, _LAM_HI = 1e-12, 1e6


def _check_power(p_avg: float) -> float:
    if not (p_avg > 0 and math.isfinite(p_avg)):
        raise DomainError("average power must be positive and finite")
    return float(p_avg)


@dataclass
class ErgodicQuantizer:
    """Power levels ``powers[f]`` used on ``thresholds[f] <= gamma < thresholds[f+1]``."""

    powers: np.ndarray
    thresholds: np.ndarray
    lam: float

    @property
    def levels(self) -> int:
        return len(self.powers)

    def masses(self, model: FadingModel | None = None) -> np.ndarray:
        model = model or rayleigh_model()
        return np.asarray(model.mass(self.thresholds[:-1], self.thresholds[1:]), dtype=float)

    def average_power(self, model: FadingModel | None = None) -> float:
        return float(np.dot(self.powers, self.masses(model)))

    def rate(self, model: FadingModel | None = None) -> float:
        model = model or rayleigh_model()
        s = self.thresholds
        return model.expected_log_sum(self.powers, self.thresholds)


def waterfill(gains, weights, budget: float) -> tuple[np.ndarray, float]:
    """Water-filling over parallel channels.

    Maximizes ``sum w_i log(1 + g_i P_i)`` subject to ``sum w_i P_i = budget``;
    returns the powers and the water level ``nu = 1/lambda``.
    """
    g = np.asarray(gains, dtype=float)
    w = np.asarray(weights, dtype=float)
    powers = np.zeros_like(g)
    ok = (g > 0) & (w > 0)
    if not np.any(ok):
        raise DomainError("no channel with positive gain and weight")
    idx = np.flatnonzero(ok)
    order = idx[np.argsort(-g[idx])]
    inv = 1.0 / g[order]
    cw = np.cumsum(w[order])
    cwi = np.cumsum(w[order] * inv)
    nu = (budget + cwi) / cw
    # the active set is the longest prefix whose weakest channel is below water
    k = int(np.flatnonzero(nu > inv)[-1])
    level = nu[k]
    powers[order[: k + 1]] = level - inv[: k + 1]
    return powers, float(level)


def ergodic_no_csi(p_avg: float, model: FadingModel | None = None) -> float:
    """Constant power: ``E[log(1 + gamma * p_avg)]``."""
    model = model or rayleigh_model()
    return model.expected_log(_check_power(p_avg))


def _solve_lambda(power_of_lam, p_avg: float) -> float:
    # power_of_lam is decreasing; solve on log(lambda)
    g = lambda u: power_of_lam(math.exp(u)) - p_avg  # noqa: E731
    lo, hi = math.log(_LAM_LO), math.log(_LAM_HI)
    if g(lo) < 0 or g(hi) > 0:
        raise DomainError("average power outside the achievable range")
    u = optimize.brentq(g, lo, hi, xtol=1e-14, rtol=1e-15, maxiter=500)
    return math.exp(u)


def ergodic_full_csi(p_avg: float, model: FadingModel | None = None) -> tuple[float, float]:
    """Water-filling in time; returns ``(rate, lambda)``."""
    model = model or rayleigh_model()
    p_avg = _check_power(p_avg)
    lam = _solve_lambda(model.waterfill_power, p_avg)
    return float(model.expected_log_ratio(lam)), lam


def stationary_thresholds(powers: np.ndarray, lam: float) -> np.ndarray:
    """Interior thresholds that make each boundary indifferent at multiplier ``lam``.

    Returns ``s_0 .. s_F`` with ``s_0 = 0`` and ``s_F = inf``; a boundary whose
    indifference point does not exist is pushed to ``inf``.
    """
    P = np.asarray(powers, dtype=float)
    d = np.diff(P)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        x = lam * d
        small = x < 1e-8
        # d / (e^{lam d} - 1), continued to 1/lam at d = 0
        ratio = np.where(small, (1.0 - x / 2) / lam, d / np.expm1(np.where(small, 1.0, x)))
        inv = ratio - P[:-1]
        interior = np.where(inv > 0, 1.0 / inv, np.inf)
    return np.concatenate(([0.0], interior, [np.inf]))


class _PartialProblem:
    def __init__(self, p_avg: float, F: int, model: FadingModel):
        self.p, self.F, self.model = p_avg, F, model

    def powers(self, z: np.ndarray) -> np.ndarray:
        return np.cumsum(np.exp(z))

    def design(self, P: np.ndarray):
        """``(lam, thresholds)`` meeting the power budget, or a violation amount."""
        p = self.p
        if not (P[0] < p < P[-1]):
            return None, max(P[0] - p, p - P[-1], 0.0) / p + 1e-3

        def avg(lam):
            s = stationary_thresholds(P, lam)
            return float(np.dot(P, self.model.mass(s[:-1], s[1:])))

        try:
            lam = _solve_lambda(avg, p)
        except (DomainError, ValueError):
            return None, 1.0
        s = stationary_thresholds(P, lam)
        fin = s[1:-1][np.isfinite(s[1:-1])]
        # thresholds must stay ordered; infinite ones may only trail
        ordered = np.all(np.diff(fin) >= 0) and np.all(np.isfinite(s[1:-1][: fin.size]))
        viol = max(P[-1] - 1.0 / lam, 0.0) * lam + (0.0 if ordered else 1.0)
        if viol > 1e-12:
            return None, viol
        return lam, s

    def value(self, z: np.ndarray) -> float:
        P = self.powers(z)
        lam, s = self.design(P)
        if lam is None:
            return -1.0 - s
        return self.model.expected_log_sum(P, s)


def _to_z(P: np.ndarray, p_avg: float) -> np.ndarray:
    gaps = np.diff(np.concatenate(([0.0], np.maximum.accumulate(P))))
    return np.log(np.maximum(gaps, 1e-9 * p_avg))


def ergodic_partial_csi(
    p_avg: float,
    f_levels: int,
    model: FadingModel | None = None,
    spec: SearchSpec | None = None,
) -> tuple[float, ErgodicQuantizer]:
    """Best F-level power/threshold design; returns ``(rate, quantizer)``.

    Searches over the F powers.  For given powers the thresholds follow from
    boundary indifference and the multiplier is tuned so the average power
    equals ``p_avg``.
    """
    model = model or rayleigh_model()
    p_avg = _check_power(p_avg)
    F = int(f_levels)
    if F < 2:
        raise DomainError("partial CSI needs at least two feedback levels")
    # many levels: the seed is already near-optimal and each evaluation is costly
    if spec is None:
        if F <= 4:
            spec = SearchSpec(restarts=8)
        elif F <= 8:
            spec = SearchSpec(restarts=2)
        else:
            spec = SearchSpec(restarts=1, max_evals=4 * (F + 1))
    prob = _PartialProblem(p_avg, F, model)

    # seed with the Lloyd centroid design, then jitter it deterministically
    _, s_up, P_up = _lloyd_upper(p_avg, F, model)
    base = _to_z(P_up, p_avg)
    rng = np.random.default_rng(spec.seed)
    starts = [base] + [base + rng.normal(scale=0.5, size=F) for _ in range(spec.restarts - 1)]
    hi = math.log(p_avg) + 12.0
    bounds = spec.bounds or tuple((math.log(p_avg) - 40.0, hi) for _ in range(F))
    res = multistart_maximize(prob.value, starts, bounds=bounds, tol=spec.tol, max_evals=spec.max_evals)
    P = prob.powers(res.x)
    lam, s = prob.design(P)
    if lam is None:
        raise ConvergenceError("no feasible F-level design found")
    q = ErgodicQuantizer(P, s, lam)
    return q.rate(model), q


# --- Lloyd-style bounds -------------------------------------------------------


def _initial_thresholds(p_avg: float, F: int, model: FadingModel) -> np.ndarray:
    _, lam = ergodic_full_csi(p_avg, model)
    tail = model.sf(lam)
    q = tail * (1.0 - np.arange(F - 1) / (F - 1))
    inner = np.asarray(model.isf(np.maximum(q, 1e-300)), dtype=float).reshape(-1)
    inner[0] = lam
    return np.concatenate(([0.0], np.maximum.accumulate(inner), [np.inf]))


def _centroids(s: np.ndarray, model: FadingModel):
    w = np.asarray(model.mass(s[:-1], s[1:]), dtype=float)
    mu = np.array([
        model.conditional_mean(a, b) if b > a else a for a, b in zip(s[:-1], s[1:])
    ])
    return w, mu


def _lloyd_upper(p_avg: float, F: int, model: FadingModel, tol: float = 1e-8, max_iter: int = 20000):
    s = _initial_thresholds(p_avg, F, model) if F > 1 else np.array([0.0, np.inf])
    for _ in range(max_iter):
        w, mu = _centroids(s, model)
        P, nu = waterfill(mu, w, p_avg)
        lam = 1.0 / nu
        B = P / (1.0 + mu * P)
        A = np.log1p(mu * P) - B * mu - lam * P
        new = s.copy()
        for f in range(1, F):
            den = B[f - 1] - B[f]
            if abs(den) > 1e-300 and (P[f] > 0 or P[f - 1] > 0):
                new[f] = (A[f] - A[f - 1]) / den
            new[f] = min(max(new[f], new[f - 1]), s[f + 1])
        move = np.max(np.abs(new[1:-1] - s[1:-1])) if F > 1 else 0.0
        s = new
        if move < tol:
            break
    else:
        raise ConvergenceError("Lloyd iteration for the centroid bound did not settle")
    w, mu = _centroids(s, model)
    P, _ = waterfill(mu, w, p_avg)
    return float(np.dot(w, np.log1p(mu * P))), s, P


def _lower_value(s: np.ndarray, p_avg: float, model: FadingModel):
    w = np.asarray(model.mass(s[:-1], s[1:]), dtype=float)
    g = s[:-1]
    P, nu = waterfill(g, w, p_avg)
    return float(np.dot(w, np.log1p(g * P))), P, nu


def _edge_solve(s: np.ndarray, idx: np.ndarray, P: np.ndarray, lam: float, model: FadingModel) -> np.ndarray:
    """Best position of each threshold in ``idx`` with its neighbours held fixed.

    The derivative of the Lagrangian in ``s_f`` is
    ``pdf(s)(A_{f-1} - A_f(s)) + Pr[s <= gamma < s_{f+1}] P_f / (1 + s P_f)``
    with ``A_g(s) = log(1 + s P_g) - lam P_g``; it is bisected on the cell.
    """
    a, b = s[idx - 1], s[idx + 1]
    b = np.where(np.isfinite(b), b, np.maximum(a, s[idx]) + 60.0)
    Pm, Pf = P[idx - 1], P[idx]
    left = np.log1p(a * Pm) - lam * Pm

    def deriv(x):
        return (model.pdf(x) * (left - np.log1p(x * Pf) + lam * Pf)
                + model.mass(x, s[idx + 1]) * Pf / (1.0 + x * Pf))

    lo, hi = a.copy(), b.copy()
    d_lo, d_hi = deriv(lo), deriv(hi)
    for _ in range(56):
        mid = 0.5 * (lo + hi)
        pos = deriv(mid) > 0
        lo = np.where(pos, mid, lo)
        hi = np.where(pos, hi, mid)
    x = 0.5 * (lo + hi)
    # no sign change: the Lagrangian is monotone on the cell
    x = np.where((d_lo <= 0) & (d_hi <= 0), a, x)
    x = np.where((d_lo >= 0) & (d_hi >= 0), b, x)
    return np.where(b > a, x, a)


def _lloyd_lower(p_avg: float, F: int, model: FadingModel, tol: float = 1e-8, max_iter: int = 200000,
                 start: np.ndarray | None = None):
    if F == 1:
        # the only region starts at zero gain, nothing can be guaranteed
        return 0.0, np.array([0.0, np.inf]), np.zeros(1)
    s = _initial_thresholds(p_avg, F, model) if start is None else np.array(start, dtype=float)
    sweeps = 0
    odd, even = np.arange(1, F, 2), np.arange(2, F, 2)
    for sweeps in range(max_iter):
        old = s.copy()
        for idx in (odd, even):
            if idx.size:
                _, P, nu = _lower_value(s, p_avg, model)
                s[idx] = _edge_solve(s, idx, P, 1.0 / nu, model)
        if np.max(np.abs(s[1:-1] - old[1:-1])) < tol:
            break
    else:
        raise ConvergenceError("Lloyd iteration for the threshold bound did not settle")
    val, P, _ = _lower_value(s, p_avg, model)
    return val, s, P


def ergodic_bounds_lloyd(
    p_avg: float, f_levels: int, model: FadingModel | None = None
) -> tuple[float, float, np.ndarray]:
    """Bounds from quantized water-filling; returns ``(lower, upper, thresholds)``.

    The upper bound replaces the gain in each cell by its centroid, the lower
    bound by the cell's left edge.  Thresholds returned are those of the
    centroid design.
    """
    model = model or rayleigh_model()
    p_avg = _check_power(p_avg)
    F = int(f_levels)
    if F < 1:
        raise DomainError("need at least one level")
    upper, s_up, _ = _lloyd_upper(p_avg, F, model)
    lower, _, _ = _lloyd_lower(p_avg, F, model, start=s_up)
    return lower, upper, s_up
