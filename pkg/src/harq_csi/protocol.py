"""HARQ with quantized channel feedback: policies, event probabilities and throughput.

Before slot m the receiver reports a symbol ``B_m`` in ``{0..F-1}``.  A
positive symbol names a power ``theta / s[m, B_m]`` that is guaranteed to
finish decoding in this slot; ``B_m = 0`` means no listed level suffices and
the transmitter sends with ``theta / tau[m]`` and hopes for the best.  The
receiver quantizes ``gamma_m / xi_m`` where ``xi_m`` is the fraction of the
decoding requirement still missing.

A plan whose interior thresholds are all infinite carries no channel
information: the symbol only says decode/fail.  Such plans are treated as
classical ACK/NACK HARQ, where the acknowledgement arrives at the end of the
slot, so no extra slot is spent learning about a success.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from scipy import optimize

from .errors import DomainError, UnsupportedError
from .fading import FadingModel, rayleigh_model
from .orderstats import pm_inr_bounds

__all__ = [
    "ProtocolKind",
    "ThresholdPlan",
    "ThroughputReport",
    "scale_factor",
    "xi_update",
    "decoded",
    "feedback",
    "ptilde_table",
    "plan_metrics",
    "analytic_throughput",
    "classical_plan",
]

_GL_NODES = {1: 96, 2: 64, 3: 40}
_TAIL = 1e-18


class ProtocolKind(str, Enum):
    ALO = "ALO"
    RTD = "RTD"
    INR = "INR"

    @classmethod
    def parse(cls, value) -> "ProtocolKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).upper())
        except ValueError:
            raise DomainError(f"unknown protocol {value!r}") from None


@dataclass(frozen=True)
class ThresholdPlan:
    """Per-slot thresholds ``tau[m]`` and quantizer edges ``s[m, f]``.

    ``s`` may be given with all ``F+1`` edges per slot (first 0, last inf) or
    with only the ``F-1`` interior ones.  ``rate`` is in nats and may be
    ``None`` when it is to be set by a power budget.
    """

    M: int
    F: int
    tau: tuple
    s: tuple
    rate: float | None = None

    def __post_init__(self):
        M, F = int(self.M), int(self.F)
        if M < 1 or F < 1:
            raise DomainError("M and F must be at least 1")
        if M >= 2 and F < 2:
            raise DomainError("retransmissions need at least one feedback bit")
        tau = np.atleast_1d(np.asarray(self.tau, dtype=float))
        if tau.shape != (M,) or np.any(~(tau > 0)):
            raise DomainError("tau must hold M positive (possibly infinite) values")
        s = np.asarray(self.s, dtype=float).reshape(M, -1) if np.size(self.s) else np.zeros((M, 0))
        if s.shape[1] == F + 1:
            if np.any(s[:, 0] != 0) or np.any(s[:, -1] != np.inf):
                raise DomainError("full threshold rows must start at 0 and end at inf")
            s = s[:, 1:-1]
        if s.shape != (M, F - 1):
            raise DomainError(f"expected {F - 1} interior thresholds per slot")
        if np.any(np.isnan(s)) or np.any(s < 0) or np.any(np.diff(s, axis=1) < 0):
            raise DomainError("thresholds must be non-negative and non-decreasing")
        if self.rate is not None and not (self.rate >= 0 and math.isfinite(self.rate)):
            raise DomainError("rate must be non-negative and finite")
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "tau", tuple(float(t) for t in tau))
        object.__setattr__(self, "s", tuple(tuple(float(v) for v in row) for row in s))

    @property
    def interior(self) -> np.ndarray:
        return np.array(self.s, dtype=float).reshape(self.M, self.F - 1)

    @property
    def edges(self) -> np.ndarray:
        """``M x (F+1)`` array including ``s_{m,0} = 0`` and ``s_{m,F} = inf``."""
        M = self.M
        return np.hstack((np.zeros((M, 1)), self.interior, np.full((M, 1), np.inf)))

    @property
    def taus(self) -> np.ndarray:
        return np.array(self.tau)

    @property
    def theta(self) -> float:
        if self.rate is None:
            raise DomainError("plan has no rate")
        return math.expm1(self.rate)

    @property
    def classical(self) -> bool:
        return bool(np.all(np.isinf(self.interior)))

    def with_rate(self, rate: float) -> "ThresholdPlan":
        return replace(self, rate=rate)


@dataclass
class ThroughputReport:
    """Renewal-reward summary of a plan; rates in nats, power in SNR units."""

    eta: float
    p_out: float
    mean_renewal: float
    mean_power: float
    ptilde: np.ndarray
    rate: float
    plan: ThresholdPlan
    inr_bounds: tuple | None = field(default=None)


def xi_update(kind: ProtocolKind, xi, x, theta: float):
    """Fraction of the decoding requirement left after a slot that delivered ``x``.

    ``x = gamma / tau`` is measured in units of the full requirement.
    """
    kind = ProtocolKind.parse(kind)
    if kind is ProtocolKind.ALO:
        return xi * (np.asarray(x) < 1.0)
    if kind is ProtocolKind.RTD:
        return xi - x
    # same as ((1 + theta xi)/(1 + theta x) - 1)/theta, but fine at theta -> 0
    return (xi - x) / (1.0 + theta * x)


def scale_factor(kind, history, rate: float) -> float:
    """``xi_m`` after the failed slots in ``history`` of ``(gamma_t, tau_t)`` pairs."""
    kind = ProtocolKind.parse(kind)
    theta = math.expm1(rate)
    xi = 1.0
    for gamma, tau in history:
        xi = float(xi_update(kind, xi, gamma / tau, theta))
    return xi


def decoded(kind, snrs, rate: float) -> bool:
    """Whether received SNRs ``gamma_t P_t`` meet the decoding rule for ``kind``."""
    kind = ProtocolKind.parse(kind)
    u = np.asarray(snrs, dtype=float)
    theta = math.expm1(rate)
    if kind is ProtocolKind.ALO:
        return bool(np.any(u >= theta))
    if kind is ProtocolKind.RTD:
        return bool(u.sum() >= theta)
    return bool(np.sum(np.log1p(u)) >= rate)


def feedback(kind, plan: ThresholdPlan, m: int, gamma_m: float, history) -> int:
    """Symbol ``B_m`` for slot ``m`` (1-based) given the earlier zero-feedback slots."""
    if not 1 <= m <= plan.M:
        raise DomainError("slot index out of range")
    xi = scale_factor(kind, history, plan.rate)
    if xi <= 0:
        return plan.F - 1
    return int(np.searchsorted(plan.interior[m - 1], gamma_m / xi, side="right"))


# --- event probabilities ------------------------------------------------------


def _alo_table(plan: ThresholdPlan, model: FadingModel) -> np.ndarray:
    M, F = plan.M, plan.F
    edges = plan.edges
    cap = np.minimum(plan.taus, edges[:, 1])
    tab = np.zeros((M + 1, F))
    pref = 1.0
    for m in range(M + 1):
        if m < M:
            tab[m, :] = pref * model.cdf(edges[m, 1:])
            pref *= float(model.cdf(cap[m]))
        else:
            tab[m, :] = pref
    return tab


def _quadrature_table(kind: ProtocolKind, plan: ThresholdPlan, theta: float, model: FadingModel) -> np.ndarray:
    """Tensor Gauss-Legendre over the gains of the failed slots."""
    M, F = plan.M, plan.F
    edges = plan.edges
    cap = np.minimum(plan.taus, edges[:, 1])
    top = float(model.isf(_TAIL))
    n = _GL_NODES.get(M, 0)
    if n == 0:
        raise UnsupportedError("quadrature tables support M <= 3")
    u, w = np.polynomial.legendre.leggauss(n)
    tab = np.zeros((M + 1, F))
    xi, wt = np.ones(1), np.ones(1)
    for m in range(M + 1):
        live = xi > 0
        for f in range(F):
            s_next = edges[m, f + 1] if m < M else np.inf
            if np.isinf(s_next):
                val = np.where(live, 1.0, 0.0)
            else:
                val = model.cdf(np.maximum(xi, 0.0) * s_next)
            tab[m, f] = float(np.dot(wt, val))
        if m == M:
            break
        # integrate gamma_m over [0, xi c_m) where slot m fails with B_m = 0
        upper = np.minimum(np.maximum(xi, 0.0) * cap[m], top)
        g = 0.5 * upper[:, None] * (u[None, :] + 1.0)
        gw = (0.5 * upper * wt)[:, None] * w[None, :] * model.pdf(g)
        xi = xi_update(kind, np.repeat(xi, n), (g / plan.taus[m]).ravel(), theta)
        wt = gw.ravel()
    return tab


def _classical_table(base: np.ndarray) -> np.ndarray:
    # row m holds Pr[first m slots fail]; the last row repeats the outage value
    M = base.shape[0] - 1
    F = base.shape[1]
    q = base[1:, 0]
    tab = np.empty_like(base)
    tab[:M, 0] = q
    tab[M, 0] = q[M - 1]
    prev = np.concatenate(([1.0], q))
    for f in range(1, F):
        tab[:, f] = prev[: M + 1]
    tab[M, 1:] = q[M - 1]
    return tab


def ptilde_table(
    kind,
    plan: ThresholdPlan,
    model: FadingModel | None = None,
    mc_renewals: int | None = None,
    seed: int = 0,
) -> np.ndarray:
    """Event probabilities as an ``(M+1) x F`` array.

    For a plan with channel feedback, row ``m`` (0-based) column ``f`` is the
    probability that slots ``1..m`` report zero and slot ``m+1`` reports at
    most ``f``; the last row column 0 is the outage probability.  For a
    classical plan row ``m`` column 0 is the probability that the first
    ``m+1`` slots fail.  Plans with more than three slots fall back to Monte
    Carlo with ``mc_renewals`` samples when given.
    """
    kind = ProtocolKind.parse(kind)
    model = model or rayleigh_model()
    if kind is ProtocolKind.ALO:
        base = _alo_table(plan, model)
    elif plan.M <= 3:
        theta = plan.theta if kind is ProtocolKind.INR else 0.0
        base = _quadrature_table(kind, plan, theta, model)
    elif mc_renewals:
        from .simulator import empirical_ptilde

        base = empirical_ptilde(kind, plan, mc_renewals, seed=seed, model=model, raw_indexing=True)[0]
    else:
        raise UnsupportedError("more than three slots needs the Monte Carlo fallback (mc_renewals)")
    if plan.classical and plan.M > 1:
        return _classical_table(base)
    # B_m <= F-1 always holds, including after a zero-feedback slot that already
    # decoded (tau below s_1); the gain formulas only see the failed histories
    base[1 : plan.M, plan.F - 1] = base[: plan.M - 1, 0]
    return base


def _assemble(plan: ThresholdPlan, tab: np.ndarray) -> tuple[float, float, float]:
    """``(E[T], power cost per unit theta, p_out)`` from a table."""
    M, F = plan.M, plan.F
    mean_t = 1.0 + math.fsum(tab[: M - 1, 0])
    taus = plan.taus
    with np.errstate(divide="ignore"):
        inv_tau = np.where(np.isinf(taus), 0.0, 1.0 / taus)
    if plan.classical and M > 1:
        reach = np.concatenate(([1.0], tab[: M - 1, 0]))
        cost = math.fsum(reach * inv_tau)
        return mean_t, cost, float(tab[M, 0])
    inner = plan.interior
    with np.errstate(divide="ignore"):
        inv_s = np.where(np.isinf(inner), 0.0, 1.0 / np.where(inner > 0, inner, np.nan))
    terms = [tab[m, 0] * inv_tau[m] for m in range(M)]
    for m in range(M):
        for f in range(1, F):
            jump = tab[m, f] - tab[m, f - 1]
            if jump > 0:
                if inner[m, f - 1] == 0:
                    return mean_t, math.inf, float(tab[M, 0])
                terms.append(jump * inv_s[m, f - 1])
    return mean_t, math.fsum(terms), float(tab[M, 0])


def plan_metrics(kind, plan: ThresholdPlan, model: FadingModel | None = None, **table_kw) -> ThroughputReport:
    """Throughput, outage, renewal length and power of a plan at its own rate."""
    kind = ProtocolKind.parse(kind)
    tab = ptilde_table(kind, plan, model, **table_kw)
    mean_t, cost, p_out = _assemble(plan, tab)
    theta = plan.theta
    eta = plan.rate * (1.0 - p_out) / mean_t
    return ThroughputReport(eta, p_out, mean_t, theta * cost / mean_t, tab, plan.rate, plan,
                            _bounds_for(kind, plan))


def _bounds_for(kind: ProtocolKind, plan: ThresholdPlan):
    if kind is not ProtocolKind.INR or not plan.classical or plan.M > 8 or plan.rate is None:
        return None
    if np.any(np.isinf(plan.taus)):
        return None
    return tuple(pm_inr_bounds(plan.taus[: m], plan.theta) for m in range(1, plan.M + 1))


def analytic_throughput(
    kind, plan: ThresholdPlan, p_avg: float, model: FadingModel | None = None,
    theta_hint: float | None = None, **table_kw
) -> ThroughputReport:
    """Throughput of ``plan`` with the rate set so the average power is ``p_avg``.

    For ALO and RTD the tables do not depend on the rate, so the rate follows
    in closed form.  For INR a one-dimensional root in ``log(theta)`` is
    solved, bracketed around ``theta_hint`` when one is given.
    """
    kind = ProtocolKind.parse(kind)
    model = model or rayleigh_model()
    if not (p_avg > 0 and math.isfinite(p_avg)):
        raise DomainError("average power must be positive and finite")

    def theta_for(tab):
        mean_t, cost, _ = _assemble(plan, tab)
        if not (cost > 0) or not math.isfinite(cost):
            raise DomainError("plan spends no power or infinite power")
        return p_avg * mean_t / cost

    if kind is not ProtocolKind.INR:
        tab = ptilde_table(kind, plan.with_rate(1.0), model, **table_kw)
        theta = theta_for(tab)
    else:
        def gap(logt):
            t = math.exp(logt)
            tab = ptilde_table(kind, plan.with_rate(math.log1p(t)), model, **table_kw)
            mean_t, cost, _ = _assemble(plan, tab)
            return math.log(t * cost / mean_t) - math.log(p_avg)

        if theta_hint is not None and theta_hint > 0 and math.isfinite(theta_hint):
            t0, first = theta_hint, 0.02
        else:
            # the small-theta limit is RTD, a good first guess
            t0 = theta_for(ptilde_table(ProtocolKind.RTD, plan.with_rate(1.0), model, **table_kw)
                           if plan.M <= 3 else ptilde_table(kind, plan.with_rate(1.0), model, **table_kw))
            first = 0.5
        lo = hi = math.log(t0)
        g_lo = g_hi = gap(lo)
        step = first
        while g_lo > 0:
            lo -= step
            step *= 2
            g_lo = gap(lo)
            if lo < -80:
                raise DomainError("could not bracket the INR rate")
        step = first
        while g_hi < 0:
            hi += step
            step *= 2
            g_hi = gap(hi)
            if hi > 80:
                raise DomainError("could not bracket the INR rate")
        if lo == hi:
            theta = math.exp(lo)
        else:
            theta = math.exp(optimize.brentq(gap, lo, hi, xtol=1e-13, rtol=1e-15))
    return plan_metrics(kind, plan.with_rate(math.log1p(theta)), model, **table_kw)


def classical_plan(M: int, taus, rate: float | None = None) -> ThresholdPlan:
    """ACK/NACK-only plan: all interior thresholds infinite (one feedback bit)."""
    M = int(M)
    F = 2 if M > 1 else 1
    return ThresholdPlan(M, F, tuple(np.atleast_1d(np.asarray(taus, dtype=float))),
                         tuple((np.inf,) * (F - 1) for _ in range(M)), rate)
