"""Causal power control with perfect CSI and retransmissions, solved on a grid.

The fading law is cut into ``grid`` equal-probability cells and each cell is
represented by its lower edge.  The accumulated receiver state lives on a
uniform grid over ``[0, g)`` where ``g`` is the decoding target of the
protocol.  Power is always computed from the pessimistic (lower-edge) gain
and the grid state, so every policy evaluated here is achievable on the real
channel with no more power and at least the same success events.  The
result is therefore a lower bound on the continuous optimum, and nested
grids (doubling ``grid``) can only improve it.

For fixed rate, power price ``lam`` and slot price ``kappa`` the stage
problem ``max R*S - lam*C - kappa*T`` is solved by backward induction.
``kappa`` is set by Dinkelbach iterations, ``lam`` by bisection on the
power constraint, and the two bracketing policies are time-shared so the
budget holds with equality.  The rate is found by a scalar search.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DomainError, UnsupportedError
from .fading import FadingModel, rayleigh_model
from .outage import outage_full_csi
from .protocol import ProtocolKind
from .search import maximize_scalar

__all__ = ["DPResult", "dp_full_csi_throughput", "dp_fixed_rate"]

MAX_SLOTS = 3


@dataclass
class DPResult:
    eta: float
    rate: float
    mean_power: float
    p_out: float
    mean_renewal: float
    grid: int
    status: str = "ok"
    refinement_delta: float | None = None


@dataclass
class _Policy:
    success: float
    slots: float
    cost: float


class _Grid:
    def __init__(self, kind: ProtocolKind, M: int, rate: float, n: int, model: FadingModel):
        self.kind, self.M, self.rate = kind, M, rate
        self.theta = math.expm1(rate)
        u = np.arange(n) / n
        self.gamma = np.asarray(model.ppf(u), dtype=float)
        self.gamma[0] = 0.0
        with np.errstate(divide="ignore"):
            self.inv_gamma = np.where(self.gamma > 0, 1.0 / np.where(self.gamma > 0, self.gamma, 1.0), np.inf)
        self.weight = 1.0 / n
        if kind is ProtocolKind.ALO or M == 1:
            self.x = np.zeros(1)
        else:
            g = self.theta if kind is ProtocolKind.RTD else rate
            self.x = g * np.arange(n) / n
        self.g = 0.0 if kind is ProtocolKind.ALO else (self.theta if kind is ProtocolKind.RTD else rate)

    def need(self) -> np.ndarray:
        """Power to decode from each state with each gain, shape ``(n_x, n_gamma)``."""
        if self.kind is ProtocolKind.INR:
            gap = np.expm1(self.g - self.x)
        elif self.kind is ProtocolKind.RTD:
            gap = self.g - self.x
        else:
            gap = np.full(1, self.theta)
        return gap[:, None] * self.inv_gamma[None, :]

    def move_cost(self, i: int) -> np.ndarray:
        """Power to go from state ``i`` to every state ``k >= i``, shape ``(n_gamma, n_x - i)``."""
        d = self.x[i:] - self.x[i]
        base = d if self.kind is ProtocolKind.RTD else np.expm1(d)
        with np.errstate(invalid="ignore"):
            c = self.inv_gamma[:, None] * base[None, :]
        c[:, 0] = 0.0
        return c


def _solve(grid: _Grid, lam: float, kappa: float):
    """Backward induction; returns per-stage actions (``-1`` decode, else target index)."""
    M, R = grid.M, grid.rate
    nx = len(grid.x)
    need = grid.need()
    decode_val = R - lam * need
    V_next = np.zeros(nx)
    actions = [None] * M
    for m in range(M - 1, -1, -1):
        states = range(nx) if m > 0 else range(1)
        V = np.full(nx, -np.inf)
        act = np.zeros((nx, len(grid.gamma)), dtype=np.int64)
        for i in states:
            if nx > 1 and m < M - 1:
                cont = V_next[i:][None, :] - lam * grid.move_cost(i)
                k = np.argmax(cont, axis=1)
                best_cont = cont[np.arange(len(k)), k]
                target = i + k
            else:
                best_cont = np.full(len(grid.gamma), V_next[i])
                target = np.full(len(grid.gamma), i)
            dv = decode_val[i]
            choose = dv > best_cont
            act[i] = np.where(choose, -1, target)
            V[i] = -kappa + grid.weight * float(np.sum(np.where(choose, dv, best_cont)))
        actions[m] = act
        V_next = V
    return actions


def _evaluate(grid: _Grid, actions) -> _Policy:
    nx = len(grid.x)
    dist = np.zeros(nx)
    dist[0] = 1.0
    need = grid.need()
    S = T = C = 0.0
    for m in range(grid.M):
        T += dist.sum()
        act = actions[m]
        w = np.repeat(dist[:, None] * grid.weight, len(grid.gamma), axis=1)
        dec = act < 0
        S += float(np.sum(w[dec]))
        C += float(np.sum(w[dec] * need[dec]))
        idx_i, idx_j = np.nonzero(~dec & (w > 0))
        if len(idx_i):
            tgt = act[idx_i, idx_j]
            d = grid.x[tgt] - grid.x[idx_i]
            base = d if grid.kind is ProtocolKind.RTD else np.expm1(d)
            moved = base > 0
            C += float(np.sum(w[idx_i, idx_j][moved] * base[moved] * grid.inv_gamma[idx_j][moved]))
            dist = np.bincount(tgt, weights=w[idx_i, idx_j], minlength=nx)
        else:
            dist = np.zeros(nx)
    return _Policy(S, T, C)


def _dinkelbach(grid: _Grid, lam: float, max_iter: int = 50) -> _Policy:
    kappa = 0.0
    pol = None
    for _ in range(max_iter):
        pol = _evaluate(grid, _solve(grid, lam, kappa))
        new = (grid.rate * pol.success - lam * pol.cost) / pol.slots
        if abs(new - kappa) <= 1e-13 * max(1.0, abs(new)):
            return pol
        kappa = new
    return pol


def dp_fixed_rate(kind, M: int, p_avg: float, rate: float, grid: int = 512,
                  model: FadingModel | None = None) -> tuple[float, _Policy]:
    """Best discretized policy at a fixed rate; returns ``(eta, policy mix)``."""
    kind = ProtocolKind.parse(kind)
    model = model or rayleigh_model()
    g = _Grid(kind, M, rate, grid, model)
    lo, hi = math.log(1e-12), math.log(1e12)
    p_lo = _dinkelbach(g, math.exp(lo))
    p_hi = _dinkelbach(g, math.exp(hi))
    if p_hi.cost / p_hi.slots > p_avg:
        raise ConvergenceError("power price bracket too small")
    if p_lo.cost / p_lo.slots <= p_avg:
        return rate * p_lo.success / p_lo.slots, p_lo
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        pol = _dinkelbach(g, math.exp(mid))
        if pol.cost / pol.slots > p_avg:
            lo, p_lo = mid, pol
        else:
            hi, p_hi = mid, pol
        if hi - lo < 1e-10:
            break
    # randomize across renewals between the two neighbouring policies
    a_num = p_avg * p_hi.slots - p_hi.cost
    a_den = (p_lo.cost - p_avg * p_lo.slots) + a_num
    a = 0.0 if a_den <= 0 else a_num / a_den
    mix = _Policy(
        a * p_lo.success + (1 - a) * p_hi.success,
        a * p_lo.slots + (1 - a) * p_hi.slots,
        a * p_lo.cost + (1 - a) * p_hi.cost,
    )
    return rate * mix.success / mix.slots, mix


def dp_full_csi_throughput(
    kind,
    M: int,
    p_avg: float,
    rate: float | None = None,
    grid: int = 512,
    model: FadingModel | None = None,
    check_refinement: bool = False,
) -> DPResult:
    """Throughput lower bound of causal perfect-CSI power control over ``M`` slots.

    With ``rate=None`` the rate is optimized.  ``check_refinement`` also
    solves the half-size grid and flags the result when the two differ by
    more than 1%.
    """
    kind = ProtocolKind.parse(kind)
    model = model or rayleigh_model()
    if not (p_avg > 0 and math.isfinite(p_avg)):
        raise DomainError("average power must be positive and finite")
    if not 1 <= M <= MAX_SLOTS:
        raise UnsupportedError(f"the grid solver handles 1 <= M <= {MAX_SLOTS}")
    if grid < 8:
        raise DomainError("grid needs at least 8 levels")
    if rate is None:
        _, cutoff = outage_full_csi(p_avg, model)
        t0 = math.expm1(_full_rate(p_avg, cutoff, model))

        def obj(t):
            return dp_fixed_rate(kind, M, p_avg, math.log1p(t), grid, model)[0]

        theta, _ = maximize_scalar(obj, t0 * math.exp(-3.0), t0 * math.exp(4.0), n_scan=28, log=True, xtol=1e-7)
        rate = math.log1p(theta)
    eta, pol = dp_fixed_rate(kind, M, p_avg, rate, grid, model)
    res = DPResult(eta, rate, pol.cost / pol.slots, 1.0 - pol.success, pol.slots, grid)
    if check_refinement:
        coarse = dp_full_csi_throughput(kind, M, p_avg, rate, grid // 2, model).eta
        res.refinement_delta = eta - coarse
        if abs(res.refinement_delta) > 0.01 * max(eta, 1e-300):
            res.status = "coarse"
    return res


def _full_rate(p_avg: float, cutoff: float, model: FadingModel) -> float:
    return math.log1p(p_avg / model.tail_inverse_mean(cutoff))
