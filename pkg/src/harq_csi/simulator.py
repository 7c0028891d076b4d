"""Slot-level Monte Carlo of the closed-loop protocols with renewal-reward tallies.

Renewals are split into shards.  Shard ``i`` draws from a Philox stream
seeded by ``SeedSequence(seed, spawn_key=(i,))``, so any shard can be
reproduced on its own and merging is an ordered reduction.  Standard errors
of the ratio estimators come from a leave-one-shard-out jackknife.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .fading import FadingModel, rayleigh_model
from .protocol import ProtocolKind, ThresholdPlan, xi_update

__all__ = ["RenewalStats", "simulate", "simulate_shard", "merge", "empirical_ptilde", "shard_rng"]

DEFAULT_SHARDS = 32
_DECODE_RTOL = 1e-12
_FIELDS = ("renewals", "reward", "cost", "slots", "outages")


@dataclass
class RenewalStats:
    """Per-shard tallies; ``shards[i] = (renewals, reward, cost, slots, outages)``."""

    shards: np.ndarray
    rate: float
    event_counts: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_renewals(self) -> int:
        return int(self.shards[:, 0].sum())

    @property
    def total_reward(self) -> float:
        return float(self.shards[:, 1].sum())

    @property
    def total_cost(self) -> float:
        return float(self.shards[:, 2].sum())

    @property
    def total_slots(self) -> int:
        return int(self.shards[:, 3].sum())

    @property
    def eta(self) -> float:
        return self.total_reward / self.total_slots

    @property
    def mean_power(self) -> float:
        return self.total_cost / self.total_slots

    @property
    def p_out(self) -> float:
        return float(self.shards[:, 4].sum()) / self.n_renewals

    @property
    def mean_renewal(self) -> float:
        return self.total_slots / self.n_renewals

    def _jackknife(self, num: int, den: int) -> float:
        k = self.shards.shape[0]
        if k < 2:
            return math.nan
        a, b = self.shards[:, num], self.shards[:, den]
        loo = (a.sum() - a) / (b.sum() - b)
        return float(math.sqrt((k - 1) / k * np.sum((loo - loo.mean()) ** 2)))

    @property
    def se_eta(self) -> float:
        return self._jackknife(1, 3)

    @property
    def se_power(self) -> float:
        return self._jackknife(2, 3)


def shard_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(index,))))


def _split(n: int, shards: int) -> list[int]:
    k = max(1, min(shards, n))
    base, extra = divmod(n, k)
    return [base + (i < extra) for i in range(k)]


def _decodes(kind: ProtocolKind, acc: np.ndarray, rate: float, theta: float) -> np.ndarray:
    # relative slack absorbs rounding when a level is designed to hit the target exactly
    if kind is ProtocolKind.INR:
        return acc >= rate * (1.0 - _DECODE_RTOL)
    return acc >= theta * (1.0 - _DECODE_RTOL)


def _accumulate(kind: ProtocolKind, acc: np.ndarray, snr: np.ndarray) -> np.ndarray:
    if kind is ProtocolKind.ALO:
        return np.maximum(acc, snr)
    if kind is ProtocolKind.RTD:
        return acc + snr
    return acc + np.log1p(snr)


def simulate_shard(kind, plan: ThresholdPlan, n: int, rng: np.random.Generator,
                   model: FadingModel | None = None):
    """Run ``n`` renewals; returns ``(tallies, event_counts)``.

    ``event_counts[m, f]`` counts renewals whose first ``m`` symbols were zero
    and whose next symbol is at most ``f``.  Every column of the last row
    counts renewals that fail all slots.
    """
    kind = ProtocolKind.parse(kind)
    model = model or rayleigh_model()
    M, F = plan.M, plan.F
    rate = plan.rate
    theta = math.expm1(rate)
    gamma = model.sample(rng.random((n, M)))
    taus = plan.taus
    inner = plan.interior
    with np.errstate(divide="ignore"):
        p_tau = np.where(np.isinf(taus), 0.0, theta / taus)
        p_lvl = np.where(np.isinf(inner), 0.0, theta / np.where(inner > 0, inner, np.nan))

    acc = np.zeros(n)
    xi = np.ones(n)
    alive = np.ones(n, dtype=bool)
    slots = np.zeros(n, dtype=np.int64)
    cost = np.zeros(n)
    counts = np.zeros((M + 1, F), dtype=np.int64)
    classical = plan.classical and M > 1

    for m in range(M):
        g = gamma[:, m]
        with np.errstate(divide="ignore", invalid="ignore"):
            y = np.where(xi > 0, g / np.where(xi > 0, xi, 1.0), np.inf)
        B = np.where(xi > 0, np.searchsorted(inner[m], y, side="right"), F - 1) if F > 1 else np.zeros(n, np.int64)
        for f in range(F):
            counts[m, f] = np.count_nonzero(alive & (B <= f))
        if classical:
            power = np.full(n, p_tau[m])
        else:
            power = np.where(B > 0, p_lvl[m][np.maximum(B - 1, 0)] if F > 1 else 0.0, p_tau[m])
            if np.any(alive & (B > 0) & np.isnan(power)):
                raise DomainError("a zero threshold would need infinite power")
        power = np.where(alive, power, 0.0)
        cost += power
        slots += alive
        acc = np.where(alive, _accumulate(kind, acc, g * power), acc)
        done = _decodes(kind, acc, rate, theta)
        x = np.where(np.isinf(taus[m]), 0.0, g / taus[m])
        xi = np.where(alive & (B == 0), xi_update(kind, xi, x, theta), xi)
        if classical:
            alive = alive & ~done
        else:
            alive = alive & (B == 0)
    # renewals still waiting after M zero symbols are exactly the failures
    success = _decodes(kind, acc, rate, theta)
    # the last row holds the outage count in every column
    if classical:
        counts[M, :] = np.count_nonzero(alive)
    else:
        counts[M, :] = np.count_nonzero(alive & (xi > 0))
    tallies = np.array([n, rate * np.count_nonzero(success), cost.sum(), slots.sum(),
                        np.count_nonzero(~success)], dtype=float)
    return tallies, counts


def simulate(kind, plan: ThresholdPlan, n_renewals: int, seed: int = 0,
             model: FadingModel | None = None, shards: int = DEFAULT_SHARDS) -> RenewalStats:
    """Simulate ``n_renewals`` packets; bit-identical for identical arguments."""
    if plan.rate is None:
        raise DomainError("plan needs a rate to be simulated")
    if n_renewals < 1:
        raise DomainError("need at least one renewal")
    rows, counts = [], None
    for i, n in enumerate(_split(int(n_renewals), shards)):
        t, c = simulate_shard(kind, plan, n, shard_rng(seed, i), model)
        rows.append(t)
        counts = c if counts is None else counts + c
    return RenewalStats(np.vstack(rows), plan.rate, counts)


def merge(parts: list[RenewalStats]) -> RenewalStats:
    """Concatenate shard tallies of runs with the same plan."""
    if not parts:
        raise DomainError("nothing to merge")
    counts = None
    if all(p.event_counts is not None for p in parts):
        counts = sum(p.event_counts for p in parts)
    return RenewalStats(np.vstack([p.shards for p in parts]), parts[0].rate, counts)


def _classical_counts(base: np.ndarray) -> np.ndarray:
    from .protocol import _classical_table

    return _classical_table(base)


def empirical_ptilde(kind, plan: ThresholdPlan, n_renewals: int, seed: int = 0,
                     model: FadingModel | None = None, raw_indexing: bool = False):
    """Monte Carlo event probabilities in the layout of ``ptilde_table``.

    Returns ``(table, standard_errors)`` with binomial standard errors.
    ``raw_indexing`` skips the classical-plan conversion and keeps the
    per-slot failure layout.
    """
    if plan.rate is None:
        plan = plan.with_rate(1.0)
    stats = simulate(kind, plan, n_renewals, seed, model)
    n = stats.n_renewals
    counts = stats.event_counts.astype(float)
    if plan.classical and plan.M > 1:
        # the shard loop stops at the acknowledgement, so rebuild the
        # feedback-chain layout before re-indexing
        M = plan.M
        fail = np.concatenate(([n], counts[1:M, 0], [counts[M, 0]]))
        base = np.empty_like(counts)
        base[:, 0] = fail
        base[:, 1:] = np.concatenate(([n], fail[:-2], [fail[-1]]))[:, None]
        counts = base if raw_indexing else _classical_counts(base / n) * n
    table = counts / n
    se = np.sqrt(table * (1.0 - table) / n)
    return table, se
