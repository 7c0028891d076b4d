"""Threshold-plan search for the HARQ protocols and SNR sweeps.

A plan is encoded in log coordinates: ``log tau_m`` for every slot, then per
slot ``log s_{m,1}`` followed by the logs of the successive threshold gaps.
Ordering is therefore structural.  The rate is not searched: for a fixed
plan shape the power budget pins it (closed form for ALO/RTD, a scalar root
for INR).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ergodic import ergodic_full_csi
from .errors import DomainError
from .fading import FadingModel, rayleigh_model
from .outage import outage_no_csi, outage_one_bit_two_variable
from .protocol import ProtocolKind, ThresholdPlan, ThroughputReport, analytic_throughput, classical_plan
from .search import SearchSpec, maximize_scalar, multistart_maximize

__all__ = ["PlanCodec", "optimize_plan", "equal_power_classical", "sweep", "SweepRow", "db_to_power"]

_LOW, _HIGH = 30.0, 40.0


def db_to_power(snr_db: float) -> float:
    return 10.0 ** (snr_db / 10.0)


@dataclass(frozen=True)
class PlanCodec:
    """Maps between search vectors and plans for fixed ``(M, F)``."""

    M: int
    F: int
    classical: bool = False

    @property
    def dims(self) -> int:
        return self.M if self.classical else self.M * self.F

    def decode(self, z: np.ndarray) -> ThresholdPlan:
        M, F = self.M, self.F
        tau = np.exp(z[:M])
        if self.classical:
            s = np.full((M, F - 1), np.inf)
        else:
            s = np.cumsum(np.exp(np.asarray(z[M:]).reshape(M, F - 1)), axis=1)
        return ThresholdPlan(M, F, tau, s)

    def encode(self, plan: ThresholdPlan) -> np.ndarray:
        z = [np.log(plan.taus)]
        if not self.classical:
            s = plan.interior
            gaps = np.diff(np.hstack((np.zeros((self.M, 1)), s)), axis=1)
            z.append(np.log(np.maximum(gaps, 1e-300)).ravel())
        return np.concatenate(z)

    def bounds(self, ref: float) -> tuple[tuple[float, float], ...]:
        # thresholds live near the one-bit cutoff; tau may sit effectively at infinity
        return tuple((ref - _LOW, ref + _HIGH) for _ in range(self.dims))


def _reference(p_avg: float, model: FadingModel) -> tuple[float, float, float]:
    _, s1, s0 = outage_one_bit_two_variable(p_avg, model)
    return math.log(s1), math.log(min(s0, s1 * math.exp(_HIGH - 1))), s1


def equal_power_classical(kind, M: int, p_avg: float, model: FadingModel | None = None, **table_kw):
    """Best classical plan with one common ``tau`` for every slot."""
    model = model or rayleigh_model()
    _, tau0 = outage_no_csi(p_avg, model)

    def obj(t):
        return analytic_throughput(kind, classical_plan(M, [t] * M), p_avg, model, **table_kw).eta

    tau, _ = maximize_scalar(obj, tau0 * 1e-4, tau0 * 1e2, n_scan=96, log=True, xtol=1e-10)
    rep = analytic_throughput(kind, classical_plan(M, [tau] * M), p_avg, model, **table_kw)
    return rep.plan, rep


def _base_starts(kind: ProtocolKind, codec: PlanCodec, p_avg: float, model: FadingModel,
                 table_kw: dict) -> list[np.ndarray]:
    M, F = codec.M, codec.F
    r1, r0, s1 = _reference(p_avg, model)
    if codec.classical:
        plan, _ = equal_power_classical(kind, M, p_avg, model, **table_kw)
        z = np.log(plan.taus)
        return [z, z + np.linspace(0.3, -0.3, M)]
    ladder = np.log(s1) + np.log(np.geomspace(1.0, 4.0, F - 1)) if F > 2 else np.array([r1])
    gaps = np.log(np.diff(np.concatenate(([0.0], np.exp(ladder)))))
    starts = []
    for tau_shift in (r0, r1 + 2.0, r1, r1 + 0.7):
        starts.append(np.concatenate((np.full(M, tau_shift), np.tile(gaps, M))))
    return starts


def optimize_plan(
    kind,
    M: int,
    F: int,
    p_avg: float,
    spec: SearchSpec | None = None,
    model: FadingModel | None = None,
    classical: bool = False,
    init: np.ndarray | ThresholdPlan | None = None,
    **table_kw,
) -> tuple[ThresholdPlan, ThroughputReport]:
    """Maximize the analytic throughput over plans at average power ``p_avg``.

    ``init`` (a plan or a search vector) is tried before the built-in starts.
    Extra restarts are Gaussian jitters of the built-in starts drawn from
    ``spec.seed``, so a larger ``restarts`` searches a superset.  Keyword
    arguments go to the probability tables (e.g. ``mc_renewals``).
    """
    kind = ProtocolKind.parse(kind)
    model = model or rayleigh_model()
    if not (p_avg > 0 and math.isfinite(p_avg)):
        raise DomainError("average power must be positive and finite")
    if M >= 2 and F < 2:
        raise DomainError("retransmissions need at least one feedback bit")
    classical = classical or F == 1
    codec = PlanCodec(int(M), int(F), classical)
    ref = _reference(p_avg, model)[0]
    spec = spec or SearchSpec(restarts=4, tol=1e-11, max_evals=150 * codec.dims + 200)
    bounds = spec.bounds or codec.bounds(ref)

    base = _base_starts(kind, codec, p_avg, model, table_kw)
    starts = []
    if init is not None:
        starts.append(codec.encode(init) if isinstance(init, ThresholdPlan) else np.asarray(init, float))
    rng = np.random.default_rng(spec.seed)
    for i in range(spec.restarts):
        if i < len(base):
            starts.append(base[i])
        else:
            starts.append(base[i % len(base)] + rng.normal(0.0, 0.6, codec.dims))

    hint = [None]

    def obj(z):
        try:
            rep = analytic_throughput(kind, codec.decode(z), p_avg, model, theta_hint=hint[0], **table_kw)
        except DomainError:
            return -math.inf
        hint[0] = rep.plan.theta
        return rep.eta

    # unsupported combinations should fail loudly rather than look infeasible
    analytic_throughput(kind, codec.decode(starts[0]), p_avg, model, **table_kw)
    res = multistart_maximize(obj, starts, bounds=bounds, tol=spec.tol, max_evals=spec.max_evals)
    report = analytic_throughput(kind, codec.decode(res.x), p_avg, model, **table_kw)
    return report.plan, report


@dataclass
class SweepRow:
    snr_db: float
    eta: float
    ratio: float
    plan: ThresholdPlan
    report: ThroughputReport

    def summary(self) -> str:
        tau = ";".join(f"{t:.6g}" for t in self.plan.tau)
        s = ";".join(f"{v:.6g}" for row in self.plan.s for v in row)
        return f"tau={tau} s={s} rate={self.plan.rate:.6g}"


def sweep(
    kind,
    M: int,
    F: int,
    snr_grid_db,
    spec: SearchSpec | None = None,
    model: FadingModel | None = None,
    classical: bool = False,
    **table_kw,
) -> list[SweepRow]:
    """Optimize at each grid point, warm-starting from the previous optimum."""
    grid = [float(x) for x in np.atleast_1d(snr_grid_db)]
    if not grid:
        raise DomainError("empty SNR grid")
    model = model or rayleigh_model()
    rows: list[SweepRow] = []
    prev = None
    prev_ref = None
    for db in grid:
        p = db_to_power(db)
        init = None
        ref = _reference(p, model)[0]
        if prev is not None:
            codec = PlanCodec(M, F, classical or F == 1)
            # thresholds move with the one-bit cutoff, so shift the old optimum along
            init = codec.encode(prev) + (ref - prev_ref)
        plan, rep = optimize_plan(kind, M, F, p, spec, model, classical, init, **table_kw)
        wf, _ = ergodic_full_csi(p, model)
        rows.append(SweepRow(db, rep.eta, rep.eta / wf, plan, rep))
        prev, prev_ref = plan, ref
    return rows
