import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from harq_csi.errors import DomainError, UnsupportedError
from harq_csi.orderstats import pm_alo, pm_inr_quadrature, pm_rtd
from harq_csi.outage import outage_one_bit
from harq_csi.protocol import (
    ProtocolKind,
    ThresholdPlan,
    analytic_throughput,
    classical_plan,
    decoded,
    feedback,
    plan_metrics,
    ptilde_table,
    scale_factor,
    xi_update,
)

KINDS = list(ProtocolKind)
E = math.e


def random_plan(rng, M=2, F=2, rate=None):
    tau = rng.uniform(0.3, 3.0, M)
    s = np.sort(rng.uniform(0.2, 3.0, (M, F - 1)), axis=1)
    return ThresholdPlan(M, F, tau, s, rate)


def test_plan_validation():
    with pytest.raises(DomainError):
        ThresholdPlan(2, 1, (1.0, 1.0), ())
    with pytest.raises(DomainError):
        ThresholdPlan(1, 3, (1.0,), (2.0, 1.0))
    with pytest.raises(DomainError):
        ThresholdPlan(1, 2, (-1.0,), (1.0,))
    with pytest.raises(DomainError):
        ThresholdPlan(1, 2, (1.0,), (0.0, 1.0, 5.0))
    with pytest.raises(DomainError):
        ThresholdPlan(1, 2, (1.0,), (1.0,), rate=-0.1)
    full = ThresholdPlan(1, 2, (1.0,), (0.0, 1.5, np.inf))
    assert full.s == ((1.5,),)
    assert full.edges.tolist() == [[0.0, 1.5, np.inf]]
    assert classical_plan(3, (1, 2, 3)).classical
    assert not full.classical


def test_kind_parse():
    assert ProtocolKind.parse("inr") is ProtocolKind.INR
    assert ProtocolKind.parse(ProtocolKind.ALO) is ProtocolKind.ALO
    with pytest.raises(DomainError):
        ProtocolKind.parse("chase")


def test_scale_factor_examples():
    for k in KINDS:
        assert scale_factor(k, [], 1.0) == 1.0
    assert scale_factor("rtd", [(0.4, 1.0)], 1.0) == pytest.approx(0.6)
    theta = E - 1
    want = ((1 + theta) / (1 + 0.4 * theta) - 1) / theta
    assert scale_factor("inr", [(0.8, 2.0)], 1.0) == pytest.approx(want, rel=1e-14)
    assert scale_factor("alo", [(0.4, 1.0)], 1.0) == 1.0
    assert scale_factor("alo", [(1.5, 1.0)], 1.0) == 0.0


def test_inr_update_small_theta_is_rtd():
    assert xi_update("inr", 0.7, 0.2, 1e-14) == pytest.approx(0.5, rel=1e-12)


@pytest.mark.parametrize("kind", KINDS)
def test_scale_factor_is_the_decoding_boundary(kind):
    # with xi from the failed history, a slot at power theta/s decodes iff gamma/s >= xi
    rng = np.random.default_rng(7)
    rate = 0.9
    theta = math.expm1(rate)
    agree = 0
    for _ in range(10_000):
        m = rng.integers(0, 3)
        taus = rng.uniform(0.5, 4.0, m)
        gam = rng.exponential(size=m) * 0.6
        hist = list(zip(gam, taus))
        if any(decoded(kind, [g * theta / t], rate) for g, t in hist):
            continue
        if m and decoded(kind, gam * theta / taus, rate):
            continue
        xi = scale_factor(kind, hist, rate)
        s = rng.uniform(0.3, 3.0)
        g = rng.exponential()
        if abs(g / s - xi) < 1e-9:
            continue
        got = decoded(kind, list(gam * theta / taus) + [g * theta / s], rate)
        assert got == (g / s >= xi)
        agree += 1
    assert agree > 5000


def test_feedback_examples():
    plan = ThresholdPlan(2, 3, (1.0, 1.0), ((0.5, 1.0), (0.5, 1.0)), rate=1.0)
    assert feedback("rtd", plan, 1, 5.0, []) == 2
    assert feedback("rtd", plan, 1, 0.7, []) == 1
    assert feedback("rtd", plan, 1, 0.1, []) == 0
    # history that already decodes
    assert feedback("rtd", plan, 2, 0.0, [(1.5, 1.0)]) == 2
    with pytest.raises(DomainError):
        feedback("rtd", plan, 3, 1.0, [])


@pytest.mark.parametrize("kind", KINDS)
def test_nonzero_feedback_guarantees_decoding(kind):
    rng = np.random.default_rng(11)
    n, M, F = 100_000, 3, 4
    rate = 1.2
    theta = math.expm1(rate)
    tau = rng.uniform(0.3, 3.0, (n, M))
    s = np.sort(rng.uniform(0.1, 4.0, (n, M, F - 1)), axis=2)
    gam = rng.exponential(size=(n, M))
    xi = np.ones(n)
    snr = np.zeros((n, 0))
    alive = np.ones(n, bool)
    checked = 0
    for m in range(M):
        y = np.where(xi > 0, gam[:, m] / np.where(xi > 0, xi, 1.0), np.inf)
        B = np.where(xi > 0, (y[:, None] >= s[:, m, :]).sum(axis=1), F - 1)
        pos = alive & (B > 0) & (xi > 0)
        lvl = s[np.arange(n), m, np.maximum(B - 1, 0)]
        u = np.concatenate((snr, (gam[:, m] * theta / lvl)[:, None]), axis=1)
        if kind is ProtocolKind.ALO:
            ok = u.max(axis=1) >= theta * (1 - 1e-12)
        elif kind is ProtocolKind.RTD:
            ok = u.sum(axis=1) >= theta * (1 - 1e-12)
        else:
            ok = np.log1p(u).sum(axis=1) >= rate * (1 - 1e-12)
        assert np.all(ok[pos])
        checked += pos.sum()
        # continue the zero-feedback branch at the fallback level
        snr = np.concatenate((snr, (gam[:, m] * theta / tau[:, m])[:, None]), axis=1)
        xi = xi_update(kind, xi, gam[:, m] / tau[:, m], theta)
        alive &= B == 0
    assert checked > 50_000


@pytest.mark.parametrize("kind", KINDS)
def test_single_slot_table(kind):
    plan = ThresholdPlan(1, 3, (2.0,), (0.5, 1.5), rate=0.5)
    tab = ptilde_table(kind, plan)
    np.testing.assert_allclose(tab[0], [1 - math.exp(-0.5), 1 - math.exp(-1.5), 1.0], rtol=1e-13)


def test_two_slot_reference_values():
    plan = ThresholdPlan(2, 2, (1.0, 1.0), ((1.0,), (1.0,)), rate=1.0)
    assert ptilde_table("alo", plan)[1, 0] == pytest.approx((1 - 1 / E) ** 2, rel=1e-13)
    rtd = ptilde_table("rtd", plan)[1, 0]
    assert rtd == pytest.approx(1 - 2 / E, rel=1e-9)
    ref = integrate.dblquad(lambda g2, g1: math.exp(-g1 - g2), 0, 1, 0, lambda g1: 1 - g1)[0]
    assert rtd == pytest.approx(ref, rel=1e-9)


def test_inr_two_slot_quadrature():
    plan = ThresholdPlan(2, 2, (0.8, 1.3), ((1.1,), (0.9,)), rate=0.7)
    theta = math.expm1(0.7)
    # B_1 = 0 and the first slot fails: gamma_1 < min(tau_1, s_11); then gamma_2 < xi_2 * min(tau_2, s_21)
    c1, c2 = min(0.8, 1.1), min(1.3, 0.9)

    def inner(g1):
        xi = (1 - g1 / 0.8) / (1 + theta * g1 / 0.8)
        return (1 - math.exp(-xi * c2)) * math.exp(-g1)

    ref = integrate.quad(inner, 0, c1, epsabs=0, epsrel=1e-12)[0]
    tab = ptilde_table("inr", plan)
    assert tab[2, 0] == pytest.approx(ref, rel=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(KINDS), st.integers(1, 3), st.integers(2, 4))
def test_table_nesting(seed, kind, M, F):
    plan = random_plan(np.random.default_rng(seed), M, F, rate=0.8)
    tab = ptilde_table(kind, plan)
    assert np.all(np.diff(tab, axis=1) >= -1e-12)
    assert np.all(np.diff(tab[:, 0]) <= 1e-12)
    assert np.all((tab >= -1e-12) & (tab <= 1 + 1e-12))
    # the last column of row m repeats column 0 of row m-1; the outage row is flat
    np.testing.assert_allclose(tab[1:M, -1], tab[: M - 1, 0], atol=1e-12)
    np.testing.assert_allclose(tab[M], tab[M, 0], atol=1e-15)


@pytest.mark.parametrize("seed", range(5))
def test_tables_ordered_across_kinds(seed):
    plan = random_plan(np.random.default_rng(seed), 3, 3, rate=0.6)
    a, r, i = (ptilde_table(k, plan)[:, 0] for k in KINDS)
    assert np.all(i <= r + 1e-12) and np.all(r <= a + 1e-12)


def test_long_inr_needs_monte_carlo():
    plan = random_plan(np.random.default_rng(0), 4, 2, rate=0.5)
    with pytest.raises(UnsupportedError):
        ptilde_table("inr", plan)
    tab = ptilde_table("inr", plan, mc_renewals=20_000, seed=3)
    assert tab.shape == (5, 2)
    # ALO never needs the fallback
    assert ptilde_table("alo", plan).shape == (5, 2)


def test_classical_tables_match_order_statistics():
    taus = np.array([0.7, 1.2, 2.0])
    theta = 1.3
    plan = classical_plan(3, taus, rate=math.log1p(theta))
    for m in range(1, 4):
        assert ptilde_table("alo", plan)[m - 1, 0] == pytest.approx(pm_alo(taus[:m]), rel=1e-12)
        assert ptilde_table("rtd", plan)[m - 1, 0] == pytest.approx(pm_rtd(taus[:m]), rel=1e-9)
        assert ptilde_table("inr", plan)[m - 1, 0] == pytest.approx(pm_inr_quadrature(taus[:m], theta), rel=1e-8)
    assert ptilde_table("alo", plan)[3, 0] == ptilde_table("alo", plan)[2, 0]


def test_classical_alo_product():
    plan = classical_plan(2, (1.0, 1.0), rate=1.0)
    assert ptilde_table("alo", plan)[1, 0] == pytest.approx((1 - 1 / E) ** 2, rel=1e-14)


def test_classical_rtd_equal_power_is_erlang():
    tau = 1.7
    plan = classical_plan(3, (tau,) * 3, rate=1.0)
    tab = ptilde_table("rtd", plan)
    for m in (1, 2, 3):
        assert tab[m - 1, 0] == pytest.approx(stats.gamma.cdf(tau, m), rel=1e-9)


def test_classical_inr_bounds_bracket():
    rng = np.random.default_rng(5)
    for _ in range(20):
        taus = rng.uniform(0.3, 3.0, 2)
        theta = rng.uniform(0.1, 10.0)
        rep = plan_metrics("inr", classical_plan(2, taus, rate=math.log1p(theta)))
        lo, hi = rep.inr_bounds[1]
        assert lo <= rep.ptilde[1, 0] <= hi


def test_one_slot_matches_one_bit_outage():
    p = 10 ** 0.5
    eta, s1 = outage_one_bit(p)
    for k in KINDS:
        rep = analytic_throughput(k, ThresholdPlan(1, 2, (np.inf,), (s1,)), p)
        assert rep.eta == pytest.approx(eta, rel=1e-9)


@pytest.mark.parametrize("kind", KINDS)
def test_report_invariants(kind):
    rng = np.random.default_rng(2)
    for M, F in ((2, 2), (2, 3), (3, 2)):
        plan = random_plan(rng, M, F)
        p = 2.0
        rep = analytic_throughput(kind, plan, p)
        assert rep.mean_power == pytest.approx(p, rel=1e-6)
        assert rep.p_out == rep.ptilde[M, 0]
        assert 0 <= rep.p_out <= 1
        assert 1 <= rep.mean_renewal <= M
        assert 0 <= rep.eta <= rep.rate


def test_classical_and_quantized_paths_agree_on_report_fields():
    rep = analytic_throughput("alo", classical_plan(2, (0.8, 1.1)), 1.0)
    tau = np.array([0.8, 1.1])
    q1 = 1 - math.exp(-tau[0])
    theta = rep.plan.theta
    assert rep.mean_renewal == pytest.approx(1 + q1)
    assert rep.mean_power == pytest.approx(theta * (1 / tau[0] + q1 / tau[1]) / (1 + q1))
    assert rep.p_out == pytest.approx(q1 * (1 - math.exp(-tau[1])))


def test_zero_rate_gives_zero_throughput():
    plan = random_plan(np.random.default_rng(1), 2, 2)
    for k in KINDS:
        rep = plan_metrics(k, plan.with_rate(1e-12))
        assert rep.eta < 1e-11


def test_inr_rate_solve_with_hint():
    plan = random_plan(np.random.default_rng(4), 2, 2)
    a = analytic_throughput("inr", plan, 3.0)
    b = analytic_throughput("inr", plan, 3.0, theta_hint=a.plan.theta * 1.3)
    assert b.eta == pytest.approx(a.eta, rel=1e-10)
