import math

import numpy as np
import pytest

from harq_csi.ergodic import ergodic_full_csi
from harq_csi.errors import DomainError
from harq_csi.fading import e1
from harq_csi.outage import (
    OutageQuantizer,
    outage_bound_pair,
    outage_full_csi,
    outage_geometric_ladder,
    outage_no_csi,
    outage_one_bit,
    outage_one_bit_two_variable,
    outage_partial_csi,
)

GRID = np.linspace(1e-9, 20.0, 100_001)


def db(x):
    return 10 ** (x / 10)


def test_no_csi_dense_grid():
    eta, s = outage_no_csi(1.0)
    ref = np.max(np.log1p(GRID) * np.exp(-GRID))
    assert eta == pytest.approx(ref, abs=1e-6)
    assert eta >= ref - 1e-12


def test_no_csi_low_snr_expansion():
    p = 1e-5
    eta, s = outage_no_csi(p)
    assert s == pytest.approx(1.0, abs=1e-3)
    assert eta / (p * s * math.exp(-s)) == pytest.approx(1.0, rel=1e-4)


def test_full_csi_dense_grid():
    eta, cutoff = outage_full_csi(1.0)
    ref = np.max(np.exp(-GRID) * np.log1p(1.0 / e1(GRID)))
    assert eta == pytest.approx(ref, abs=1e-6)


def test_domain_errors():
    for f in (outage_no_csi, outage_one_bit, outage_full_csi):
        with pytest.raises(DomainError):
            f(0.0)
    with pytest.raises(DomainError):
        outage_partial_csi(1.0, 1)
    with pytest.raises(DomainError):
        outage_bound_pair(1.0, 1)
    with pytest.raises(DomainError):
        outage_geometric_ladder(1.0, 0)


@pytest.mark.parametrize("snr", [-25, -10, 0, 5, 10, 25])
def test_ordering_across_csi(snr):
    p = db(snr)
    no, _ = outage_no_csi(p)
    one, _ = outage_one_bit(p)
    full, _ = outage_full_csi(p)
    wf, _ = ergodic_full_csi(p)
    assert no < one <= full <= wf


def test_one_bit_reduced_form():
    p = db(0)
    eta, s = outage_one_bit(p)
    assert eta == pytest.approx(math.exp(-s) * math.log1p(p * s * math.exp(s)), rel=1e-14)


@pytest.mark.parametrize("snr", [-10, 0])
def test_two_levels_collapse_to_one_bit(snr):
    p = db(snr)
    eta, s1 = outage_one_bit(p)
    eta2, s1b, _ = outage_one_bit_two_variable(p)
    assert eta2 == pytest.approx(eta, rel=1e-6)
    assert s1b == pytest.approx(s1, rel=1e-3)


def test_two_levels_never_below_one_bit():
    # the free wrap threshold can only help; at high SNR it helps visibly
    p = db(25)
    eta, _ = outage_one_bit(p)
    eta2, _, s0 = outage_one_bit_two_variable(p)
    assert eta2 >= eta
    assert math.isfinite(s0)


@pytest.mark.parametrize("F", [2, 3, 5])
def test_partial_quantizer_invariants(F):
    p = db(-5)
    eta, q = outage_partial_csi(p, F)
    s = q.thresholds
    assert len(s) == F - 1
    assert np.all(np.diff(s) >= 0) and s[-1] <= q.wrap
    assert q.average_power() == pytest.approx(p, rel=1e-6)
    assert q.outage_probability() == pytest.approx(1 - math.exp(-s[0]), rel=1e-14)
    np.testing.assert_allclose(q.powers[1:], q.theta / s, rtol=1e-15)
    assert q.region_masses().sum() == pytest.approx(1.0)
    assert eta == pytest.approx(q.throughput())


def test_quantizer_hand_example():
    q = OutageQuantizer(np.array([0.5, 1.0]), 2.0, math.log(3.0))
    masses = q.region_masses()
    assert masses[0] == pytest.approx(1 - math.exp(-0.5) + math.exp(-2.0))
    assert masses[1] == pytest.approx(math.exp(-0.5) - math.exp(-1.0))
    assert masses[2] == pytest.approx(math.exp(-1.0) - math.exp(-2.0))
    np.testing.assert_allclose(q.powers, [1.0, 4.0, 2.0])
    assert q.throughput() == pytest.approx(math.log(3.0) * math.exp(-0.5))


def test_non_decreasing_in_levels():
    p = db(-10)
    etas = [outage_no_csi(p)[0]] + [outage_partial_csi(p, F)[0] for F in (2, 4, 8, 16)]
    assert np.all(np.diff(etas) >= -1e-12)
    assert etas[-1] <= outage_full_csi(p)[0]


@pytest.mark.slow
def test_many_levels_approach_inversion():
    full, _ = outage_full_csi(1.0)
    gaps = [1 - outage_partial_csi(1.0, F)[0] / full for F in (8, 16, 32)]
    # the left-edge charge of each cell costs O(1/F), so the gap roughly halves
    assert all(g > 0 for g in gaps)
    assert 0.4 < gaps[1] / gaps[0] < 0.6
    assert 0.4 < gaps[2] / gaps[1] < 0.6
    assert gaps[2] < 0.015


def test_union_beats_intervals():
    p = db(-10)
    union, _ = outage_partial_csi(p, 3)
    intervals, q = outage_partial_csi(p, 3, intervals_only=True)
    assert q.wrap == math.inf
    assert union >= intervals


def test_bound_pair_sandwich():
    lower, upper, s = outage_bound_pair(1.0, 3)
    eta, _ = outage_partial_csi(1.0, 3)
    assert lower <= eta <= upper
    assert len(s) == 3


def test_geometric_ladder_close_to_free_search():
    p = db(-10)
    ladder, s1, xi = outage_geometric_ladder(p, 4)
    _, free, _ = outage_bound_pair(p, 4)
    assert xi >= 1.0
    assert ladder <= free + 1e-12
    assert ladder / free > 0.98
