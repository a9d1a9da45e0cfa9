"""Invariants checked over randomly drawn inputs."""

import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from cbrscoex.antenna import RadarAntenna, gain_at
from cbrscoex.interference import (
    aggregate_interference_dbm,
    analytic_sinr_cdf,
    power_sum_dbm,
)
from cbrscoex.power_control import allocate_method1, allocate_method2
from cbrscoex.propagation import median_loss_db
from cbrscoex.scenario import Cbsd, Region, Scenario, sectorize

ANT = RadarAntenna()

distance = st.floats(0.05, 150.0)
angle = st.floats(-720.0, 720.0)
power = st.floats(20.0, 30.0)


@st.composite
def deployments(draw, min_size=1, max_size=25):
    n = draw(st.integers(min_size, max_size))
    cbsds = []
    for i in range(n):
        r = draw(st.floats(20.0, 100.0))
        az = draw(st.floats(-60.0, 60.0))
        p = draw(power)
        t = math.radians(az)
        cbsds.append(Cbsd(i, r * 1e3 * math.sin(t), r * 1e3 * math.cos(t), r, az, p))
    return Scenario(region=Region(20.0), cbsds=tuple(cbsds))


@given(distance, distance, st.floats(11.0, 200.0))
def test_loss_monotone_in_distance(a, b, hb):
    lo, hi = sorted((a, b))
    assert median_loss_db(3600.0, lo, hb, 8.0) <= median_loss_db(3600.0, hi, hb, 8.0) + 1e-9


@given(angle)
def test_gain_symmetric_bounded_periodic(phi):
    g = gain_at(ANT, phi)
    assert ANT.sidelobe_level_dbi <= g <= ANT.peak_gain_dbi
    assert g == pytest.approx(gain_at(ANT, -phi), abs=1e-9)
    assert g == pytest.approx(gain_at(ANT, phi + 360.0), abs=1e-9)


@given(st.floats(0.0, 0.4), st.floats(0.0, 0.4))
def test_gain_decreases_in_main_lobe(a, b):
    lo, hi = sorted((a, b))
    assert gain_at(ANT, hi) <= gain_at(ANT, lo) + 1e-9


@given(deployments(), st.randoms(use_true_random=False))
def test_aggregate_permutation_invariant(sc, rnd):
    order = list(sc.cbsds)
    rnd.shuffle(order)
    shuffled = replace(sc, cbsds=tuple(order))
    assert aggregate_interference_dbm(shuffled) == pytest.approx(aggregate_interference_dbm(sc), abs=1e-9)


@given(deployments(), st.floats(-10.0, 10.0))
def test_aggregate_shifts_with_uniform_power(sc, delta):
    base = aggregate_interference_dbm(sc)
    lifted = aggregate_interference_dbm(sc.with_powers(sc.powers_dbm + delta))
    assert lifted == pytest.approx(base + delta, abs=1e-9)


@given(deployments(min_size=2), st.data())
def test_aggregate_is_power_sum_of_parts(sc, data):
    k = data.draw(st.integers(1, sc.size - 1))
    a = aggregate_interference_dbm(replace(sc, cbsds=sc.cbsds[:k]))
    b = aggregate_interference_dbm(replace(sc, cbsds=sc.cbsds[k:]))
    assert aggregate_interference_dbm(sc) == pytest.approx(power_sum_dbm([a, b]), abs=1e-9)
    assert aggregate_interference_dbm(sc) >= max(a, b)


@given(deployments(max_size=8), st.floats(20e3, 150e3), st.floats(0.0, 12.0))
def test_analytic_cdf_monotone_bounded(sc, target, sigma):
    sc = replace(sc, shadowing=replace(sc.shadowing, sigma_db=sigma))
    d = analytic_sinr_cdf(sc, target)
    assert np.all(np.diff(d.cdf_values) >= 0)
    assert np.all((d.cdf_values >= 0) & (d.cdf_values <= 1))
    assert 0.0 <= d.compliance_probability <= 1.0


@given(deployments(max_size=15), st.floats(-135.0, -100.0))
def test_method1_invariants(sc, i_th):
    a = allocate_method1(sc, i_th)
    p = a.per_cbsd_power_dbm
    if a.feasible:
        assert a.achieved_i_agg_dbm <= i_th + 1e-9
        assert np.all((p >= 20.0) & (p <= 30.0))
        far = np.argsort(-sc.ranges_km, kind="stable")
        # farther CBSDs never end up below nearer ones
        assert np.all(np.diff(p[far]) <= 0)
    else:
        assert np.array_equal(p, sc.powers_dbm)


@given(deployments(max_size=15), st.floats(-135.0, -100.0), st.integers(1, 6))
def test_method2_invariants(sc, i_th, k):
    sc = sectorize(sc, k)
    a = allocate_method2(sc, i_th)
    if a.feasible:
        assert a.achieved_i_agg_dbm <= i_th + 1e-9
        assert np.all(np.diff(a.per_sector_power_dbm) >= 0)
        assert np.all((a.per_cbsd_power_dbm >= 20.0) & (a.per_cbsd_power_dbm <= 30.0))


@given(deployments(max_size=10), st.floats(-135.0, -100.0), st.floats(1.0, 10.0))
def test_looser_threshold_never_lowers_powers(sc, i_th, slack):
    tight = allocate_method1(sc, i_th)
    loose = allocate_method1(sc, i_th + slack)
    assume(tight.feasible)
    assert loose.feasible
    assert np.all(loose.per_cbsd_power_dbm >= tight.per_cbsd_power_dbm)
