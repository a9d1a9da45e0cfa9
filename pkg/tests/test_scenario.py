import math

import numpy as np
import pytest
from scipy.spatial import cKDTree

from cbrscoex.scenario import (
    SQRT3,
    Boresight,
    BoresightMode,
    CbsdParams,
    CoverageBudget,
    DeploymentRule,
    InfeasibleGeometryError,
    Region,
    Scenario,
    budget_for_radius,
    cbsd_link_loss_db,
    coverage_radius,
    default_coverage_budget,
    deployment_csv,
    density_for_radius,
    generate_deployment,
    hex_cell_area_km2,
    min_site_distance_m,
    radar_link_loss_db,
    resolved_spacing_m,
    sectorize,
    unit_disc_offsets,
)


def test_min_site_distance_golden():
    # free-space distance at which 30 dBm arrives at -62 dBm: 263.820377927 m
    d = min_site_distance_m(CbsdParams(), 3600.0)
    assert d == pytest.approx(263.820377927, rel=1e-8)
    assert 30.0 - cbsd_link_loss_db(3600.0, d, 30.0) < -62.0


def test_tightest_pitch_keeps_jittered_sites_apart():
    sc = Scenario(rule=DeploymentRule(site_spacing_m=None))
    d_min = min_site_distance_m(sc.cbsd_params, 3600.0)
    assert resolved_spacing_m(sc) == pytest.approx(d_min / 0.5)
    with pytest.raises(ValueError):
        resolved_spacing_m(Scenario(rule=DeploymentRule(site_spacing_m=400.0)))


@pytest.mark.parametrize("spacing", [None, 700.0])
def test_pairwise_cbsd_limit_holds(spacing):
    sc = generate_deployment(
        Scenario(region=Region(30, 45), rule=DeploymentRule(site_spacing_m=spacing)), seed=3
    )
    xy = np.column_stack([[c.x_m for c in sc.cbsds], [c.y_m for c in sc.cbsds]])
    dist, _ = cKDTree(xy).query(xy, k=2)
    nearest = dist[:, 1]
    worst = 30.0 - cbsd_link_loss_db(3600.0, nearest.min(), 30.0)
    assert worst <= -62.0


def test_deployment_inside_region_and_deterministic(deployment30):
    sc = deployment30
    assert sc.size > 10_000
    assert np.all(sc.ranges_km >= 30.0) and np.all(sc.ranges_km <= 100.0)
    assert np.all(np.abs(sc.azimuths_deg) <= 60.0)
    assert np.all(sc.powers_dbm == 30.0)
    again = generate_deployment(Scenario(region=Region(30.0)), seed=0)
    assert deployment_csv(again) == deployment_csv(sc)
    other = generate_deployment(Scenario(region=Region(30.0)), seed=1)
    assert deployment_csv(other) != deployment_csv(sc)


def test_site_count_matches_density(deployment30):
    spacing = resolved_spacing_m(deployment30)
    expected = deployment30.region.area_km2 / (SQRT3 / 2 * (spacing / 1e3) ** 2)
    assert deployment30.size == pytest.approx(expected, rel=0.01)


def test_degenerate_regions():
    empty = generate_deployment(Scenario(region=Region(50, 50)), seed=0)
    assert empty.size == 0
    with pytest.raises(InfeasibleGeometryError):
        generate_deployment(Scenario(region=Region(30, 30.0001, angular_extent_deg=0.001)), seed=0)


def test_full_annulus_when_not_land_only():
    sc = generate_deployment(Scenario(region=Region(30, 40, land_only=False)), seed=0)
    assert sc.azimuths_deg.min() < -170 and sc.azimuths_deg.max() > 170


def test_boresight_modes():
    assert Scenario(region=Region(axis_azimuth_deg=25)).boresight_azimuth_deg() == 25
    fixed = Scenario(boresight=Boresight(BoresightMode.FIXED, 12.0))
    assert fixed.boresight_azimuth_deg() == 12.0
    rnd = Scenario(boresight=Boresight("random"))
    with pytest.raises(ValueError):
        rnd.boresight_azimuth_deg()
    a = rnd.boresight_azimuth_deg(np.random.default_rng(1))
    assert -180 <= a < 180


def test_sectorize_partitions(deployment30):
    sc = sectorize(deployment30, 7)
    ids = [i for s in sc.sectors for i in s.member_ids]
    assert sorted(ids) == sorted(sc.ids.tolist())
    for s in sc.sectors:
        near, far = s.range_interval_km
        r = sc.ranges_km[np.isin(sc.ids, s.member_ids)]
        assert np.all(r >= near)
        assert np.all(r < far) or s.index == 6
        assert s.representative_loss_db == pytest.approx(float(radar_link_loss_db(sc, s.midpoint_km)))
    assert sc.sectors[0].range_interval_km[0] == 30.0 and sc.sectors[-1].range_interval_km[1] == 100.0
    with pytest.raises(ValueError):
        sectorize(deployment30, 0)


def test_coverage_budget_roundtrip():
    params = CbsdParams()
    for radius in (0.05, 0.3, 0.8, 2.5):
        budget = budget_for_radius(radius, 30.0, params)
        assert coverage_radius(30.0, params, budget) == pytest.approx(radius, rel=1e-9)


def test_default_budget_tiles_lattice():
    sc = Scenario()
    budget = default_coverage_budget(sc)
    r = coverage_radius(30.0, sc.cbsd_params, budget)
    assert r == pytest.approx(0.7 / math.sqrt(3), rel=1e-9)
    # hexagonal cell of that radius has the lattice's per-site area
    assert hex_cell_area_km2(r) == pytest.approx(SQRT3 / 2 * 0.7**2, rel=1e-9)
    assert density_for_radius(r) * hex_cell_area_km2(r) == pytest.approx(1.0)
    assert coverage_radius(20.0, sc.cbsd_params, budget) < r


def test_coverage_radius_floor():
    b = CoverageBudget(edge_signal_dbm=0.0, min_radius_km=0.02)
    assert coverage_radius(20.0, CbsdParams(), b) == 0.02


def test_unit_disc_uniform():
    x, y = unit_disc_offsets(np.random.default_rng(0), 100_000)
    r2 = x**2 + y**2
    assert x.size == 100_000 and np.all(r2 < 1)
    # P[r < 0.5] = 0.25 for a uniform disc
    assert np.mean(r2 < 0.25) == pytest.approx(0.25, abs=0.005)


def test_with_powers_and_csv(deployment30):
    small = Scenario(cbsds=deployment30.cbsds[:3])
    changed = small.with_powers([21, 22, 23])
    assert changed.powers_dbm.tolist() == [21, 22, 23]
    assert deployment_csv(changed).splitlines()[0] == "id,x_m,y_m,range_km,azimuth_deg,power_dbm"
    with pytest.raises(ValueError):
        small.with_powers([1, 2])
