"""Greedy CBSD power allocation under the radar interference ceiling.

All allocators plan at median fading (F = 0 dB). They bootstrap every device
(or sector) at the minimum power, then raise powers farthest-first in fixed
steps. The sweep stops at the first increment that would push the median
aggregate above I_th, so nearer devices never end above farther ones.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .antenna import gain_at
from .interference import (
    ChannelMode,
    MissingFdrError,
    mw_to_dbm,
    monte_carlo_sinr_cdf,
    rejection_db,
)
from .radar import FdrProfile
from .scenario import (
    SQRT3,
    CoverageBudget,
    Scenario,
    coverage_radius,
    default_coverage_budget,
    hex_cell_area_km2,
    sector_edges_km,
    sector_index,
)

__all__ = [
    "Method",
    "PowerAllocation",
    "SectorPlan",
    "DensityPlan",
    "ComplianceReport",
    "allocate_method1",
    "allocate_method2",
    "allocate_with_density",
    "verify_allocation",
    "coverage_fraction",
    "MissingFdrError",
]


class Method(str, enum.Enum):
    PER_CBSD = "per_cbsd"
    PER_SECTOR = "per_sector"
    DENSITY_ADJUSTED = "density_adjusted"


@dataclass(frozen=True)
class PowerAllocation:
    method: Method
    per_cbsd_power_dbm: np.ndarray
    achieved_i_agg_dbm: float
    feasible: bool
    iterations: int
    i_th_dbm: float
    per_sector_power_dbm: np.ndarray | None = None
    # method 2 plans on representative losses; this is the per-device truth
    exact_i_agg_dbm: float | None = None

    def to_csv(self, scenario: Scenario) -> str:
        sectors = _member_sectors(scenario)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["id", "sector", "range_km", "power_dbm"])
        for cid, r, p in zip(scenario.ids, scenario.ranges_km, self.per_cbsd_power_dbm):
            s = sectors.get(int(cid), "")
            w.writerow([int(cid), s, f"{r:.6f}", f"{p:.3f}"])
        return buf.getvalue()

    def to_json(self, **meta) -> str:
        doc = dict(meta)
        doc.update(
            method=self.method.value,
            feasible=self.feasible,
            iterations=self.iterations,
            i_th_dbm=self.i_th_dbm,
            achieved_i_agg_dbm=_round_or_none(self.achieved_i_agg_dbm),
            exact_i_agg_dbm=_round_or_none(self.exact_i_agg_dbm),
            per_sector_power_dbm=None
            if self.per_sector_power_dbm is None
            else [round(float(p), 3) for p in self.per_sector_power_dbm],
            per_cbsd_power_dbm=[round(float(p), 3) for p in self.per_cbsd_power_dbm],
        )
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _round_or_none(x):
    if x is None:
        return None
    if math.isinf(x):
        return "-inf" if x < 0 else "inf"
    return round(float(x), 6)


def _member_sectors(scenario: Scenario) -> dict[int, int]:
    return {cid: s.index for s in scenario.sectors for cid in s.member_ids}


def _check_step(scenario: Scenario, power_step_db: float):
    if not power_step_db > 0:
        raise ValueError(f"power step must be positive, got {power_step_db!r}")
    p = scenario.cbsd_params
    if p.min_power_dbm > p.max_power_dbm:
        raise ValueError("minimum CBSD power exceeds the maximum")


def _next_power(p: float, step: float, p_max: float) -> float:
    return min(p + step, p_max)


def _sweep_order(scenario: Scenario) -> np.ndarray:
    # farthest first; ties by azimuth, then id
    return np.lexsort((scenario.ids, scenario.azimuths_deg, -scenario.ranges_km))


def allocate_method1(
    scenario: Scenario,
    i_th_dbm: float,
    power_step_db: float = 1.0,
    mode: ChannelMode | str = ChannelMode.CO_CHANNEL,
    fdr: FdrProfile | None = None,
    debug: bool = False,
) -> PowerAllocation:
    """Per-CBSD greedy allocation.

    If the bootstrap (everyone at P_min) already breaks ``i_th_dbm`` the
    result is infeasible and carries the scenario's powers untouched.
    """
    _check_step(scenario, power_step_db)
    p_min, p_max = scenario.cbsd_params.min_power_dbm, scenario.cbsd_params.max_power_dbm
    coupling = scenario.radar_gain_dbi - scenario.link_loss_db - rejection_db(mode, fdr)
    lin_coupling = 10.0 ** (coupling / 10.0)
    limit = 10.0 ** (i_th_dbm / 10.0) if math.isfinite(i_th_dbm) else math.inf

    powers = np.full(scenario.size, p_min)
    total = float(np.sum(lin_coupling * 10.0 ** (p_min / 10.0)))
    if total > limit:
        return PowerAllocation(
            Method.PER_CBSD,
            scenario.powers_dbm.copy(),
            mw_to_dbm(total),
            False,
            0,
            float(i_th_dbm),
        )

    iterations = 0
    blocked = False
    for m in _sweep_order(scenario):
        while powers[m] < p_max:
            p_new = _next_power(powers[m], power_step_db, p_max)
            delta = lin_coupling[m] * (10.0 ** (p_new / 10.0) - 10.0 ** (powers[m] / 10.0))
            if total + delta > limit:
                blocked = True
                break
            powers[m] = p_new
            total += delta
            iterations += 1
            if debug:
                exact = float(np.sum(lin_coupling * 10.0 ** (powers / 10.0)))
                assert math.isclose(total, exact, rel_tol=1e-9), (total, exact)
                assert exact <= limit * (1 + 1e-12)
        if blocked:
            break
    return PowerAllocation(Method.PER_CBSD, powers, mw_to_dbm(total), True, iterations, float(i_th_dbm))


def _sector_members(scenario: Scenario) -> tuple[np.ndarray, np.ndarray]:
    """Sector of each CBSD (by position in ``scenario.cbsds``) and per-sector losses."""
    if not scenario.sectors:
        raise ValueError("scenario has no sectors; call sectorize() first")
    which = np.full(scenario.size, -1)
    pos = {int(cid): i for i, cid in enumerate(scenario.ids)}
    for s in scenario.sectors:
        for cid in s.member_ids:
            which[pos[cid]] = s.index
    if np.any(which < 0):
        raise ValueError("some CBSDs belong to no sector; re-run sectorize()")
    losses = np.array([s.representative_loss_db for s in scenario.sectors])
    return which, losses


def allocate_method2(
    scenario: Scenario,
    i_th_dbm: float,
    power_step_db: float = 1.0,
    mode: ChannelMode | str = ChannelMode.CO_CHANNEL,
    fdr: FdrProfile | None = None,
) -> PowerAllocation:
    """Per-sector greedy allocation on each sector's representative loss."""
    _check_step(scenario, power_step_db)
    p_min, p_max = scenario.cbsd_params.min_power_dbm, scenario.cbsd_params.max_power_dbm
    which, losses = _sector_members(scenario)
    k = losses.size
    x = rejection_db(mode, fdr)
    gain_lin = 10.0 ** ((scenario.radar_gain_dbi - x) / 10.0)
    # sector coupling: sum of member gains over the shared loss
    coupling = np.bincount(which, weights=gain_lin, minlength=k) * 10.0 ** (-losses / 10.0)
    limit = 10.0 ** (i_th_dbm / 10.0) if math.isfinite(i_th_dbm) else math.inf

    sector_p = np.full(k, p_min)
    total = float(np.sum(coupling) * 10.0 ** (p_min / 10.0))
    if total > limit:
        return PowerAllocation(
            Method.PER_SECTOR,
            scenario.powers_dbm.copy(),
            mw_to_dbm(total),
            False,
            0,
            float(i_th_dbm),
        )

    iterations = 0
    blocked = False
    for s in range(k - 1, -1, -1):
        while sector_p[s] < p_max:
            p_new = _next_power(sector_p[s], power_step_db, p_max)
            delta = coupling[s] * (10.0 ** (p_new / 10.0) - 10.0 ** (sector_p[s] / 10.0))
            if total + delta > limit:
                blocked = True
                break
            sector_p[s] = p_new
            total += delta
            iterations += 1
        if blocked:
            break

    powers = sector_p[which] if scenario.size else np.empty(0)
    exact_terms = powers + scenario.radar_gain_dbi - scenario.link_loss_db - x
    exact = mw_to_dbm(float(np.sum(10.0 ** (exact_terms / 10.0))))
    return PowerAllocation(
        Method.PER_SECTOR,
        powers,
        mw_to_dbm(total),
        True,
        iterations,
        float(i_th_dbm),
        per_sector_power_dbm=sector_p,
        exact_i_agg_dbm=exact,
    )


# -- density-adjusted planning ---------------------------------------------------


@dataclass(frozen=True)
class SectorPlan:
    index: int
    range_interval_km: tuple[float, float]
    power_dbm: float
    density_per_km2: float
    cell_radius_km: float
    band_low_dbm: float | None
    band_high_dbm: float | None

    @property
    def restricted(self) -> bool:
        """True when the only admissible power is the plan's own minimum."""
        return self.band_high_dbm is None or self.band_high_dbm <= self.band_low_dbm


@dataclass(frozen=True)
class DensityPlan:
    sectors: tuple[SectorPlan, ...]
    achieved_i_agg_dbm: float
    feasible: bool
    iterations: int
    i_th_dbm: float
    budget: CoverageBudget
    power_steps_dbm: np.ndarray = field(repr=False)

    @property
    def restricted_until_km(self) -> float | None:
        """Far edge of the contiguous run of restricted sectors from R_min."""
        edge = None
        for s in self.sectors:
            if not s.restricted:
                break
            edge = s.range_interval_km[1]
        return edge

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(
            [
                "sector",
                "near_km",
                "far_km",
                "power_dbm",
                "density_per_km2",
                "cell_radius_km",
                "band_low_dbm",
                "band_high_dbm",
            ]
        )
        for s in self.sectors:
            w.writerow(
                [
                    s.index,
                    f"{s.range_interval_km[0]:.6f}",
                    f"{s.range_interval_km[1]:.6f}",
                    f"{s.power_dbm:.3f}",
                    f"{s.density_per_km2:.6f}",
                    f"{s.cell_radius_km:.6f}",
                    "" if s.band_low_dbm is None else f"{s.band_low_dbm:.3f}",
                    "" if s.band_high_dbm is None else f"{s.band_high_dbm:.3f}",
                ]
            )
        return buf.getvalue()

    def to_json(self, **meta) -> str:
        doc = dict(meta)
        doc.update(
            feasible=self.feasible,
            iterations=self.iterations,
            i_th_dbm=self.i_th_dbm,
            achieved_i_agg_dbm=_round_or_none(self.achieved_i_agg_dbm),
            restricted_until_km=self.restricted_until_km,
            edge_signal_dbm=round(self.budget.edge_signal_dbm, 6),
            sectors=[
                {
                    "sector": s.index,
                    "range_interval_km": [s.range_interval_km[0], s.range_interval_km[1]],
                    "power_dbm": round(s.power_dbm, 3),
                    "density_per_km2": round(s.density_per_km2, 6),
                    "cell_radius_km": round(s.cell_radius_km, 6),
                    "feasible_power_band_dbm": None
                    if s.band_low_dbm is None
                    else [round(s.band_low_dbm, 3), round(s.band_high_dbm, 3)],
                }
                for s in self.sectors
            ],
        )
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _power_steps(p_min: float, p_max: float, step: float) -> np.ndarray:
    n = int(math.floor((p_max - p_min) / step + 1e-9))
    steps = p_min + step * np.arange(n + 1)
    if steps[-1] < p_max - 1e-9:
        steps = np.append(steps, p_max)
    return steps


def gain_weighted_area_km2(scenario: Scenario, near_km: float, far_km: float, rejection: float = 0.0) -> float:
    """Annulus area inside the region, each element weighted by linear radar gain."""
    region = scenario.region
    half = region.half_extent_deg
    # fine enough to resolve a sub-degree main beam
    n = max(2001, int(2 * half / 0.002) + 1)
    az = np.linspace(region.axis_azimuth_deg - half, region.axis_azimuth_deg + half, n)
    bore = scenario.boresight_azimuth_deg()
    g = 10.0 ** ((gain_at(scenario.radar.antenna, az - bore) - rejection) / 10.0)
    angular = float(np.trapezoid(g, np.radians(az)))
    return angular * 0.5 * (far_km**2 - near_km**2)


def allocate_with_density(
    scenario: Scenario,
    i_th_dbm: float,
    power_step_db: float = 1.0,
    budget: CoverageBudget | None = None,
    mode: ChannelMode | str = ChannelMode.CO_CHANNEL,
    fdr: FdrProfile | None = None,
) -> DensityPlan:
    """Sector powers with site density tied to coverage radius.

    A sector at power P holds 1/hex_area(coverage_radius(P)) sites per km^2,
    so its median interference is density * A_g * 10**((P - L_k)/10) where A_g
    is its gain-weighted area and L_k its representative loss. Sectors start
    at P_min and dense; the farthest are raised first. Each sector's feasible
    band lists the powers it could take with every other sector at plan.
    """
    _check_step(scenario, power_step_db)
    if not scenario.sectors:
        raise ValueError("scenario has no sectors; call sectorize() first")
    budget = default_coverage_budget(scenario) if budget is None else budget
    params = scenario.cbsd_params
    steps = _power_steps(params.min_power_dbm, params.max_power_dbm, power_step_db)
    x = rejection_db(mode, fdr)

    radii = np.array([coverage_radius(float(p), params, budget) for p in steps])
    density = 1.0 / np.array([hex_cell_area_km2(r) for r in radii])
    sectors = scenario.sectors
    k = len(sectors)
    area_g = np.array([gain_weighted_area_km2(scenario, *s.range_interval_km, rejection=x) for s in sectors])
    losses = np.array([s.representative_loss_db for s in sectors])
    # contrib[s, j]: median interference (mW) of sector s at power step j
    contrib = area_g[:, None] * density[None, :] * 10.0 ** ((steps[None, :] - losses[:, None]) / 10.0)
    limit = 10.0 ** (i_th_dbm / 10.0) if math.isfinite(i_th_dbm) else math.inf

    level = np.zeros(k, dtype=int)
    total = float(contrib[:, 0].sum())
    feasible = total <= limit
    iterations = 0
    if feasible:
        for s in range(k - 1, -1, -1):
            stop = False
            while level[s] + 1 < steps.size:
                new_total = total + contrib[s, level[s] + 1] - contrib[s, level[s]]
                if new_total > limit:
                    stop = True
                    break
                level[s] += 1
                total = new_total
                iterations += 1
            if stop:
                break

    plans = []
    for s in range(k):
        others = total - contrib[s, level[s]]
        ok = np.flatnonzero(others + contrib[s] <= limit) if feasible else np.empty(0, dtype=int)
        lo = float(steps[ok.min()]) if ok.size else None
        hi = float(steps[ok.max()]) if ok.size else None
        plans.append(
            SectorPlan(
                index=sectors[s].index,
                range_interval_km=sectors[s].range_interval_km,
                power_dbm=float(steps[level[s]]),
                density_per_km2=float(density[level[s]]),
                cell_radius_km=float(radii[level[s]]),
                band_low_dbm=lo,
                band_high_dbm=hi,
            )
        )
    return DensityPlan(tuple(plans), mw_to_dbm(total), bool(feasible), iterations, float(i_th_dbm), budget, steps)


def _hex_sites(radius_km: float, near_km: float, far_km: float, half_deg: float, axis_deg: float):
    """Untilted hex lattice (pitch sqrt(3)*radius) covering an annular sector plus one cell."""
    pitch = SQRT3 * radius_km
    row = 1.5 * radius_km
    outer = far_km + radius_km
    jmax = int(math.ceil(outer / row)) + 1
    imax = int(math.ceil(outer / pitch)) + jmax + 1
    j = np.arange(-jmax, jmax + 1)
    i = np.arange(-imax, imax + 1)
    ii, jj = np.meshgrid(i, j)
    x = ((ii + 0.5 * jj) * pitch).ravel()
    y = (jj * row).ravel()
    r = np.hypot(x, y)
    keep = (r <= far_km + radius_km) & (r >= near_km - radius_km)
    if half_deg < 180.0:
        az = np.degrees(np.arctan2(y, x))
        off = np.abs((az - axis_deg + 180.0) % 360.0 - 180.0)
        slack = np.degrees(np.arcsin(np.minimum(1.0, radius_km / np.maximum(r, 1e-9))))
        keep &= off <= half_deg + slack
    return np.column_stack([x[keep], y[keep]])


def coverage_fraction(
    scenario: Scenario, plan: DensityPlan, samples_per_sector: int = 10_000, seed: int = 0
) -> list[float]:
    """Share of uniformly sampled points in each sector annulus within reach of a site.

    Sites sit on a hexagonal lattice at the plan's density, so the cell
    radius equals the coverage radius.
    """
    region = scenario.region
    half = region.half_extent_deg
    axis = region.axis_azimuth_deg
    rng = np.random.default_rng(seed)
    fractions = []
    for s in plan.sectors:
        near, far = s.range_interval_km
        r = np.sqrt(rng.uniform(near**2, far**2, samples_per_sector))
        az = np.radians(axis + rng.uniform(-half, half, samples_per_sector))
        pts = np.column_stack([r * np.cos(az), r * np.sin(az)])
        # a site serves its Voronoi hexagon, whose corners lie exactly at the radius
        sites = _hex_sites(s.cell_radius_km, near, far, half, axis)
        dist, _ = cKDTree(sites).query(pts)
        fractions.append(float(np.mean(dist <= s.cell_radius_km * (1.0 + 1e-9))))
    return fractions


# -- verification ---------------------------------------------------------------


@dataclass(frozen=True)
class ComplianceReport:
    probability: float
    trials: int
    seed: int
    i_th_dbm: float
    margin_percentiles_db: dict[int, float]

    def to_json(self, **meta) -> str:
        doc = dict(meta)
        doc.update(
            compliance_probability=round(self.probability, 6),
            trials=self.trials,
            seed=self.seed,
            i_th_dbm=self.i_th_dbm,
            margin_percentiles_db={str(k): round(v, 6) for k, v in self.margin_percentiles_db.items()},
        )
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


MARGIN_PERCENTILES = (1, 5, 10, 50, 90, 95, 99)


def verify_allocation(
    scenario: Scenario,
    allocation: PowerAllocation,
    trials: int = 10_000,
    seed: int = 0,
    mode: ChannelMode | str = ChannelMode.CO_CHANNEL,
    fdr: FdrProfile | None = None,
    workers: int = 1,
) -> ComplianceReport:
    """Monte Carlo P[I_agg <= I_th] for a fixed deployment under ``allocation``.

    The margin is I_th - I_agg in dB; its percentiles are reported.
    """
    if not allocation.feasible:
        raise ValueError("cannot verify an infeasible allocation")
    fixed = scenario.with_powers(allocation.per_cbsd_power_dbm)
    dist = monte_carlo_sinr_cdf(
        fixed,
        target_range_m=50e3,
        trials=trials,
        mode=mode,
        fdr=fdr,
        seed=seed,
        redeploy=False,
        i_th_override_dbm=allocation.i_th_dbm,
        workers=workers,
    )
    margin = allocation.i_th_dbm - dist.interference_dbm
    pct = {p: float(np.percentile(margin, p)) for p in MARGIN_PERCENTILES}
    return ComplianceReport(dist.compliance_probability, dist.trials, int(seed), allocation.i_th_dbm, pct)


def sector_of_range(scenario: Scenario, k: int, ranges_km) -> np.ndarray:
    return sector_index(sector_edges_km(scenario.region, k), ranges_km)
