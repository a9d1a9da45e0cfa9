"""CBSD deployments around the radar, range sectors and coverage sizing.

Coordinates are a local east-north frame in metres with the radar at the
origin. Azimuths are measured counter-clockwise from the +x axis in degrees.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .antenna import gain_at, wrap_degrees
from .propagation import FadingModel, median_loss_db, user_link_loss_db
from .radar import RadarParams

SQRT3 = math.sqrt(3.0)


class InfeasibleGeometryError(ValueError):
    """The deployment region cannot hold a single site."""


@dataclass(frozen=True)
class CbsdParams:
    max_power_dbm: float = 30.0
    min_power_dbm: float = 20.0
    height_m: float = 30.0
    bandwidth_hz: float = 10e6

    def __post_init__(self):
        if self.min_power_dbm > self.max_power_dbm:
            raise ValueError("min_power_dbm must not exceed max_power_dbm")
        if not (self.height_m > 0 and self.bandwidth_hz > 0):
            raise ValueError("CBSD height and bandwidth must be positive")


@dataclass(frozen=True)
class Cbsd:
    id: int
    x_m: float
    y_m: float
    distance_to_radar_km: float
    azimuth_from_radar_deg: float
    power_dbm: float


@dataclass(frozen=True)
class Region:
    """Annular sector open to deployment.

    ``land_only`` limits sites to the angular sector of width
    ``angular_extent_deg`` centred on ``axis_azimuth_deg`` (the radar-to-shore
    axis); when false the full annulus is used.
    """

    protection_distance_km: float = 30.0
    max_distance_km: float = 100.0
    angular_extent_deg: float = 120.0
    axis_azimuth_deg: float = 0.0
    land_only: bool = True

    def __post_init__(self):
        if self.protection_distance_km < 0 or not self.max_distance_km > 0:
            raise ValueError("region distances must be non-negative with max > 0")
        if not 0 < self.angular_extent_deg <= 360:
            raise ValueError("angular_extent_deg must lie in (0, 360]")

    @property
    def half_extent_deg(self) -> float:
        return 180.0 if not self.land_only else self.angular_extent_deg / 2.0

    @property
    def area_km2(self) -> float:
        r0, r1 = self.protection_distance_km, self.max_distance_km
        if r1 <= r0:
            return 0.0
        return math.radians(2 * self.half_extent_deg) / 2.0 * (r1**2 - r0**2)

    def centroid_azimuth_deg(self) -> float:
        # symmetric about the axis, so the area centroid sits on it
        return self.axis_azimuth_deg

    def contains_xy(self, x_m, y_m, range_km):
        """Same test as :meth:`contains`, on coordinates (avoids arctan2)."""
        r = np.asarray(range_km)
        inside = (r >= self.protection_distance_km) & (r <= self.max_distance_km)
        if self.half_extent_deg < 180.0:
            ax = math.radians(self.axis_azimuth_deg)
            along = np.asarray(x_m) * math.cos(ax) + np.asarray(y_m) * math.sin(ax)
            inside &= along >= r * 1e3 * math.cos(math.radians(self.half_extent_deg))
        return inside

    def contains(self, range_km, azimuth_deg):
        r = np.asarray(range_km)
        inside = (r >= self.protection_distance_km) & (r <= self.max_distance_km)
        if self.half_extent_deg < 180.0:
            off = np.abs(wrap_degrees(np.asarray(azimuth_deg) - self.axis_azimuth_deg))
            inside &= off <= self.half_extent_deg
        return inside


@dataclass(frozen=True)
class DeploymentRule:
    """How the jittered hexagonal lattice is laid out.

    ``cbsd_limit_dbm`` is the ceiling on power received by one CBSD from any
    other CBSD at max EIRP. ``site_spacing_m`` of ``None`` selects the tightest
    lattice whose jittered sites still honour that ceiling.
    """

    cbsd_limit_dbm: float = -62.0
    site_spacing_m: float | None = 700.0
    jitter_fraction: float = 0.25

    def __post_init__(self):
        if not 0 <= self.jitter_fraction < 0.5:
            raise ValueError("jitter_fraction must lie in [0, 0.5)")
        if self.site_spacing_m is not None and not self.site_spacing_m > 0:
            raise ValueError("site_spacing_m must be positive")


class BoresightMode(str, enum.Enum):
    CENTROID = "centroid"
    FIXED = "fixed"
    RANDOM = "random"


@dataclass(frozen=True)
class Boresight:
    mode: BoresightMode = BoresightMode.CENTROID
    azimuth_deg: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "mode", BoresightMode(self.mode))


@dataclass(frozen=True)
class Sector:
    index: int
    range_interval_km: tuple[float, float]
    member_ids: tuple[int, ...]
    representative_loss_db: float
    density_per_km2: float | None = None

    @property
    def midpoint_km(self) -> float:
        return 0.5 * (self.range_interval_km[0] + self.range_interval_km[1])


@dataclass(frozen=True)
class Scenario:
    radar: RadarParams = field(default_factory=RadarParams)
    cbsd_params: CbsdParams = field(default_factory=CbsdParams)
    region: Region = field(default_factory=Region)
    rule: DeploymentRule = field(default_factory=DeploymentRule)
    boresight: Boresight = field(default_factory=Boresight)
    shadowing: FadingModel = field(default_factory=FadingModel)
    sea_path_fraction: float = 0.0
    sea_adjustment_db_per_km: float = 0.0
    cbsds: tuple[Cbsd, ...] = ()
    sectors: tuple[Sector, ...] = ()
    rng_seed: int | None = None

    # -- derived arrays (computed once per immutable instance) --------------

    @cached_property
    def ids(self) -> np.ndarray:
        return np.array([c.id for c in self.cbsds], dtype=int)

    @cached_property
    def ranges_km(self) -> np.ndarray:
        return np.array([c.distance_to_radar_km for c in self.cbsds], dtype=float)

    @cached_property
    def azimuths_deg(self) -> np.ndarray:
        return np.array([c.azimuth_from_radar_deg for c in self.cbsds], dtype=float)

    @cached_property
    def powers_dbm(self) -> np.ndarray:
        return np.array([c.power_dbm for c in self.cbsds], dtype=float)

    @cached_property
    def link_loss_db(self) -> np.ndarray:
        return radar_link_loss_db(self, self.ranges_km)

    @cached_property
    def radar_gain_dbi(self) -> np.ndarray:
        return gain_at(self.radar.antenna, self.azimuths_deg - self.boresight_azimuth_deg())

    @property
    def size(self) -> int:
        return len(self.cbsds)

    def boresight_azimuth_deg(self, rng: np.random.Generator | None = None) -> float:
        mode = self.boresight.mode
        if mode is BoresightMode.CENTROID:
            return self.region.centroid_azimuth_deg()
        if mode is BoresightMode.FIXED:
            return self.boresight.azimuth_deg
        if rng is None:
            raise ValueError("random boresight needs a generator")
        return float(rng.uniform(-180.0, 180.0))

    def with_powers(self, powers_dbm: Sequence[float]) -> "Scenario":
        powers = np.asarray(powers_dbm, dtype=float)
        if powers.shape != (self.size,):
            raise ValueError("one power per CBSD is required")
        cbsds = tuple(replace(c, power_dbm=float(p)) for c, p in zip(self.cbsds, powers))
        return replace(self, cbsds=cbsds)


def radar_link_loss_db(scenario: Scenario, ranges_km) -> np.ndarray:
    return np.asarray(
        median_loss_db(
            scenario.radar.frequency_mhz,
            ranges_km,
            scenario.cbsd_params.height_m,
            scenario.radar.height_m,
            scenario.sea_path_fraction,
            scenario.sea_adjustment_db_per_km,
        ),
        dtype=float,
    )


def cbsd_link_loss_db(frequency_mhz: float, distance_m, height_m: float):
    """CBSD-to-CBSD median loss: eHATA at both ends' height, free space below 1 km."""
    return median_loss_db(frequency_mhz, np.asarray(distance_m) / 1e3, height_m, height_m)


def min_site_distance_m(
    cbsd_params: CbsdParams, frequency_mhz: float, limit_dbm: float = -62.0
) -> float:
    """Smallest separation at which a max-EIRP CBSD lands strictly below ``limit_dbm``."""
    needed = cbsd_params.max_power_dbm - limit_dbm

    def excess(d_m):
        return cbsd_link_loss_db(frequency_mhz, d_m, cbsd_params.height_m) - needed

    lo, hi = 1e-3, 1e3
    if excess(lo) > 0:
        return lo
    while excess(hi) <= 0:
        hi *= 10.0
        if hi > 1e8:
            raise InfeasibleGeometryError("no separation satisfies the CBSD interference limit")
    # loss is monotone but jumps at 1 km, so keep a bracket: excess(lo) <= 0 < excess(hi)
    while hi - lo > 1e-9 * hi:
        mid = 0.5 * (lo + hi)
        if excess(mid) > 0:
            hi = mid
        else:
            lo = mid
    return hi


def resolved_spacing_m(scenario: Scenario) -> float:
    """Lattice pitch used for deployment; raises if it breaks the CBSD limit."""
    rule = scenario.rule
    d_min = min_site_distance_m(scenario.cbsd_params, scenario.radar.frequency_mhz, rule.cbsd_limit_dbm)
    floor = d_min / (1.0 - 2.0 * rule.jitter_fraction)
    if rule.site_spacing_m is None:
        return floor
    if rule.site_spacing_m < floor:
        raise ValueError(
            f"site spacing {rule.site_spacing_m:.1f} m is below {floor:.1f} m, the pitch "
            f"needed to keep jittered sites under {rule.cbsd_limit_dbm} dBm of each other"
        )
    return float(rule.site_spacing_m)


@dataclass(frozen=True)
class Lattice:
    """Nominal hexagonal sites that can land inside the region after jitter."""

    x_m: np.ndarray
    y_m: np.ndarray
    spacing_m: float
    jitter_m: float


def nominal_lattice(region: Region, spacing_m: float, jitter_fraction: float) -> Lattice:
    jitter = jitter_fraction * spacing_m
    r_hi = region.max_distance_km * 1e3 + jitter
    r_lo = max(region.protection_distance_km * 1e3 - jitter, 0.0)
    if region.max_distance_km <= region.protection_distance_km:
        empty = np.empty(0)
        return Lattice(empty, empty, spacing_m, jitter)
    row = spacing_m * SQRT3 / 2.0
    nj = int(math.ceil(r_hi / row)) + 1
    j = np.arange(-nj, nj + 1)
    ni = int(math.ceil(r_hi / spacing_m)) + nj + 1
    i = np.arange(-ni, ni + 1)
    ii, jj = np.meshgrid(i, j)
    x = ((ii + 0.5 * jj) * spacing_m).ravel()
    y = (jj * row).ravel()
    rr = np.hypot(x, y)
    keep = (rr <= r_hi) & (rr >= r_lo)
    if region.half_extent_deg < 180.0:
        az = np.degrees(np.arctan2(y, x))
        off = np.abs(wrap_degrees(az - region.axis_azimuth_deg))
        with np.errstate(divide="ignore"):
            slack = np.degrees(np.arcsin(np.minimum(1.0, jitter / np.maximum(rr, 1e-9))))
        keep &= off <= region.half_extent_deg + slack
    return Lattice(x[keep], y[keep], spacing_m, jitter)


def unit_disc_offsets(rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
    """n points uniform in the unit disc, by rejection from the enclosing square."""
    xs, ys, have = [], [], 0
    while have < n:
        m = int((n - have) * 1.3) + 16
        pts = rng.random((2, m)) * 2.0 - 1.0
        ok = pts[0] ** 2 + pts[1] ** 2 < 1.0
        xs.append(pts[0, ok])
        ys.append(pts[1, ok])
        have += int(ok.sum())
    return np.concatenate(xs)[:n], np.concatenate(ys)[:n]


def jittered_positions(lattice: Lattice, region: Region, rng: np.random.Generator | None):
    """Jitter every nominal site uniformly within a disc and clip to the region.

    Returns (x_m, y_m, range_km, nominal_index).
    """
    n = lattice.x_m.size
    if rng is None or lattice.jitter_m == 0 or n == 0:
        x, y = lattice.x_m, lattice.y_m
    else:
        dx, dy = unit_disc_offsets(rng, n)
        x = lattice.x_m + lattice.jitter_m * dx
        y = lattice.y_m + lattice.jitter_m * dy
    r_km = np.sqrt(x * x + y * y) / 1e3
    idx = np.flatnonzero(region.contains_xy(x, y, r_km))
    return x[idx], y[idx], r_km[idx], idx


def jittered_sites(lattice: Lattice, region: Region, rng: np.random.Generator | None):
    """As :func:`jittered_positions`, plus azimuths: (x_m, y_m, range_km, azimuth_deg, nominal_index)."""
    x, y, r_km, idx = jittered_positions(lattice, region, rng)
    return x, y, r_km, np.degrees(np.arctan2(y, x)), idx


def generate_deployment(scenario: Scenario, seed: int | None = None) -> Scenario:
    """Populate ``scenario.cbsds`` on a jittered lattice, every CBSD at max EIRP."""
    region = scenario.region
    if region.max_distance_km <= region.protection_distance_km:
        return replace(scenario, cbsds=(), sectors=(), rng_seed=seed)
    spacing = resolved_spacing_m(scenario)
    if region.area_km2 * 1e6 < SQRT3 / 2.0 * spacing**2:
        raise InfeasibleGeometryError(
            f"region of {region.area_km2:.4f} km^2 is smaller than one cell at {spacing:.0f} m pitch"
        )
    lattice = nominal_lattice(region, spacing, scenario.rule.jitter_fraction)
    rng = np.random.default_rng(seed)
    x, y, r_km, az, _ = jittered_sites(lattice, region, rng)
    p = scenario.cbsd_params.max_power_dbm
    cbsds = tuple(
        Cbsd(i, float(xi), float(yi), float(ri), float(ai), p)
        for i, (xi, yi, ri, ai) in enumerate(zip(x, y, r_km, az))
    )
    return replace(scenario, cbsds=cbsds, sectors=(), rng_seed=seed)


def sector_edges_km(region: Region, k: int) -> np.ndarray:
    return np.linspace(region.protection_distance_km, region.max_distance_km, k + 1)


def sector_index(edges_km: np.ndarray, ranges_km) -> np.ndarray:
    """Sector of each range; intervals are [near, far) with R_max folded into the last."""
    k = edges_km.size - 1
    return np.clip(np.searchsorted(edges_km, ranges_km, side="right") - 1, 0, k - 1)


def sectorize(scenario: Scenario, k: int) -> Scenario:
    """Split [R_min, R_max) into ``k`` equal range intervals and assign every CBSD."""
    if isinstance(k, bool) or int(k) != k or k < 1:
        raise ValueError(f"sector count must be a positive integer, got {k!r}")
    region = scenario.region
    if region.max_distance_km <= region.protection_distance_km:
        raise ValueError("sectorisation needs R_min < R_max")
    edges = sector_edges_km(region, int(k))
    which = sector_index(edges, scenario.ranges_km)
    mids = 0.5 * (edges[:-1] + edges[1:])
    losses = radar_link_loss_db(scenario, np.maximum(mids, 1e-3))
    sectors = tuple(
        Sector(
            index=s,
            range_interval_km=(float(edges[s]), float(edges[s + 1])),
            member_ids=tuple(int(i) for i in scenario.ids[which == s]),
            representative_loss_db=float(losses[s]),
        )
        for s in range(int(k))
    )
    return replace(scenario, sectors=sectors)


# -- coverage ---------------------------------------------------------------


@dataclass(frozen=True)
class CoverageBudget:
    """Downlink edge budget: a cell reaches where loss equals power - edge signal."""

    edge_signal_dbm: float
    user_height_m: float = 1.5
    frequency_mhz: float = 3600.0
    min_radius_km: float = 0.01

    def __post_init__(self):
        if not (self.user_height_m > 0 and self.min_radius_km > 0 and self.frequency_mhz > 0):
            raise ValueError("coverage budget needs positive height, frequency and min radius")


def coverage_radius(power_dbm: float, cbsd_params: CbsdParams, budget: CoverageBudget) -> float:
    """Cell radius in km at which the user link meets the edge budget."""
    allowed = power_dbm - budget.edge_signal_dbm

    def loss(d_km):
        return user_link_loss_db(budget.frequency_mhz, d_km, cbsd_params.height_m, budget.user_height_m)

    if allowed <= loss(budget.min_radius_km):
        return budget.min_radius_km
    hi = 1.0
    while loss(hi) < allowed:
        hi *= 2.0
        if hi > 1e4:
            raise ValueError("edge budget too generous: radius exceeds 10,000 km")
    return float(brentq(lambda d: loss(d) - allowed, budget.min_radius_km, hi, xtol=1e-12))


def budget_for_radius(radius_km: float, power_dbm: float, cbsd_params: CbsdParams, **kw) -> CoverageBudget:
    """Edge budget under which ``power_dbm`` covers exactly ``radius_km``."""
    proto = CoverageBudget(edge_signal_dbm=0.0, **kw)
    loss = user_link_loss_db(proto.frequency_mhz, radius_km, cbsd_params.height_m, proto.user_height_m)
    return replace(proto, edge_signal_dbm=float(power_dbm - loss))


def default_coverage_budget(scenario: Scenario, user_height_m: float = 1.5) -> CoverageBudget:
    """Budget under which the max-power lattice exactly tiles: radius = pitch / sqrt(3)."""
    spacing = resolved_spacing_m(scenario)
    return budget_for_radius(
        spacing / SQRT3 / 1e3,
        scenario.cbsd_params.max_power_dbm,
        scenario.cbsd_params,
        user_height_m=user_height_m,
        frequency_mhz=scenario.radar.frequency_mhz,
    )


def hex_cell_area_km2(radius_km: float) -> float:
    """Area of a hexagonal cell with circumradius ``radius_km``."""
    return 1.5 * SQRT3 * radius_km**2


def density_for_radius(radius_km: float) -> float:
    return 1.0 / hex_cell_area_km2(radius_km)


# -- export -----------------------------------------------------------------

DEPLOYMENT_COLUMNS = ("id", "x_m", "y_m", "range_km", "azimuth_deg", "power_dbm")


def deployment_csv(scenario: Scenario) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(DEPLOYMENT_COLUMNS)
    for c in scenario.cbsds:
        w.writerow(
            [
                c.id,
                f"{c.x_m:.3f}",
                f"{c.y_m:.3f}",
                f"{c.distance_to_radar_km:.6f}",
                f"{c.azimuth_from_radar_deg:.6f}",
                f"{c.power_dbm:.3f}",
            ]
        )
    return buf.getvalue()
