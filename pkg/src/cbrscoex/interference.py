"""Aggregate CBSD interference at the radar and the radar SINR distribution.

Every interference term is 10**((P + g - L - X + F)/10) mW: transmit EIRP P,
radar gain g towards the CBSD, median loss L, receiver rejection X (adjacent
channel only) and shadowing F, all in dB.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np
from scipy.special import ndtr

from . import radar as rd
from .antenna import gain_at, gain_from_sine
from .radar import FdrProfile
from .scenario import (
    BoresightMode,
    Lattice,
    Scenario,
    jittered_positions,
    nominal_lattice,
    radar_link_loss_db,
    resolved_spacing_m,
)

DEFAULT_GRID_DB = np.round(np.arange(-20.0, 60.0 + 1e-9, 0.1), 10)
NO_INTERFERENCE_DBM = -math.inf
_DB_TO_NEPER = math.log(10.0) / 10.0  # 10**(x/10) == exp(x * this)


class MissingFdrError(ValueError):
    """Adjacent-channel evaluation was requested without an FDR profile."""


class ChannelMode(str, enum.Enum):
    CO_CHANNEL = "co_channel"
    ADJACENT = "adjacent"


class Source(str, enum.Enum):
    ANALYTIC = "analytic"
    MONTE_CARLO = "monte_carlo"


def rejection_db(mode: ChannelMode | str, fdr: FdrProfile | None) -> float:
    mode = ChannelMode(mode)
    if mode is ChannelMode.CO_CHANNEL:
        return 0.0
    if fdr is None:
        raise MissingFdrError("adjacent-channel mode needs an FDR profile")
    return fdr.rejection_db


def mw_to_dbm(mw: float) -> float:
    return 10.0 * math.log10(mw) if mw > 0 else NO_INTERFERENCE_DBM


@dataclass(frozen=True)
class InterferenceBudget:
    per_cbsd_median_dbm: np.ndarray
    aggregate_median_dbm: float


def interference_terms_dbm(scenario: Scenario, mode=ChannelMode.CO_CHANNEL, fdr=None) -> np.ndarray:
    """Median received interference from each CBSD (no shadowing)."""
    x = rejection_db(mode, fdr)
    return scenario.powers_dbm + scenario.radar_gain_dbi - scenario.link_loss_db - x


def interference_budget(scenario: Scenario, mode=ChannelMode.CO_CHANNEL, fdr=None) -> InterferenceBudget:
    terms = interference_terms_dbm(scenario, mode, fdr)
    return InterferenceBudget(terms, power_sum_dbm(terms))


def power_sum_dbm(terms_dbm) -> float:
    terms = np.asarray(terms_dbm, dtype=float)
    if terms.size == 0:
        return NO_INTERFERENCE_DBM
    return mw_to_dbm(float(np.sum(10.0 ** (terms / 10.0))))


def aggregate_interference_dbm(
    scenario: Scenario,
    fading_db=None,
    mode: ChannelMode | str = ChannelMode.CO_CHANNEL,
    fdr: FdrProfile | None = None,
) -> float:
    """Aggregate interference in dBm for one shadowing draw (None = median)."""
    terms = interference_terms_dbm(scenario, mode, fdr)
    if fading_db is not None:
        terms = terms + np.broadcast_to(np.asarray(fading_db, dtype=float), terms.shape)
    return power_sum_dbm(terms)


# -- distributions -----------------------------------------------------------


@dataclass(frozen=True)
class SinrDistribution:
    thresholds_db: np.ndarray
    cdf_values: np.ndarray
    compliance_probability: float
    source: Source
    trials: int
    target_range_m: float
    i_th_dbm: float
    sinr_threshold_db: float
    seed: int | None = None
    interference_dbm: np.ndarray | None = field(default=None, repr=False)
    sinr_db: np.ndarray | None = field(default=None, repr=False)

    def cdf_at(self, threshold_db: float) -> float:
        return float(np.interp(threshold_db, self.thresholds_db, self.cdf_values))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["threshold_db", "cdf"])
        for t, c in zip(self.thresholds_db, self.cdf_values):
            w.writerow([f"{t:.2f}", f"{c:.6f}"])
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {
            "source": self.source.value,
            "trials": self.trials,
            "seed": self.seed,
            "target_range_m": self.target_range_m,
            "i_th_dbm": self.i_th_dbm,
            "sinr_threshold_db": round(self.sinr_threshold_db, 6),
            "compliance_probability": round(self.compliance_probability, 6),
            "columns": ["threshold_db", "cdf"],
            "rows": [[round(float(t), 2), round(float(c), 6)] for t, c in zip(self.thresholds_db, self.cdf_values)],
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _grid(grid) -> np.ndarray:
    return DEFAULT_GRID_DB.copy() if grid is None else np.asarray(grid, dtype=float)


def analytic_sinr_cdf(
    scenario: Scenario,
    target_range_m: float,
    grid=None,
    mode: ChannelMode | str = ChannelMode.CO_CHANNEL,
    fdr: FdrProfile | None = None,
    i_th_override_dbm: float | None = None,
) -> SinrDistribution:
    """Log-normal-sum approximation of P[SINR < T] for a fixed deployment.

    SINR in dB is treated as Normal(-10 log Lambda, sigma_bar**2) where Lambda
    is noise plus median interference relative to the median echo, and
    sigma_bar = sigma * sqrt(1 + sum(lambda_m**2)) combines the echo shadowing
    with the power-weighted interference shadowing.

    ``compliance_probability`` is P[I_agg <= I_th] under the same
    linearisation applied to the interference sum alone. It is a rough
    estimate that runs optimistic for a handful of strong interferers; use
    the Monte Carlo engine when the tail matters.
    """
    radar = scenario.radar
    sigma = scenario.shadowing.sigma_db
    thresholds = _grid(grid)
    t_s = rd.target_return_power_dbm(radar, target_range_m)
    p_n = rd.noise_power_dbm(radar)
    i_th = rd.max_tolerable_interference_dbm(radar, i_th_override_dbm)
    t_m = interference_terms_dbm(scenario, mode, fdr)

    rel = 10.0 ** ((t_m - t_s) / 10.0)
    lam_total = float(rel.sum() + 10.0 ** ((p_n - t_s) / 10.0))
    weights = rel / lam_total
    sigma_bar = sigma * math.sqrt(1.0 + float(np.sum(weights**2)))
    centre = -10.0 * math.log10(lam_total)
    if sigma_bar == 0:
        cdf = (thresholds > centre).astype(float)
    else:
        cdf = ndtr((thresholds - centre) / sigma_bar)

    if t_m.size == 0:
        compliance = 1.0
    else:
        lin = 10.0 ** (t_m / 10.0)
        i_med = 10.0 * math.log10(lin.sum())
        spread = sigma * math.sqrt(float(np.sum((lin / lin.sum()) ** 2)))
        if spread == 0:
            compliance = float(i_med <= i_th)
        else:
            compliance = float(ndtr((i_th - i_med) / spread))

    return SinrDistribution(
        thresholds_db=thresholds,
        cdf_values=np.asarray(cdf, dtype=float),
        compliance_probability=compliance,
        source=Source.ANALYTIC,
        trials=0,
        target_range_m=float(target_range_m),
        i_th_dbm=i_th,
        sinr_threshold_db=float(rd.sinr_threshold(radar, target_range_m)),
    )


# -- Monte Carlo ---------------------------------------------------------------


@dataclass(frozen=True)
class _TrialSetup:
    scenario: Scenario
    lattice: Lattice | None
    power_dbm: float
    rejection_db: float
    seed: int


def _trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng([seed, trial])


def _run_trials(setup: _TrialSetup, trials: Sequence[int]) -> np.ndarray:
    """Aggregate interference (mW) and echo shadowing (dB) per trial."""
    sc = setup.scenario
    sigma = sc.shadowing.sigma_db
    antenna = sc.radar.antenna
    random_bore = sc.boresight.mode is BoresightMode.RANDOM
    out = np.empty((len(trials), 2))
    if setup.lattice is None:
        base = sc.powers_dbm - sc.link_loss_db - setup.rejection_db
        if not random_bore:
            base = base + sc.radar_gain_dbi
    else:
        base = None
        if not random_bore:
            bore = math.radians(sc.boresight_azimuth_deg())
    for row, t in enumerate(trials):
        rng = _trial_rng(setup.seed, t)
        if random_bore:
            bore = math.radians(sc.boresight_azimuth_deg(rng))
        if setup.lattice is None:
            terms = base + gain_at(antenna, sc.azimuths_deg - math.degrees(bore)) if random_bore else base
        else:
            x, y, r_km, _ = jittered_positions(setup.lattice, sc.region, rng)
            bx, by = math.cos(bore), math.sin(bore)
            abs_sin = np.abs(x * by - y * bx) / (r_km * 1e3)
            gain = gain_from_sine(antenna, abs_sin, x * bx + y * by > 0)
            terms = setup.power_dbm - setup.rejection_db - radar_link_loss_db(sc, r_km) + gain
        terms = np.atleast_1d(terms)
        if sigma > 0:
            terms = terms + rng.normal(0.0, sigma, terms.size)
            echo = rng.normal(0.0, sigma)
        else:
            echo = 0.0
        out[row, 0] = np.sum(np.exp(terms * _DB_TO_NEPER)) if terms.size else 0.0
        out[row, 1] = echo
    return out


def _chunks(n: int, parts: int) -> list[range]:
    size = max(1, math.ceil(n / parts))
    return [range(i, min(n, i + size)) for i in range(0, n, size)]


def monte_carlo_sinr_cdf(
    scenario: Scenario,
    target_range_m: float,
    trials: int = 10_000,
    mode: ChannelMode | str = ChannelMode.CO_CHANNEL,
    fdr: FdrProfile | None = None,
    seed: int = 0,
    grid=None,
    redeploy: bool = True,
    i_th_override_dbm: float | None = None,
    workers: int = 1,
) -> SinrDistribution:
    """Empirical SINR distribution over independent trials.

    With ``redeploy`` the lattice jitter is redrawn every trial and all CBSDs
    transmit at max EIRP; otherwise the CBSDs and powers of ``scenario`` are
    used as-is. Trial ``t`` draws from its own stream keyed by ``(seed, t)``,
    so the result does not depend on ``workers``.
    """
    (dist,) = monte_carlo_sinr_cdfs(
        scenario, [target_range_m], trials, mode, fdr, seed, grid, redeploy, i_th_override_dbm, workers
    )
    return dist


def monte_carlo_sinr_cdfs(
    scenario: Scenario,
    target_ranges_m: Sequence[float],
    trials: int = 10_000,
    mode: ChannelMode | str = ChannelMode.CO_CHANNEL,
    fdr: FdrProfile | None = None,
    seed: int = 0,
    grid=None,
    redeploy: bool = True,
    i_th_override_dbm: float | None = None,
    workers: int = 1,
) -> list[SinrDistribution]:
    """One set of trials evaluated at several target ranges.

    Interference and shadowing draws do not depend on the target, so every
    returned distribution shares the same per-trial aggregate interference.
    """
    if isinstance(trials, bool) or int(trials) != trials or trials < 1:
        raise ValueError(f"trials must be a positive integer, got {trials!r}")
    if seed is None or seed < 0:
        raise ValueError("Monte Carlo needs a non-negative integer seed")
    targets = [float(r) for r in target_ranges_m]
    if not targets:
        raise ValueError("no target range given")
    radar = scenario.radar
    x = rejection_db(mode, fdr)
    lattice = None
    if redeploy:
        spacing = resolved_spacing_m(scenario)
        lattice = nominal_lattice(scenario.region, spacing, scenario.rule.jitter_fraction)
    setup = _TrialSetup(scenario, lattice, scenario.cbsd_params.max_power_dbm, x, int(seed))

    n = int(trials)
    if workers > 1 and n > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_trials, [setup] * workers, _chunks(n, workers)))
        raw = np.concatenate(parts)
    else:
        raw = _run_trials(setup, range(n))

    i_mw, echo = raw[:, 0], raw[:, 1]
    with np.errstate(divide="ignore"):
        i_dbm = 10.0 * np.log10(i_mw)
    n_mw = 10.0 ** (rd.noise_power_dbm(radar) / 10.0)
    i_th = rd.max_tolerable_interference_dbm(radar, i_th_override_dbm)
    compliance = float(np.mean(i_dbm <= i_th))
    thresholds = _grid(grid)

    out = []
    for target in targets:
        t_s = rd.target_return_power_dbm(radar, target)
        sinr = t_s + echo - 10.0 * np.log10(n_mw + i_mw)
        cdf = np.searchsorted(np.sort(sinr), thresholds, side="left") / n
        out.append(
            SinrDistribution(
                thresholds_db=thresholds,
                cdf_values=cdf,
                compliance_probability=compliance,
                source=Source.MONTE_CARLO,
                trials=n,
                target_range_m=target,
                i_th_dbm=i_th,
                sinr_threshold_db=float(rd.sinr_threshold(radar, target)),
                seed=int(seed),
                interference_dbm=i_dbm,
                sinr_db=sinr,
            )
        )
    return out


@dataclass(frozen=True)
class SweepRow:
    r_min_km: float
    compliance_probability: float
    trials: int
    seed: int
    # one per requested target range, same trials
    distributions: tuple[SinrDistribution, ...] = field(default=(), repr=False, compare=False)


def with_protection_distance(scenario: Scenario, r_min_km: float) -> Scenario:
    region = replace(scenario.region, protection_distance_km=float(r_min_km))
    return replace(scenario, region=region, cbsds=(), sectors=())


def protection_distance_sweep(
    scenario: Scenario,
    r_min_values_km: Iterable[float],
    target_range_m: float | Sequence[float] = 50e3,
    trials: int = 10_000,
    mode: ChannelMode | str = ChannelMode.CO_CHANNEL,
    fdr: FdrProfile | None = None,
    seed: int = 0,
    i_th_override_dbm: float | None = None,
    workers: int = 1,
    grid=None,
) -> list[SweepRow]:
    """Compliance probability for each protection distance (same seed throughout)."""
    values = [float(v) for v in r_min_values_km]
    if not values:
        raise ValueError("protection-distance list is empty")
    targets = [target_range_m] if np.ndim(target_range_m) == 0 else list(target_range_m)
    rows = []
    for r_min in values:
        dists = monte_carlo_sinr_cdfs(
            with_protection_distance(scenario, r_min),
            targets,
            trials=trials,
            mode=mode,
            fdr=fdr,
            seed=seed,
            grid=grid,
            i_th_override_dbm=i_th_override_dbm,
            workers=workers,
        )
        rows.append(SweepRow(r_min, dists[0].compliance_probability, dists[0].trials, int(seed), tuple(dists)))
    return rows


SWEEP_COLUMNS = ("r_min_km", "compliance_probability", "trials", "seed")


def sweep_csv(rows: Sequence[SweepRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for r in rows:
        w.writerow([f"{r.r_min_km:g}", f"{r.compliance_probability:.6f}", r.trials, r.seed])
    return buf.getvalue()


def sweep_json(rows: Sequence[SweepRow], **meta) -> str:
    doc = dict(meta)
    doc["columns"] = list(SWEEP_COLUMNS)
    doc["rows"] = [[r.r_min_km, round(r.compliance_probability, 6), r.trials, r.seed] for r in rows]
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
