"""Median transmission loss (extended Hata, point-to-point) and shadow fading.

All logarithms are base 10. Frequencies are in MHz, link distances in km,
antenna heights in m.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

SPEED_OF_LIGHT = 299792458.0  # m/s

# eHATA validity floor; below it the radar link falls back to free space.
EHATA_MIN_DISTANCE_KM = 1.0

# Reference heights of the Okumura curves the attenuation fits are built on.
_REF_BASE_HEIGHT_M = 200.0
_REF_MOBILE_HEIGHT_M = 3.0


class Environment(str, enum.Enum):
    OUTDOOR_URBAN = "outdoor_urban"


@dataclass(frozen=True)
class PathlossInputs:
    frequency_mhz: float
    distance_km: float
    tx_height_m: float
    rx_height_m: float
    environment: Environment = Environment.OUTDOOR_URBAN
    sea_path_fraction: float = 0.0

    def __post_init__(self):
        for name in ("frequency_mhz", "distance_km", "tx_height_m", "rx_height_m"):
            value = getattr(self, name)
            if not value > 0:
                raise ValueError(f"{name} must be positive, got {value!r}")
        if not 0.0 <= self.sea_path_fraction <= 1.0:
            raise ValueError(
                f"sea_path_fraction must lie in [0, 1], got {self.sea_path_fraction!r}"
            )
        object.__setattr__(self, "environment", Environment(self.environment))


@dataclass(frozen=True)
class FadingModel:
    """Log-normal shadowing: Normal(0, sigma_db**2) in dB."""

    sigma_db: float = 8.0
    seed: int | None = None

    def __post_init__(self):
        if not self.sigma_db >= 0:
            raise ValueError(f"sigma_db must be non-negative, got {self.sigma_db!r}")

    def generator(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)


def free_space_loss(frequency_mhz, slant_distance_m):
    """Free-space loss 20*log10(4*pi*R/lambda) in dB. Accepts scalars or arrays."""
    f = np.asarray(frequency_mhz, dtype=float)
    d = np.asarray(slant_distance_m, dtype=float)
    if np.any(f <= 0) or np.any(d <= 0):
        raise ValueError("frequency and distance must be positive")
    wavelength = SPEED_OF_LIGHT / (f * 1e6)
    loss = 20.0 * np.log10(4.0 * np.pi * d / wavelength)
    return float(loss) if loss.ndim == 0 else loss


def height_gain_correction(height_m):
    """Urban receive-height correction a(h) of the Hata family (f >= 300 MHz)."""
    return 3.2 * np.log10(11.75 * np.asarray(height_m, dtype=float)) ** 2 - 4.97


def median_attenuation_db(frequency_mhz: float) -> tuple[float, float]:
    """Frequency-extrapolated attenuation relative to free space at 1 km and 100 km.

    Both fits hold for the reference geometry (200 m base, 3 m mobile).
    """
    lf = math.log10(frequency_mhz)
    at_1km = 30.52 - 16.81 * lf + 4.45 * lf**2
    at_100km = 120.78 - 52.71 * lf + 10.72 * lf**2
    return at_1km, at_100km


@dataclass(frozen=True)
class EhataTerms:
    """Height- and frequency-dependent terms shared by every distance on a link."""

    attenuation_1km_db: float
    attenuation_100km_db: float
    n_low: float
    n_high: float
    breakpoint_km: float
    base_height_db: float
    rx_height_db: float

    @classmethod
    def build(cls, frequency_mhz: float, tx_height_m: float, rx_height_m: float):
        a1, a100 = median_attenuation_db(frequency_mhz)
        lh = math.log10(tx_height_m)
        n_low = 0.1 * (24.9 - 6.55 * lh)
        n_high = 2.0 * (3.27 * lh - 0.67 * lh**2 - 1.75)
        if n_high <= n_low:
            raise ValueError(
                f"base height {tx_height_m} m puts the far-range exponent below the "
                "near-range one; outside the model's validity"
            )
        # a_bm ratio taken in linear units
        log_bp = (2.0 * n_high + (a1 - a100) / 10.0) / (n_high - n_low)
        return cls(
            attenuation_1km_db=a1,
            attenuation_100km_db=a100,
            n_low=n_low,
            n_high=n_high,
            breakpoint_km=10.0**log_bp,
            base_height_db=13.82 * math.log10(_REF_BASE_HEIGHT_M / tx_height_m),
            rx_height_db=float(
                height_gain_correction(_REF_MOBILE_HEIGHT_M)
                - height_gain_correction(rx_height_m)
            ),
        )

    def attenuation_db(self, distance_km):
        """Median attenuation relative to free space (no sea-path term)."""
        r = np.asarray(distance_km, dtype=float)
        n = np.where(r <= self.breakpoint_km, self.n_low, self.n_high)
        return (
            self.attenuation_1km_db
            + 10.0 * self.n_low * math.log10(self.breakpoint_km)
            + 10.0 * n * np.log10(r / self.breakpoint_km)
            + self.base_height_db
            + self.rx_height_db
        )


def breakpoint_distance_km(frequency_mhz: float, tx_height_m: float) -> float:
    return EhataTerms.build(frequency_mhz, tx_height_m, _REF_MOBILE_HEIGHT_M).breakpoint_km


def median_loss_db(
    frequency_mhz: float,
    distance_km,
    tx_height_m: float,
    rx_height_m: float,
    sea_path_fraction=0.0,
    sea_adjustment_db_per_km: float = 0.0,
):
    """Vectorised median radar-link loss.

    Links shorter than 1 km get free-space loss on the slant distance.
    """
    r = np.asarray(distance_km, dtype=float)
    if np.any(r <= 0):
        raise ValueError("distance must be positive")
    if not (tx_height_m > 0 and rx_height_m > 0 and frequency_mhz > 0):
        raise ValueError("frequency and antenna heights must be positive")
    terms = EhataTerms.build(frequency_mhz, tx_height_m, rx_height_m)
    slant_m = np.sqrt((r * 1e3) ** 2 + (tx_height_m - rx_height_m) ** 2)
    fsl = free_space_loss(frequency_mhz, slant_m)
    short = r < EHATA_MIN_DISTANCE_KM
    if np.any(short):
        log.info(
            "%d link(s) shorter than %.1f km: using free-space loss",
            int(np.count_nonzero(short)),
            EHATA_MIN_DISTANCE_KM,
        )
    loss = np.where(short, 0.0, terms.attenuation_db(np.maximum(r, EHATA_MIN_DISTANCE_KM))) + fsl
    loss = loss + np.asarray(sea_path_fraction) * r * sea_adjustment_db_per_km
    return float(loss) if loss.ndim == 0 else loss


def ehata_median_loss(inputs: PathlossInputs, sea_adjustment_db_per_km: float = 0.0) -> float:
    """Median transmission loss in dB for one link."""
    if inputs.environment is not Environment.OUTDOOR_URBAN:
        raise ValueError(f"unsupported environment {inputs.environment}")
    return median_loss_db(
        inputs.frequency_mhz,
        inputs.distance_km,
        inputs.tx_height_m,
        inputs.rx_height_m,
        inputs.sea_path_fraction,
        sea_adjustment_db_per_km,
    )


def user_link_loss_db(frequency_mhz: float, distance_km, tx_height_m: float, user_height_m: float):
    """CBSD-to-user median loss used for coverage sizing.

    Beyond 1 km this is the eHATA median loss. Inside 1 km the near-range
    power law is continued down from the 1 km value, never below free space.
    """
    r = np.asarray(distance_km, dtype=float)
    if np.any(r <= 0):
        raise ValueError("distance must be positive")
    terms = EhataTerms.build(frequency_mhz, tx_height_m, user_height_m)
    at_1km = median_loss_db(frequency_mhz, 1.0, tx_height_m, user_height_m)
    near = at_1km + (10.0 * terms.n_low + 20.0) * np.log10(np.minimum(r, 1.0))
    slant_m = np.sqrt((r * 1e3) ** 2 + (tx_height_m - user_height_m) ** 2)
    near = np.maximum(near, free_space_loss(frequency_mhz, slant_m))
    far = median_loss_db(frequency_mhz, np.maximum(r, 1.0), tx_height_m, user_height_m)
    loss = np.where(r < 1.0, near, far)
    return float(loss) if loss.ndim == 0 else loss


def sample_shadowing(model: FadingModel, n: int, rng: np.random.Generator | None = None):
    """n i.i.d. shadowing values in dB.

    Without an explicit ``rng`` a fresh generator is seeded from ``model.seed``,
    so repeated calls with the same model return the same sequence.
    """
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    rng = model.generator() if rng is None else rng
    if model.sigma_db == 0:
        return np.zeros(int(n))
    return rng.normal(0.0, model.sigma_db, int(n))
