"""Incumbent radar constants, noise, echo power and the INR-derived thresholds."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .antenna import RadarAntenna
from .propagation import SPEED_OF_LIGHT

BOLTZMANN = 1.38e-23  # J/K, as tabulated for the radar


def to_dbm(watts):
    return 10.0 * np.log10(np.asarray(watts, dtype=float) / 1e-3)


@dataclass(frozen=True)
class RadarParams:
    frequency_mhz: float = 3600.0
    wavelength_m: float = 0.083
    tx_power_w: float = 1.32e6
    antenna: RadarAntenna = field(default_factory=RadarAntenna)
    height_m: float = 8.0
    bandwidth_hz: float = 10e6
    noise_figure_db: float = 3.0
    rcs_m2: float = 100.0
    inr_threshold_db: float = -6.0
    temperature_k: float = 290.0
    boltzmann: float = BOLTZMANN

    def __post_init__(self):
        for name in (
            "frequency_mhz",
            "wavelength_m",
            "tx_power_w",
            "height_m",
            "bandwidth_hz",
            "rcs_m2",
            "temperature_k",
            "boltzmann",
        ):
            value = getattr(self, name)
            if not value > 0:
                raise ValueError(f"radar {name} must be positive, got {value!r}")
        if self.noise_figure_db < 0:
            raise ValueError("radar noise_figure_db must be non-negative")
        nominal = SPEED_OF_LIGHT / (self.frequency_mhz * 1e6)
        if abs(self.wavelength_m - nominal) > 0.01 * nominal:
            raise ValueError(
                f"wavelength {self.wavelength_m} m is inconsistent with "
                f"{self.frequency_mhz} MHz (expected ~{nominal:.4f} m)"
            )


@dataclass(frozen=True)
class FdrProfile:
    """Frequency-dependent rejection of the radar receiver.

    ``table`` maps channel offset (MHz) to rejection (dB, >= 0). Rejection is
    a positive attenuation here; :attr:`gain_db` gives the equivalent negative
    gain applied to interference.
    """

    table: tuple[tuple[float, float], ...]
    channel_offset_mhz: float

    def __post_init__(self):
        rows = tuple(sorted((float(o), float(x)) for o, x in dict(self.table).items()))
        if not rows:
            raise ValueError("FDR table is empty")
        if any(x < 0 for _, x in rows):
            raise ValueError("FDR rejection values must be >= 0 dB")
        object.__setattr__(self, "table", rows)

    @classmethod
    def constant(cls, rejection_db: float, channel_offset_mhz: float = 10.0):
        return cls(((channel_offset_mhz, rejection_db),), channel_offset_mhz)

    @property
    def rejection_db(self) -> float:
        offsets, values = zip(*self.table)
        return float(np.interp(abs(self.channel_offset_mhz), offsets, values))

    @property
    def gain_db(self) -> float:
        return -self.rejection_db


def noise_power_dbm(params: RadarParams) -> float:
    ktb = params.boltzmann * params.temperature_k * params.bandwidth_hz
    return float(to_dbm(ktb)) + params.noise_figure_db


def target_return_power_dbm(params: RadarParams, target_range_m) -> float:
    """Median echo power P_S G_T Omega lambda^2 / ((4 pi)^3 R^4)."""
    r = np.asarray(target_range_m, dtype=float)
    if np.any(r <= 0):
        raise ValueError("target range must be positive")
    g = 10.0 ** (params.antenna.peak_gain_dbi / 10.0)
    watts = (
        params.tx_power_w * g * params.rcs_m2 * params.wavelength_m**2
        / ((4.0 * math.pi) ** 3 * r**4)
    )
    out = to_dbm(watts)
    return float(out) if out.ndim == 0 else out


def snr_db(params: RadarParams, target_range_m):
    return target_return_power_dbm(params, target_range_m) - noise_power_dbm(params)


def sinr_threshold(params: RadarParams, target_range_m):
    """Lowest SINR (dB) compatible with the INR protection criterion."""
    inflation = 10.0 * math.log10(1.0 + 10.0 ** (params.inr_threshold_db / 10.0))
    return snr_db(params, target_range_m) - inflation


def max_tolerable_interference_dbm(params: RadarParams, override_dbm: float | None = None) -> float:
    """Interference ceiling I_th: noise plus INR threshold, unless overridden."""
    if override_dbm is not None:
        return float(override_dbm)
    return noise_power_dbm(params) + params.inr_threshold_db
