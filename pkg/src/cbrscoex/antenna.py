"""Radar azimuth pattern: cosine aperture illumination per ITU-R M.1851."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

_HALF_PI = math.pi / 2
_HALF_POWER = 10.0 ** (-3.0 / 20.0)  # field ratio at the -3 dB points


class Pattern(str, enum.Enum):
    M1851_COSINE = "m1851_cosine"


def cosine_field(u):
    """Normalised far-field of a cosine-tapered aperture, F(0) = 1.

    u = pi * (l / lambda) * sin(phi). The removable singularity at
    u = +/- pi/2 evaluates to pi/4.
    """
    u = np.abs(np.asarray(u, dtype=float))
    denom = _HALF_PI**2 - u**2
    near = np.abs(denom) < 1e-9
    safe = np.where(near, 1.0, denom)
    value = np.where(near, 1.0 / math.pi, np.cos(u) / safe)
    return _HALF_PI**2 * value


def aperture_wavelengths(beamwidth_3db_deg: float) -> float:
    """Aperture length l/lambda giving the requested 3-dB beamwidth."""
    u3 = brentq(lambda u: float(cosine_field(u)) - _HALF_POWER, 1e-6, 3 * _HALF_PI - 1e-6)
    return u3 / (math.pi * math.sin(math.radians(beamwidth_3db_deg / 2.0)))


@dataclass(frozen=True)
class RadarAntenna:
    peak_gain_dbi: float = 33.5
    beamwidth_3db_deg: float = 0.81
    sidelobe_level_dbi: float = 7.3
    pattern: Pattern = Pattern.M1851_COSINE
    aperture_wl: float = field(init=False, repr=False)

    def __post_init__(self):
        if not self.beamwidth_3db_deg > 0:
            raise ValueError("beamwidth_3db_deg must be positive")
        if not self.peak_gain_dbi > self.sidelobe_level_dbi:
            raise ValueError("peak gain must exceed the side-lobe level")
        object.__setattr__(self, "pattern", Pattern(self.pattern))
        object.__setattr__(self, "aperture_wl", aperture_wavelengths(self.beamwidth_3db_deg))

    @property
    def first_null_deg(self) -> float:
        return math.degrees(math.asin(min(1.0, 1.5 / self.aperture_wl)))


def wrap_degrees(angle_deg):
    """Map angles onto [-180, 180)."""
    return (np.asarray(angle_deg, dtype=float) + 180.0) % 360.0 - 180.0


def gain_at(antenna: RadarAntenna, azimuth_offset_deg):
    """Azimuth gain in dBi at an offset from boresight (scalar or array)."""
    phi = np.abs(wrap_degrees(azimuth_offset_deg))
    # behind the aperture plane only the side-lobe floor applies
    gain = gain_from_sine(antenna, np.sin(np.radians(np.minimum(phi, 90.0))), phi < 90.0)
    return float(gain) if gain.ndim == 0 else gain


def floor_onset_u(antenna: RadarAntenna) -> float:
    """Pattern argument beyond which the gain is pinned to the side-lobe floor.

    For u > pi/2, |F(u)| <= (pi**2/4) / (u**2 - pi**2/4), so past the u where
    that bound meets the floor the pattern never rises above it.
    """
    ratio = 10.0 ** ((antenna.sidelobe_level_dbi - antenna.peak_gain_dbi) / 20.0)
    return math.sqrt(_HALF_PI**2 / ratio + _HALF_PI**2)


def gain_from_sine(antenna: RadarAntenna, abs_sin, in_front):
    """Gain in dBi from |sin(offset)| and whether the offset is under 90 degrees."""
    abs_sin = np.asarray(abs_sin, dtype=float)
    u = math.pi * antenna.aperture_wl * abs_sin
    gain = np.full(u.shape, antenna.sidelobe_level_dbi)
    live = np.asarray(in_front) & (u < floor_onset_u(antenna))
    if np.any(live):
        f = np.maximum(np.abs(cosine_field(u[live])), 1e-12)
        gain[live] = np.maximum(antenna.peak_gain_dbi + 20.0 * np.log10(f), antenna.sidelobe_level_dbi)
    return gain
