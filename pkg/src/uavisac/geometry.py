"""Array geometry, steering vectors, LoS channels and angle conversions.

Conventions used throughout the package:

* elevation is measured from the UAV's downward vertical axis, so a user
  directly below the UAV sits at elevation 0 and the horizon at pi/2;
* azimuth is the quadrant-aware atan2 of the user-minus-UAV horizontal
  offset, in (-pi, pi];
* all angles are radians, all distances metres, all powers watts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

C_LIGHT = 299_792_458.0


class DegenerateGeometryError(ValueError):
    """Raised where a formula is singular (coincident points, vertical look)."""


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def linear_to_db(x: float) -> float:
    return 10.0 * math.log10(x)


def wrap_angle(x):
    """Wrap angle(s) into (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(x), 2.0 * np.pi)


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform planar array with rows x cols elements."""

    rows: int
    cols: int
    spacing_wavelengths: float = 0.5

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("array must have at least one row and one column")
        if self.spacing_wavelengths <= 0:
            raise ValueError("antenna spacing ratio must be positive")

    @property
    def size(self) -> int:
        return self.rows * self.cols


@dataclass(frozen=True)
class RadioParams:
    """Carrier and link-budget constants for the communication signal."""

    carrier_freq_hz: float
    noise_power_w: float
    ref_gain: float  # linear power gain at the 1 m reference distance
    path_loss_exponent: float = 1.0

    def __post_init__(self):
        if self.carrier_freq_hz <= 0 or self.noise_power_w <= 0 or self.ref_gain <= 0:
            raise ValueError("carrier frequency, noise power and reference gain must be positive")

    @property
    def wavelength_m(self) -> float:
        return C_LIGHT / self.carrier_freq_hz


@dataclass(frozen=True)
class Position3:
    x: float
    y: float
    z: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)


@dataclass(frozen=True)
class AngleDistance:
    elevation: float
    azimuth: float
    distance: float


def steering_vector(geom: ArrayGeometry, elevation: float, azimuth: float) -> np.ndarray:
    """UPA steering vector, Kronecker of the row (cos-azimuth) and column
    (sin-azimuth) phase ramps; row index varies in the outer factor."""
    phase = -2j * np.pi * geom.spacing_wavelengths * math.sin(elevation)
    ax = np.exp(phase * math.cos(azimuth) * np.arange(geom.rows))
    ay = np.exp(phase * math.sin(azimuth) * np.arange(geom.cols))
    return np.kron(ax, ay)


def angles_and_distance(uav: Position3, user: Position3) -> AngleDistance:
    """Elevation/azimuth/range of `user` as seen from `uav`."""
    dx = user.x - uav.x
    dy = user.y - uav.y
    dz = user.z - uav.z
    d = math.sqrt(dx * dx + dy * dy + dz * dz)
    if d == 0.0:
        raise DegenerateGeometryError("UAV and user positions coincide")
    if dz >= 0.0:
        raise ValueError("UAV must be strictly above the user")
    horizontal = math.hypot(dx, dy)
    elevation = math.atan2(horizontal, -dz)
    azimuth = math.atan2(dy, dx)
    return AngleDistance(elevation=elevation, azimuth=azimuth, distance=d)


def path_loss_db(freq_mhz: float, dist_km: float, exponent: float = 1.0) -> float:
    """Reference path loss in dB for a carrier in MHz and a distance in km."""
    if freq_mhz <= 0 or dist_km <= 0:
        raise ValueError("frequency and distance must be positive")
    return 32.4 + 20.0 * math.log10(freq_mhz) + 20.0 * exponent * math.log10(dist_km)


def channel_vector(radio: RadioParams, geom: ArrayGeometry, ad: AngleDistance) -> np.ndarray:
    """LoS downlink channel: amplitude sqrt(ref_gain)/d, spherical phase,
    steering vector at the link angles."""
    if ad.distance <= 0:
        raise DegenerateGeometryError("channel requires a positive distance")
    amp = math.sqrt(radio.ref_gain) / ad.distance
    phase = np.exp(2j * np.pi * ad.distance / radio.wavelength_m)
    return amp * phase * steering_vector(geom, ad.elevation, ad.azimuth)


def spatial_frequencies(elevation: float, azimuth: float) -> tuple[float, float]:
    """Angles -> spatial frequencies (a, b) of the half-wavelength UPA."""
    s = math.pi * math.sin(elevation)
    return s * math.cos(azimuth), s * math.sin(azimuth)


def angles_from_spatial(a: float, b: float) -> tuple[float, float]:
    """Inverse of :func:`spatial_frequencies` on elevation in [0, pi/2)."""
    r = math.hypot(a, b)
    if r > math.pi * (1.0 + 1e-12):
        raise ValueError(f"spatial frequencies out of range: |({a}, {b})| > pi")
    elevation = math.asin(min(r / math.pi, 1.0))
    azimuth = math.atan2(b, a) if r > 0.0 else 0.0
    return elevation, azimuth
