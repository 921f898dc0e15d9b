"""Echo SNRs, CRLB-based measurement variances and synthetic measurements.

The simulator never processes waveforms: angle, delay and Doppler
estimates are drawn as Gaussians whose variances are the corresponding
Cramer-Rao bounds, which is what a MUSIC + matched-filter front end
would approach at these SNRs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import (
    ArrayGeometry,
    C_LIGHT,
    DegenerateGeometryError,
    steering_vector,
)


@dataclass(frozen=True)
class RadarParams:
    """Echo link budget and receiver constants."""

    ref_gain: float  # linear two-way gain constant beta
    noise_power_w: float
    bandwidth_hz: float
    adc_rate_hz: float
    n_samples: int
    slot_len_s: float

    def __post_init__(self):
        for name in ("ref_gain", "noise_power_w", "bandwidth_hz", "adc_rate_hz", "slot_len_s"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.n_samples < 1:
            raise ValueError("n_samples must be at least 1")


@dataclass(frozen=True)
class Measurement:
    """One noisy radar return: angles, delay, Doppler and their variances."""

    elevation: float
    azimuth: float
    delay: float
    doppler: float
    angle_cov: np.ndarray  # 2x2 covariance of (elevation, azimuth)
    delay_var: float
    doppler_var: float

    def vector(self) -> np.ndarray:
        return np.array([self.elevation, self.azimuth, self.delay, self.doppler])

    def noise_cov(self) -> np.ndarray:
        """Block-diagonal 4x4 measurement covariance."""
        q = np.zeros((4, 4))
        q[:2, :2] = self.angle_cov
        q[2, 2] = self.delay_var
        q[3, 3] = self.doppler_var
        return q


def reflection_coeff(ref_gain: float, distance: float) -> float:
    """Two-way amplitude sqrt(beta)/d^2 of the echo."""
    if distance <= 0:
        raise ValueError("distance must be positive")
    return math.sqrt(ref_gain) / distance**2


def omni_echo_snr(power: float, refl: float, noise_power: float) -> float:
    """Echo SNR of an omnidirectional (unbeamformed) transmission."""
    return power * refl**2 / noise_power


def directional_echo_snr(cov_mats, steer: np.ndarray, refl: float, noise_power: float) -> float:
    """Echo SNR under a set of transmit covariances: (g^2/sigma^2) * sum of
    beampattern gains toward the target direction."""
    gain = 0.0
    for w in cov_mats:
        q = np.real(np.vdot(steer, w @ steer))
        if q < -1e-9 * max(np.real(np.trace(w)), 1.0):
            raise ValueError("transmit covariance is not PSD (negative beam gain)")
        gain += max(q, 0.0)
    return refl**2 * gain / noise_power


def receive_bf_loss(
    geom: ArrayGeometry,
    est_elevation: float,
    est_azimuth: float,
    true_elevation: float,
    true_azimuth: float,
) -> float:
    """Alignment factor in [0, 1] of the receive combiner built at the
    estimated angles against the true arrival direction."""
    b_est = steering_vector(geom, est_elevation, est_azimuth)
    b_true = steering_vector(geom, true_elevation, true_azimuth)
    return abs(np.vdot(b_est, b_true)) ** 2 / geom.size**2


def weighted_snr(snr0: float, factor: float, m_r: int) -> float:
    """Post-combining SNR: perfect alignment recovers the full array gain."""
    return snr0 * m_r * factor


def crlb_spatial(n_samples: int, m_r: int, snr0: float) -> float:
    """CRLB of each spatial frequency from the subspace angle estimator."""
    if n_samples < 1 or m_r < 1 or snr0 <= 0:
        raise ValueError("sample count, array size and SNR must be positive")
    return 6.0 / (n_samples**2 * m_r * snr0)


def _spatial_jacobian(elevation: float, azimuth: float) -> np.ndarray:
    """d(elevation, azimuth)/d(a, b) evaluated analytically."""
    st_, ct = math.sin(elevation), math.cos(elevation)
    if abs(st_) < 1e-9 or abs(ct) < 1e-9:
        raise DegenerateGeometryError(
            f"angle CRLB is singular at elevation {elevation:.4f} rad"
        )
    sp, cp = math.sin(azimuth), math.cos(azimuth)
    return np.array(
        [
            [cp / (math.pi * ct), sp / (math.pi * ct)],
            [-sp / (math.pi * st_), cp / (math.pi * st_)],
        ]
    )


def crlb_angles(elevation: float, azimuth: float, c_a: float, c_b: float) -> np.ndarray:
    """2x2 covariance of (elevation, azimuth) mapped from the spatial-frequency
    CRLBs through the analytic conversion Jacobian."""
    j = _spatial_jacobian(elevation, azimuth)
    cov = j @ np.diag([c_a, c_b]) @ j.T
    return 0.5 * (cov + cov.T)


def crlb_delay_doppler(
    bandwidth_hz: float, adc_rate_hz: float, slot_len_s: float, snr1: float
) -> tuple[float, float]:
    """Matched-filter CRLBs of delay and Doppler at post-combining SNR."""
    if min(bandwidth_hz, adc_rate_hz, slot_len_s, snr1) <= 0:
        raise ValueError("all inputs must be positive")
    chi = snr1 * slot_len_s * bandwidth_hz
    delay_var = 3.0 / (2.0 * math.pi**2 * bandwidth_hz * chi)
    doppler_var = 1.0 / ((2.0 * math.pi) ** 2 * slot_len_s**2 * adc_rate_hz * chi)
    return delay_var, doppler_var


def _chol2(cov: np.ndarray) -> np.ndarray:
    """Cholesky-like square root of a 2x2 PSD matrix, tolerant of zeros."""
    a, b, c = cov[0, 0], cov[0, 1], cov[1, 1]
    if a <= 0.0:
        if a < -1e-30:
            raise ValueError("angle covariance not PSD")
        return np.array([[0.0, 0.0], [0.0, math.sqrt(max(c, 0.0))]])
    l11 = math.sqrt(a)
    l21 = b / l11
    rem = c - l21 * l21
    return np.array([[l11, 0.0], [l21, math.sqrt(max(rem, 0.0))]])


def synthesize_measurement(
    true_elevation: float,
    true_azimuth: float,
    true_distance: float,
    true_doppler: float,
    angle_cov: np.ndarray,
    delay_var: float,
    doppler_var: float,
    rng: np.random.Generator,
) -> Measurement:
    """Draw one measurement around the true geometry: correlated angle noise,
    independent delay and Doppler noise."""
    ang_noise = _chol2(np.asarray(angle_cov, dtype=float)) @ rng.standard_normal(2)
    delay = 2.0 * true_distance / C_LIGHT + math.sqrt(delay_var) * rng.standard_normal()
    doppler = true_doppler + math.sqrt(doppler_var) * rng.standard_normal()
    return Measurement(
        elevation=true_elevation + ang_noise[0],
        azimuth=true_azimuth + ang_noise[1],
        delay=delay,
        doppler=doppler,
        angle_cov=np.asarray(angle_cov, dtype=float),
        delay_var=delay_var,
        doppler_var=doppler_var,
    )
