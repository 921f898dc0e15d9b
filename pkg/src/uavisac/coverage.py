"""Beam coverage: 99% angular confidence ellipses and their sample sets.

The predicted angular error of a track is a 2-D Gaussian; its confidence
ellipse at the configured level becomes the region the transmit beam must
cover, discretized into a finite point set for the beamforming constraint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import DegenerateGeometryError
from .tracking import MobileTrackState, _cart_to_spherical_jacobian


@dataclass(frozen=True)
class CoverageEllipse:
    center_elevation: float
    center_azimuth: float
    semi_major: float
    semi_minor: float
    orientation: float
    confidence_quantile: float

    def __post_init__(self):
        if not (self.semi_major >= self.semi_minor > 0.0):
            raise ValueError("ellipse semi-axes must satisfy major >= minor > 0")
        if self.confidence_quantile <= 0.0:
            raise ValueError("confidence quantile must be positive")

    @property
    def area(self) -> float:
        return math.pi * self.semi_major * self.semi_minor

    def contains(self, points: np.ndarray, slack: float = 1e-9) -> np.ndarray:
        """Ellipse-inequality membership test for an (N, 2) array of
        (elevation, azimuth) points."""
        pts = np.atleast_2d(points)
        de = pts[:, 0] - self.center_elevation
        da = pts[:, 1] - self.center_azimuth
        c, s = math.cos(self.orientation), math.sin(self.orientation)
        u = de * c + da * s
        v = -de * s + da * c
        return (u / self.semi_major) ** 2 + (v / self.semi_minor) ** 2 <= 1.0 + slack


@dataclass(frozen=True)
class CoverageSamples:
    points: np.ndarray  # (N, 2) of (elevation, azimuth)

    @property
    def count(self) -> int:
        return len(self.points)


def angle_cov_static(mse: np.ndarray) -> np.ndarray:
    """Angular block of a spherical-state prediction covariance."""
    mse = np.asarray(mse)
    if mse.shape != (5, 5):
        raise ValueError("expected a 5x5 prediction covariance")
    block = mse[:2, :2]
    return 0.5 * (block + block.T)


def angle_cov_mobile(mse: np.ndarray, track: MobileTrackState) -> np.ndarray:
    """Angular covariance of a Cartesian-state prediction, linearized at the
    predicted relative position."""
    mse = np.asarray(mse)
    if mse.shape != (5, 5):
        raise ValueError("expected a 5x5 prediction covariance")
    j = _cart_to_spherical_jacobian(track.rel)[:2, :]
    cov = j @ mse[:3, :3] @ j.T
    return 0.5 * (cov + cov.T)


def chi2_quantile_2dof(confidence: float) -> float:
    """Exact 2-dof chi-square quantile: -2 ln(1 - confidence)."""
    if not 0.0 < confidence < 1.0:
        raise ValueError("confidence must lie strictly between 0 and 1")
    return -2.0 * math.log(1.0 - confidence)


def confidence_ellipse(
    cov: np.ndarray,
    center_elevation: float,
    center_azimuth: float,
    confidence: float = 0.99,
) -> CoverageEllipse:
    """Level set of the angular Gaussian containing `confidence` mass."""
    cov = np.asarray(cov, dtype=float)
    if cov.shape != (2, 2):
        raise ValueError("expected a 2x2 angular covariance")
    if not np.allclose(cov, cov.T, atol=1e-12):
        raise ValueError("covariance must be symmetric")
    vals, vecs = np.linalg.eigh(cov)
    if vals[1] <= 0.0:
        raise DegenerateGeometryError("angular covariance has no positive spread")
    vals = np.maximum(vals, 1e-18 * vals[1])
    q = chi2_quantile_2dof(confidence)
    principal = vecs[:, 1]
    if principal[0] < 0 or (principal[0] == 0 and principal[1] < 0):
        principal = -principal
    if abs(vals[1] - vals[0]) <= 1e-12 * vals[1]:
        orientation = 0.0  # isotropic: orientation is a convention
    else:
        orientation = math.atan2(principal[1], principal[0])
    return CoverageEllipse(
        center_elevation=center_elevation,
        center_azimuth=center_azimuth,
        semi_major=math.sqrt(q * vals[1]),
        semi_minor=math.sqrt(q * vals[0]),
        orientation=orientation,
        confidence_quantile=q,
    )


def sample_coverage(
    ellipse: CoverageEllipse, n_boundary: int = 16, n_interior: int = 8
) -> CoverageSamples:
    """Discretize the ellipse: the 4 axis endpoints, n_boundary points on the
    rim and n_interior points on a half-scale concentric ring."""
    local = [
        (ellipse.semi_major, 0.0),
        (-ellipse.semi_major, 0.0),
        (0.0, ellipse.semi_minor),
        (0.0, -ellipse.semi_minor),
    ]
    for k in range(n_boundary):
        t = 2.0 * math.pi * k / max(n_boundary, 1)
        local.append((ellipse.semi_major * math.cos(t), ellipse.semi_minor * math.sin(t)))
    for k in range(n_interior):
        # stagger the inner ring against the rim
        t = 2.0 * math.pi * (k + 0.5) / max(n_interior, 1)
        local.append(
            (0.5 * ellipse.semi_major * math.cos(t), 0.5 * ellipse.semi_minor * math.sin(t))
        )
    c, s = math.cos(ellipse.orientation), math.sin(ellipse.orientation)
    seen = set()
    points = []
    for u, v in local:
        de = u * c - v * s
        da = u * s + v * c
        pt = (ellipse.center_elevation + de, ellipse.center_azimuth + da)
        key = (round(pt[0], 15), round(pt[1], 15))
        if key not in seen:
            seen.add(key)
            points.append(pt)
    return CoverageSamples(points=np.array(points))
