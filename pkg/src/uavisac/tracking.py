"""Evolution and measurement models, analytic Jacobians and the EKF cycle.

Two state parameterizations are used, both 5-dimensional:

* static frame (hovering UAV): [elevation, azimuth, range, speed, heading]
  of the user relative to the UAV;
* mobile frame (moving UAV): [x, y, z, speed, heading] where (x, y, z) is
  user-minus-UAV in Cartesian coordinates (z < 0 for a user below).

Heading is the direction of the user's horizontal velocity.  Tracks carry
the state vector and a 5x5 covariance; predict/update mutate nothing and
return new track objects.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .geometry import C_LIGHT, DegenerateGeometryError, wrap_angle
from .sensing import Measurement

# state component indices, shared by both frames where meaningful
SPEED, HEADING = 3, 4


class FilterNumericsError(RuntimeError):
    """Innovation covariance could not be inverted reliably."""


@dataclass(frozen=True)
class StaticTrackState:
    """Spherical-state track relative to a hovering UAV."""

    state: np.ndarray  # [elevation, azimuth, range, speed, heading]
    cov: np.ndarray  # 5x5

    def __post_init__(self):
        if self.state.shape != (5,) or self.cov.shape != (5, 5):
            raise ValueError("static track needs a 5-state and a 5x5 covariance")

    @property
    def elevation(self):
        return self.state[0]

    @property
    def azimuth(self):
        return self.state[1]

    @property
    def range(self):
        return self.state[2]

    @property
    def speed(self):
        return self.state[3]

    @property
    def heading(self):
        return self.state[4]


@dataclass(frozen=True)
class MobileTrackState:
    """Cartesian relative-position track for a moving UAV."""

    state: np.ndarray  # [x, y, z, speed, heading], user minus UAV
    cov: np.ndarray

    def __post_init__(self):
        if self.state.shape != (5,) or self.cov.shape != (5, 5):
            raise ValueError("mobile track needs a 5-state and a 5x5 covariance")
        if np.dot(self.state[:3], self.state[:3]) <= 0.0:
            raise ValueError("relative position must be nonzero")

    @property
    def rel(self):
        return self.state[:3]

    @property
    def speed(self):
        return self.state[3]

    @property
    def heading(self):
        return self.state[4]


# ---------------------------------------------------------------------------
# static-frame model


def static_evolve(state: np.ndarray, dt: float) -> np.ndarray:
    """One-slot deterministic advance of the spherical state."""
    theta, phi, d, v, phiv = state
    st, ct = math.sin(theta), math.cos(theta)
    if abs(st) < 1e-12:
        raise DegenerateGeometryError("azimuth evolution is singular at elevation 0")
    if d <= 0:
        raise ValueError("range must be positive")
    dphi = phi - phiv
    cd, sd = math.cos(dphi), math.sin(dphi)
    step = v * dt
    return np.array(
        [
            theta + step * cd * ct / d,
            phi - step * sd / (st * d),
            d + step * cd * st,
            v,
            phiv,
        ]
    )


def static_evolve_jacobian(state: np.ndarray, dt: float) -> np.ndarray:
    theta, phi, d, v, phiv = state
    st, ct = math.sin(theta), math.cos(theta)
    if abs(st) < 1e-12:
        raise DegenerateGeometryError("azimuth evolution is singular at elevation 0")
    dphi = phi - phiv
    cd, sd = math.cos(dphi), math.sin(dphi)
    step = v * dt
    f = np.eye(5)
    # elevation row
    f[0, 0] += -step * cd * st / d
    f[0, 1] = -step * sd * ct / d
    f[0, 2] = -step * cd * ct / d**2
    f[0, 3] = dt * cd * ct / d
    f[0, 4] = step * sd * ct / d
    # azimuth row
    f[1, 0] = step * sd * ct / (st**2 * d)
    f[1, 1] += -step * cd / (st * d)
    f[1, 2] = step * sd / (st * d**2)
    f[1, 3] = -dt * sd / (st * d)
    f[1, 4] = step * cd / (st * d)
    # range row
    f[2, 0] = step * cd * ct
    f[2, 1] = -step * sd * st
    f[2, 3] = dt * cd * st
    f[2, 4] = step * sd * st
    return f


def static_measure(state: np.ndarray, wavelength: float) -> np.ndarray:
    """Noise-free measurement [elevation, azimuth, delay, Doppler]."""
    theta, phi, d, v, phiv = state
    doppler = 2.0 * v * math.cos(phi - phiv) * math.sin(theta) / wavelength
    return np.array([theta, phi, 2.0 * d / C_LIGHT, doppler])


def static_measure_jacobian(state: np.ndarray, wavelength: float) -> np.ndarray:
    theta, phi, d, v, phiv = state
    st, ct = math.sin(theta), math.cos(theta)
    dphi = phi - phiv
    cd, sd = math.cos(dphi), math.sin(dphi)
    h = np.zeros((4, 5))
    h[0, 0] = 1.0
    h[1, 1] = 1.0
    h[2, 2] = 2.0 / C_LIGHT
    h[3, 0] = 2.0 * v * cd * ct / wavelength
    h[3, 1] = -2.0 * v * sd * st / wavelength
    h[3, 3] = 2.0 * cd * st / wavelength
    h[3, 4] = 2.0 * v * sd * st / wavelength
    return h


# ---------------------------------------------------------------------------
# mobile-frame model


def mobile_evolve(
    state: np.ndarray, uav_speed: float, uav_heading: float, dt: float
) -> np.ndarray:
    """Relative position advances by user motion minus UAV motion."""
    x, y, z, v, phiv = state
    return np.array(
        [
            x + v * dt * math.cos(phiv) - uav_speed * dt * math.cos(uav_heading),
            y + v * dt * math.sin(phiv) - uav_speed * dt * math.sin(uav_heading),
            z,
            v,
            phiv,
        ]
    )


def mobile_evolve_jacobian(state: np.ndarray, uav_speed: float, uav_heading: float, dt: float) -> np.ndarray:
    _, _, _, v, phiv = state
    f = np.eye(5)
    f[0, 3] = dt * math.cos(phiv)
    f[0, 4] = -v * dt * math.sin(phiv)
    f[1, 3] = dt * math.sin(phiv)
    f[1, 4] = v * dt * math.cos(phiv)
    return f


def mobile_measure(state: np.ndarray, wavelength: float) -> np.ndarray:
    """Noise-free measurement from the Cartesian relative state."""
    x, y, z, v, phiv = state
    d = math.sqrt(x * x + y * y + z * z)
    if d <= 0:
        raise DegenerateGeometryError("relative distance is zero")
    rho = math.hypot(x, y)
    theta = math.atan2(rho, abs(z))
    phi = math.atan2(y, x)
    doppler = 2.0 * v / wavelength * (x * math.cos(phiv) + y * math.sin(phiv)) / d
    return np.array([theta, phi, 2.0 * d / C_LIGHT, doppler])


def mobile_measure_jacobian(state: np.ndarray, wavelength: float) -> np.ndarray:
    x, y, z, v, phiv = state
    d2 = x * x + y * y + z * z
    d = math.sqrt(d2)
    rho = math.hypot(x, y)
    if d <= 0 or rho <= 0:
        raise DegenerateGeometryError("measurement Jacobian is singular at this geometry")
    h = np.zeros((4, 5))
    # elevation = atan2(rho, |z|); users sit below the UAV so z < 0, |z| = -z
    az = abs(z)
    h[0, 0] = x * az / (rho * d2)
    h[0, 1] = y * az / (rho * d2)
    h[0, 2] = -math.copysign(1.0, z) * rho / d2
    # azimuth
    h[1, 0] = -y / rho**2
    h[1, 1] = x / rho**2
    # delay
    h[2, 0] = 2.0 * x / (C_LIGHT * d)
    h[2, 1] = 2.0 * y / (C_LIGHT * d)
    h[2, 2] = 2.0 * z / (C_LIGHT * d)
    # Doppler
    cp, sp = math.cos(phiv), math.sin(phiv)
    proj = x * cp + y * sp
    k = 2.0 * v / wavelength
    h[3, 0] = k * (cp / d - proj * x / d**3)
    h[3, 1] = k * (sp / d - proj * y / d**3)
    h[3, 2] = -k * proj * z / d**3
    h[3, 3] = 2.0 * proj / (wavelength * d)
    h[3, 4] = k * (-x * sp + y * cp) / d
    return h


# ---------------------------------------------------------------------------
# coordinate conversions between the two frames

def spherical_to_cart(theta: float, phi: float, d: float) -> np.ndarray:
    """Spherical (downward-datum) to Cartesian user-minus-UAV offset."""
    st = math.sin(theta)
    return np.array([d * st * math.cos(phi), d * st * math.sin(phi), -d * math.cos(theta)])


def cart_to_spherical(rel: np.ndarray) -> tuple[float, float, float]:
    x, y, z = rel
    d = math.sqrt(x * x + y * y + z * z)
    if d <= 0:
        raise DegenerateGeometryError("zero offset has no angles")
    return math.atan2(math.hypot(x, y), -z), math.atan2(y, x), d


def _spherical_to_cart_jacobian(theta: float, phi: float, d: float) -> np.ndarray:
    st, ct = math.sin(theta), math.cos(theta)
    cp, sp = math.cos(phi), math.sin(phi)
    return np.array(
        [
            [d * ct * cp, -d * st * sp, st * cp],
            [d * ct * sp, d * st * cp, st * sp],
            [d * st, 0.0, -ct],
        ]
    )


def _cart_to_spherical_jacobian(rel: np.ndarray) -> np.ndarray:
    x, y, z = rel
    d2 = x * x + y * y + z * z
    d = math.sqrt(d2)
    rho = math.hypot(x, y)
    if rho <= 0 or d <= 0:
        raise DegenerateGeometryError("angle Jacobian is singular directly below the UAV")
    return np.array(
        [
            [x * (-z) / (rho * d2), y * (-z) / (rho * d2), rho / d2],
            [-y / rho**2, x / rho**2, 0.0],
            [x / d, y / d, z / d],
        ]
    )


def static_to_mobile_track(
    track: StaticTrackState, from_uav_xy: np.ndarray, to_uav_xy: np.ndarray
) -> MobileTrackState:
    """Re-express a spherical track relative to another UAV at the same height."""
    rel = spherical_to_cart(track.elevation, track.azimuth, track.range)
    shift = np.asarray(from_uav_xy, dtype=float) - np.asarray(to_uav_xy, dtype=float)
    new_rel = rel + np.array([shift[0], shift[1], 0.0])
    j = np.eye(5)
    j[:3, :3] = _spherical_to_cart_jacobian(track.elevation, track.azimuth, track.range)
    cov = j @ track.cov @ j.T
    state = np.concatenate([new_rel, [track.speed, track.heading]])
    return MobileTrackState(state=state, cov=0.5 * (cov + cov.T))


def mobile_to_static_track(
    track: MobileTrackState, from_uav_xy: np.ndarray, to_uav_xy: np.ndarray
) -> StaticTrackState:
    shift = np.asarray(from_uav_xy, dtype=float) - np.asarray(to_uav_xy, dtype=float)
    rel = track.rel + np.array([shift[0], shift[1], 0.0])
    theta, phi, d = cart_to_spherical(rel)
    j = np.eye(5)
    j[:3, :3] = _cart_to_spherical_jacobian(rel)
    cov = j @ track.cov @ j.T
    state = np.array([theta, phi, d, track.speed, track.heading])
    return StaticTrackState(state=state, cov=0.5 * (cov + cov.T))


def shift_mobile_track(track: MobileTrackState, from_uav_xy, to_uav_xy) -> MobileTrackState:
    shift = np.asarray(from_uav_xy, dtype=float) - np.asarray(to_uav_xy, dtype=float)
    state = track.state.copy()
    state[0] += shift[0]
    state[1] += shift[1]
    return replace(track, state=state)


# ---------------------------------------------------------------------------
# EKF core

_ANGLE_RESIDUALS = (0, 1)  # elevation, azimuth rows of the measurement


def ekf_predict_vec(
    state: np.ndarray, cov: np.ndarray, evolve, jacobian, q_diag: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Generic EKF time update; Q enters additively per slot."""
    f = jacobian(state)
    mean = evolve(state)
    pred = f @ cov @ f.T + np.diag(q_diag)
    return mean, 0.5 * (pred + pred.T)


def _numerical_hessians(fn, x: np.ndarray, n_out: int, step: float = 1e-4) -> list[np.ndarray]:
    """Central-difference Hessian of each output component of fn."""
    n = len(x)
    hess = [np.zeros((n, n)) for _ in range(n_out)]
    steps = [step * max(1.0, abs(xi)) for xi in x]
    for j in range(n):
        for k in range(j, n):
            hj, hk = steps[j], steps[k]
            xpp, xpm, xmp, xmm = x.copy(), x.copy(), x.copy(), x.copy()
            xpp[j] += hj
            xpp[k] += hk
            xpm[j] += hj
            xpm[k] -= hk
            xmp[j] -= hj
            xmp[k] += hk
            xmm[j] -= hj
            xmm[k] -= hk
            val = (fn(xpp) - fn(xpm) - fn(xmp) + fn(xmm)) / (4.0 * hj * hk)
            for i in range(n_out):
                hess[i][j, k] = val[i]
                hess[i][k, j] = val[i]
    return hess


def ekf_update_vec(
    state: np.ndarray,
    cov: np.ndarray,
    z: np.ndarray,
    measure,
    jacobian,
    noise_cov: np.ndarray,
    wrap_rows=_ANGLE_RESIDUALS,
    wrap_state=(),
    second_order: bool = True,
) -> tuple[np.ndarray, np.ndarray]:
    """EKF measurement update with angle-wrapped residuals.

    The matched-filter Doppler CRLB sits ~10 orders below the prior spread,
    so a purely first-order update is badly overconfident; with
    `second_order` the innovation mean and covariance get the standard
    Hessian compensation terms, which keeps the filter usable at these
    precisions.  The innovation matrix also spans ~15 decades, hence the
    diagonal whitening before the solve; Joseph form keeps the posterior PSD.
    """
    h = jacobian(state)
    pred = measure(state)
    noise_eff = np.array(noise_cov, dtype=float, copy=True)
    bias = np.zeros(len(z))
    if second_order:
        hessians = _numerical_hessians(measure, state, len(z))
        hp = [hs @ cov for hs in hessians]
        for i in range(len(z)):
            bias[i] = 0.5 * np.trace(hp[i])
            for j in range(i, len(z)):
                c2 = 0.5 * np.sum(hp[i].T * hp[j])  # tr(Hi P Hj P)
                noise_eff[i, j] += c2
                noise_eff[j, i] = noise_eff[i, j]
    s = h @ cov @ h.T + noise_eff
    s = 0.5 * (s + s.T)
    scale = np.sqrt(np.diag(s))
    if not np.all(np.isfinite(scale)) or np.any(scale <= 0.0):
        raise FilterNumericsError(f"innovation covariance has bad diagonal: {np.diag(s)}")
    sw = s / scale[:, None] / scale[None, :]
    cond = np.linalg.cond(sw)
    if not np.isfinite(cond) or cond > 1e12:
        raise FilterNumericsError(f"innovation covariance ill-conditioned: cond={cond:.3e}")
    resid = z - pred - bias
    for idx in wrap_rows:
        resid[idx] = wrap_angle(resid[idx])
    # gain K = P H^T S^-1 through the whitened system
    pht = cov @ h.T
    gain = np.linalg.solve(sw, (pht / scale[None, :]).T).T / scale[None, :]
    new_state = state + gain @ resid
    for idx in wrap_state:
        new_state[idx] = wrap_angle(new_state[idx])
    ikh = np.eye(len(state)) - gain @ h
    post = ikh @ cov @ ikh.T + gain @ noise_eff @ gain.T
    return new_state, _clamp_psd(0.5 * (post + post.T))


def _clamp_psd(cov: np.ndarray, floor_rel: float = 1e-14) -> np.ndarray:
    """Clamp eigenvalues to a tiny positive floor relative to the trace.

    The delay/Doppler CRLBs are many orders tighter than the angular ones,
    so the posterior routinely collapses below float64 resolution along the
    measured combination; the clamp keeps it invertible.
    """
    vals, vecs = np.linalg.eigh(cov)
    tr = max(np.sum(vals), 0.0)
    if tr <= 0.0:
        return cov
    floor = floor_rel * tr
    if vals[0] >= floor:
        return cov
    vals = np.maximum(vals, floor)
    return (vecs * vals) @ vecs.T


def ekf_predict_static(track: StaticTrackState, q_diag: np.ndarray, dt: float) -> StaticTrackState:
    mean, cov = ekf_predict_vec(
        track.state,
        track.cov,
        lambda s: static_evolve(s, dt),
        lambda s: static_evolve_jacobian(s, dt),
        q_diag,
    )
    return StaticTrackState(state=mean, cov=cov)


def ekf_update_static(
    track: StaticTrackState, meas: Measurement, wavelength: float, second_order: bool = True
) -> StaticTrackState:
    state, cov = ekf_update_vec(
        track.state,
        track.cov,
        meas.vector(),
        lambda s: static_measure(s, wavelength),
        lambda s: static_measure_jacobian(s, wavelength),
        meas.noise_cov(),
        wrap_state=(1, 4),
        second_order=second_order,
    )
    return StaticTrackState(state=state, cov=cov)


def ekf_predict_mobile(
    track: MobileTrackState, q_diag: np.ndarray, uav_speed: float, uav_heading: float, dt: float
) -> MobileTrackState:
    mean, cov = ekf_predict_vec(
        track.state,
        track.cov,
        lambda s: mobile_evolve(s, uav_speed, uav_heading, dt),
        lambda s: mobile_evolve_jacobian(s, uav_speed, uav_heading, dt),
        q_diag,
    )
    return MobileTrackState(state=mean, cov=cov)


def ekf_update_mobile(
    track: MobileTrackState, meas: Measurement, wavelength: float, second_order: bool = True
) -> MobileTrackState:
    state, cov = ekf_update_vec(
        track.state,
        track.cov,
        meas.vector(),
        lambda s: mobile_measure(s, wavelength),
        lambda s: mobile_measure_jacobian(s, wavelength),
        meas.noise_cov(),
        wrap_state=(4,),
        second_order=second_order,
    )
    return MobileTrackState(state=state, cov=cov)


# ---------------------------------------------------------------------------
# two-slot track initialization


def _measured_horizontal(meas: Measurement) -> tuple[np.ndarray, np.ndarray]:
    """Horizontal UAV-relative position implied by one measurement and its
    Jacobian with respect to (elevation, azimuth, delay)."""
    d = C_LIGHT * meas.delay / 2.0
    st, ct = math.sin(meas.elevation), math.cos(meas.elevation)
    cp, sp = math.cos(meas.azimuth), math.sin(meas.azimuth)
    pos = np.array([d * st * cp, d * st * sp])
    jac = np.array(
        [
            [d * ct * cp, -d * st * sp, C_LIGHT / 2.0 * st * cp],
            [d * ct * sp, d * st * cp, C_LIGHT / 2.0 * st * sp],
        ]
    )
    return pos, jac


def initialize_static_track(
    m1: Measurement,
    m2: Measurement,
    dt: float,
    speed_inflation: float = 10.0,
    heading_inflation: float = 1.0,
) -> StaticTrackState:
    """Build a full spherical track from two consecutive measurements.

    Position comes from the second measurement; heading and speed from the
    displacement between the two implied positions.  The covariance is the
    measurement covariances propagated through the construction Jacobian,
    with the derived speed/heading entries inflated (the displacement
    estimate over one slot is weakly informative).
    """
    p1, j1 = _measured_horizontal(m1)
    p2, j2 = _measured_horizontal(m2)
    delta = p2 - p1
    r = float(np.hypot(delta[0], delta[1]))
    if r < 1e-9:
        raise DegenerateGeometryError("coincident positions leave the heading undefined")
    d2 = C_LIGHT * m2.delay / 2.0
    speed = r / dt
    heading = math.atan2(delta[1], delta[0])
    state = np.array([m2.elevation, m2.azimuth, d2, speed, heading])

    # state Jacobian wrt [theta1, phi1, tau1, theta2, phi2, tau2]
    j = np.zeros((5, 6))
    j[0, 3] = 1.0
    j[1, 4] = 1.0
    j[2, 5] = C_LIGHT / 2.0
    unit = delta / r
    dv_dp2 = unit / dt
    dhead_dp2 = np.array([-delta[1], delta[0]]) / r**2
    j[3, 3:6] = dv_dp2 @ j2
    j[3, 0:3] = -dv_dp2 @ j1
    j[4, 3:6] = dhead_dp2 @ j2
    j[4, 0:3] = -dhead_dp2 @ j1

    qm = np.zeros((6, 6))
    for block, meas in ((slice(0, 3), m1), (slice(3, 6), m2)):
        q4 = meas.noise_cov()
        qm[block, block] = q4[:3, :3]
    cov = j @ qm @ j.T
    infl = np.diag([1.0, 1.0, 1.0, math.sqrt(speed_inflation), math.sqrt(heading_inflation)])
    cov = infl @ cov @ infl
    return StaticTrackState(state=state, cov=0.5 * (cov + cov.T))


def initialize_mobile_track(
    m1: Measurement,
    m2: Measurement,
    dt: float,
    uav_xy_1: np.ndarray,
    uav_xy_2: np.ndarray,
    uav_height: float,
    z_init_var: float = 0.25,
    speed_inflation: float = 10.0,
    heading_inflation: float = 1.0,
) -> MobileTrackState:
    """Two-point initialization in the Cartesian frame of a moving UAV.

    Ground users sit at z = 0, so the vertical offset is pinned at -height
    with a small configured variance rather than derived from the angles.
    """
    p1, j1 = _measured_horizontal(m1)
    p2, j2 = _measured_horizontal(m2)
    abs1 = p1 + np.asarray(uav_xy_1, dtype=float)
    abs2 = p2 + np.asarray(uav_xy_2, dtype=float)
    delta = abs2 - abs1
    r = float(np.hypot(delta[0], delta[1]))
    if r < 1e-9:
        raise DegenerateGeometryError("coincident positions leave the heading undefined")
    speed = r / dt
    heading = math.atan2(delta[1], delta[0])
    state = np.array([p2[0], p2[1], -uav_height, speed, heading])

    j = np.zeros((5, 6))
    j[0, 3:6] = j2[0]
    j[1, 3:6] = j2[1]
    unit = delta / r
    dv_dp2 = unit / dt
    dhead_dp2 = np.array([-delta[1], delta[0]]) / r**2
    j[3, 3:6] = dv_dp2 @ j2
    j[3, 0:3] = -dv_dp2 @ j1
    j[4, 3:6] = dhead_dp2 @ j2
    j[4, 0:3] = -dhead_dp2 @ j1
    qm = np.zeros((6, 6))
    for block, meas in ((slice(0, 3), m1), (slice(3, 6), m2)):
        q4 = meas.noise_cov()
        qm[block, block] = q4[:3, :3]
    cov = j @ qm @ j.T
    cov[2, 2] += z_init_var
    infl = np.diag([1.0, 1.0, 1.0, math.sqrt(speed_inflation), math.sqrt(heading_inflation)])
    cov = infl @ cov @ infl
    return MobileTrackState(state=state, cov=0.5 * (cov + cov.T))
