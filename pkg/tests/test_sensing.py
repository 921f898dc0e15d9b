import math

import numpy as np
import pytest

from uavisac.geometry import (
    ArrayGeometry,
    C_LIGHT,
    DegenerateGeometryError,
    angles_from_spatial,
    spatial_frequencies,
    steering_vector,
)
from uavisac.rng import stream
from uavisac.sensing import (
    crlb_angles,
    crlb_delay_doppler,
    crlb_spatial,
    directional_echo_snr,
    omni_echo_snr,
    receive_bf_loss,
    reflection_coeff,
    synthesize_measurement,
    weighted_snr,
)

BETA = 10 ** (-61.9 / 10.0)
SIGMA2 = 10 ** (-83.0 / 10.0) * 1e-3  # -83 dBm


class TestReflectionCoeff:
    def test_unit_case(self):
        assert reflection_coeff(1.0, 1.0) == 1.0

    def test_inverse_square_squared(self):
        assert reflection_coeff(1.0, 2.0) == pytest.approx(reflection_coeff(1.0, 1.0) / 4)

    def test_table_constants(self):
        assert reflection_coeff(BETA, 100.0) == pytest.approx(10 ** (-3.095) / 1e4, rel=1e-12)

    def test_rejects_nonpositive_distance(self):
        with pytest.raises(ValueError):
            reflection_coeff(BETA, 0.0)


class TestEchoSnr:
    def test_omni_unit(self):
        assert omni_echo_snr(SIGMA2, 1.0, SIGMA2) == pytest.approx(1.0)
        assert omni_echo_snr(0.0, 1.0, SIGMA2) == 0.0

    def test_omni_table_constants(self):
        g = math.sqrt(BETA) / 100.0**2
        expected = 1.0 * g * g / SIGMA2  # hand evaluation
        assert omni_echo_snr(1.0, g, SIGMA2) == pytest.approx(expected, rel=1e-12)

    def test_directional_matched_beam(self):
        geom = ArrayGeometry(4, 3)
        a = steering_vector(geom, 0.6, 1.1)
        p = 0.5
        w = p * np.outer(a, a.conj()) / geom.size
        g = reflection_coeff(BETA, 80.0)
        snr = directional_echo_snr([w], a, g, SIGMA2)
        assert snr == pytest.approx(g * g * p * geom.size / SIGMA2, rel=1e-12)

    def test_directional_orthogonal_beam(self):
        geom = ArrayGeometry(2, 1)
        a = steering_vector(geom, np.pi / 2, 0.0)  # [1, -1]
        b = np.array([1.0, 1.0])
        w = np.outer(b, b.conj())
        assert directional_echo_snr([w], a, 1.0, 1.0) == pytest.approx(0.0, abs=1e-12)

    def test_directional_matches_loop_oracle(self):
        rng = np.random.default_rng(3)
        geom = ArrayGeometry(3, 3)
        a = steering_vector(geom, 0.8, -0.4)
        mats = []
        for _ in range(4):
            x = rng.normal(size=(9, 2)) + 1j * rng.normal(size=(9, 2))
            mats.append(x @ x.conj().T)
        g = 2.5e-4
        expected = g * g * sum(np.real(a.conj() @ (w @ a)) for w in mats) / SIGMA2
        assert directional_echo_snr(mats, a, g, SIGMA2) == pytest.approx(expected, rel=1e-10)

    def test_directional_rejects_non_psd(self):
        geom = ArrayGeometry(2, 2)
        a = steering_vector(geom, 0.5, 0.5)
        w = -np.eye(4)
        with pytest.raises(ValueError):
            directional_echo_snr([w], a, 1.0, 1.0)


class TestReceiveBfLoss:
    def test_perfect_alignment_recovers_array_gain(self):
        geom = ArrayGeometry(6, 6)
        f = receive_bf_loss(geom, 0.7, 0.2, 0.7, 0.2)
        assert f == pytest.approx(1.0, rel=1e-12)
        assert weighted_snr(2.0, f, geom.size) == pytest.approx(2.0 * geom.size)

    def test_orthogonal_directions(self):
        geom = ArrayGeometry(2, 1)
        # [1, -1] vs [1, 1]
        f = receive_bf_loss(geom, np.pi / 2, 0.0, 0.0, 0.0)
        assert f == pytest.approx(0.0, abs=1e-12)

    def test_small_error_matches_inner_product_oracle(self):
        geom = ArrayGeometry(6, 6)
        err = math.radians(0.5)
        b1 = steering_vector(geom, 0.7 + err, 0.2)
        b2 = steering_vector(geom, 0.7, 0.2)
        expected = abs(np.vdot(b1, b2)) ** 2 / 36.0**2
        got = receive_bf_loss(geom, 0.7 + err, 0.2, 0.7, 0.2)
        assert got == pytest.approx(expected, rel=1e-12)
        assert 0.0 < got < 1.0

    def test_never_exceeds_aligned_case(self):
        geom = ArrayGeometry(4, 4)
        rng = np.random.default_rng(11)
        for _ in range(50):
            te, ta = rng.uniform(0.05, 1.4), rng.uniform(-np.pi, np.pi)
            ee, ea = te + rng.normal(0, 0.2), ta + rng.normal(0, 0.2)
            assert receive_bf_loss(geom, ee, ea, te, ta) <= 1.0 + 1e-12


class TestCrlbSpatial:
    def test_reference_value(self):
        assert crlb_spatial(100, 36, 1.0) == pytest.approx(6.0 / (100**2 * 36), rel=1e-12)
        assert crlb_spatial(100, 36, 1.0) == pytest.approx(1.6667e-5, rel=1e-3)

    def test_limits(self):
        assert crlb_spatial(64, 36, 1e12) < 1e-15
        assert crlb_spatial(128, 36, 1.0) == pytest.approx(crlb_spatial(64, 36, 1.0) / 4)

    def test_decreasing_in_snr(self):
        assert crlb_spatial(64, 36, 2.0) < crlb_spatial(64, 36, 1.0)


class TestCrlbAngles:
    def test_zero_input_gives_zero(self):
        np.testing.assert_allclose(crlb_angles(0.7, 0.3, 0.0, 0.0), np.zeros((2, 2)))

    def test_symmetric_psd(self):
        cov = crlb_angles(np.pi / 4, np.pi / 6, 1e-5, 1e-5)
        np.testing.assert_allclose(cov, cov.T)
        assert np.all(np.linalg.eigvalsh(cov) >= 0)

    def test_against_finite_difference_jacobian(self):
        # oracle: numerically differentiate the spatial->angle inverse map
        for elevation, azimuth in [(0.6, 0.0), (0.9, 1.2), (0.3, -2.0)]:
            a0, b0 = spatial_frequencies(elevation, azimuth)
            eps = 1e-7
            j_fd = np.zeros((2, 2))
            for col, (da, db) in enumerate([(eps, 0.0), (0.0, eps)]):
                tp = angles_from_spatial(a0 + da, b0 + db)
                tm = angles_from_spatial(a0 - da, b0 - db)
                j_fd[0, col] = (tp[0] - tm[0]) / (2 * eps)
                j_fd[1, col] = (tp[1] - tm[1]) / (2 * eps)
            c_a, c_b = 2e-5, 3e-5
            expected = j_fd @ np.diag([c_a, c_b]) @ j_fd.T
            got = crlb_angles(elevation, azimuth, c_a, c_b)
            np.testing.assert_allclose(got, expected, rtol=1e-6, atol=1e-18)

    def test_degenerate_at_vertical(self):
        with pytest.raises(DegenerateGeometryError):
            crlb_angles(0.0, 0.3, 1e-5, 1e-5)


class TestCrlbDelayDoppler:
    def test_hand_evaluated_pair(self):
        b, dt = 500e6, 0.01
        chi = 1.0 * dt * b
        dv, mv = crlb_delay_doppler(b, b, dt, 1.0)
        assert dv == pytest.approx(3.0 / (2 * math.pi**2 * b * chi), rel=1e-12)
        assert mv == pytest.approx(1.0 / ((2 * math.pi) ** 2 * dt**2 * b * chi), rel=1e-12)

    def test_high_snr_limit(self):
        dv, mv = crlb_delay_doppler(500e6, 500e6, 0.01, 1e15)
        assert dv < 1e-30 and mv < 1e-27

    def test_delay_var_scales_inverse_square_bandwidth(self):
        # hold snr1 * slot_len fixed so chi scales linearly with bandwidth
        d1, _ = crlb_delay_doppler(1e8, 1e8, 0.01, 1.0)
        d2, _ = crlb_delay_doppler(2e8, 2e8, 0.01, 1.0)
        assert d2 == pytest.approx(d1 / 4, rel=1e-12)

    def test_decreasing_in_snr(self):
        d1, m1 = crlb_delay_doppler(5e8, 5e8, 0.01, 1.0)
        d2, m2 = crlb_delay_doppler(5e8, 5e8, 0.01, 2.0)
        assert d2 < d1 and m2 < m1


class TestSynthesizeMeasurement:
    def test_zero_variance_reproduces_truth(self):
        rng = stream(0, "meas", 0, 0, 0)
        m = synthesize_measurement(0.7, -0.4, 120.0, 800.0, np.zeros((2, 2)), 0.0, 0.0, rng)
        assert m.elevation == 0.7
        assert m.azimuth == -0.4
        assert m.delay == pytest.approx(2 * 120.0 / C_LIGHT, rel=1e-15)
        assert m.doppler == 800.0

    def test_sample_mean_unbiased(self):
        n = 100_000
        cov = np.array([[4e-4, 1e-4], [1e-4, 9e-4]])
        dv, mv = 1e-14, 1e-10
        rng = stream(7, "mc")
        elev = np.empty(n)
        azim = np.empty(n)
        delay = np.empty(n)
        dopp = np.empty(n)
        for i in range(n):
            m = synthesize_measurement(0.5, 1.0, 100.0, 500.0, cov, dv, mv, rng)
            elev[i], azim[i], delay[i], dopp[i] = m.elevation, m.azimuth, m.delay, m.doppler
        for arr, mean, var in [
            (elev, 0.5, cov[0, 0]),
            (azim, 1.0, cov[1, 1]),
            (delay, 2 * 100.0 / C_LIGHT, dv),
            (dopp, 500.0, mv),
        ]:
            assert abs(arr.mean() - mean) < 4 * math.sqrt(var / n)

        sample_cov = np.cov(np.vstack([elev, azim]))
        np.testing.assert_allclose(sample_cov, cov, rtol=0.05)

    def test_reproducible_given_seed(self):
        cov = np.array([[1e-4, 0.0], [0.0, 2e-4]])
        m1 = synthesize_measurement(0.5, 1.0, 90.0, 0.0, cov, 1e-15, 1e-11, stream(3, "m", 1, 2))
        m2 = synthesize_measurement(0.5, 1.0, 90.0, 0.0, cov, 1e-15, 1e-11, stream(3, "m", 1, 2))
        assert m1.vector().tolist() == m2.vector().tolist()

    def test_noise_cov_block_structure(self):
        cov = np.array([[1e-4, 2e-5], [2e-5, 2e-4]])
        m = synthesize_measurement(0.5, 1.0, 90.0, 0.0, cov, 1e-15, 1e-11, stream(3, "m"))
        q = m.noise_cov()
        np.testing.assert_allclose(q[:2, :2], cov)
        assert q[2, 2] == 1e-15 and q[3, 3] == 1e-11
        assert q[0, 2] == 0.0 and q[3, 0] == 0.0
