"""Tensor algebra and kinematic decompositions."""

import numpy as np
import pytest

from vevpfrac.errors import NonPositiveJacobian
from vevpfrac.tensors import (
    det33,
    deviator,
    frobenius_norm,
    green_strain,
    inv33,
    left_cauchy_green,
    polar_rotation,
    split_volumetric,
)
from conftest import random_rotations


def rotation_z(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


class TestSplitVolumetric:
    def test_identity(self):
        s = split_volumetric(np.eye(3), 1.0)
        assert s.J == pytest.approx(1.0)
        assert s.J_m == pytest.approx(1.0)
        np.testing.assert_allclose(s.F_bar, np.eye(3))

    def test_double_stretch(self):
        s = split_volumetric(2.0 * np.eye(3), 1.0)
        assert s.J == pytest.approx(8.0)
        np.testing.assert_allclose(s.F_bar, np.eye(3), atol=1e-14)

    def test_swelling_partition(self):
        # saturated neat epoxy: J_w = 1 + 0.039 * 0.010
        s = split_volumetric(np.eye(3), 1.00039)
        assert s.J_m == pytest.approx(1.0 / 1.00039, rel=1e-12)
        assert s.J == pytest.approx(s.J_m * s.J_w, rel=1e-12)

    def test_rejects_inverted(self):
        f = np.diag([-1.0, 1.0, 1.0])
        with pytest.raises(NonPositiveJacobian):
            split_volumetric(f, 1.0)

    def test_unimodular_property_random(self):
        # 1e4 random deformation gradients with positive determinant
        rng = np.random.default_rng(42)
        f = np.eye(3) + 0.8 * rng.uniform(-1.0, 1.0, size=(20000, 3, 3))
        f = f[det33(f) > 0.05][:10000]
        assert f.shape[0] == 10000
        s = split_volumetric(f, 1.0)
        np.testing.assert_allclose(det33(s.F_bar), 1.0, rtol=1e-9)


class TestLeftCauchyGreen:
    def test_identity(self):
        np.testing.assert_allclose(left_cauchy_green(np.eye(3)), np.eye(3))

    def test_diagonal(self):
        np.testing.assert_allclose(
            left_cauchy_green(np.diag([2.0, 1.0, 1.0])), np.diag([4.0, 1.0, 1.0]))

    def test_rotation_gives_identity(self):
        q = rotation_z(0.7)
        np.testing.assert_allclose(left_cauchy_green(q), np.eye(3), atol=1e-15)

    def test_symmetry(self):
        rng = np.random.default_rng(3)
        f = np.eye(3) + 0.5 * rng.standard_normal((200, 3, 3))
        b = left_cauchy_green(f)
        assert np.max(np.abs(b - np.swapaxes(b, -1, -2))) < 1e-14 * np.max(np.abs(b))


class TestGreenStrain:
    def test_identity_is_zero(self):
        np.testing.assert_allclose(green_strain(np.eye(3)), 0.0)

    def test_uniaxial(self):
        e = green_strain(np.diag([1.1, 1.0, 1.0]))
        assert e[0, 0] == pytest.approx((1.21 - 1.0) / 2.0)
        assert np.abs(e - np.diag([e[0, 0], 0, 0])).max() == 0.0

    def test_rigid_motion_is_zero(self):
        np.testing.assert_allclose(green_strain(rotation_z(1.2)), 0.0, atol=1e-15)

    def test_frame_indifference(self):
        # E(QF) = E(F) for any rotation Q
        rng = np.random.default_rng(11)
        f = np.eye(3) + 0.3 * rng.standard_normal((500, 3, 3))
        q = random_rotations(rng, 500)
        np.testing.assert_allclose(green_strain(q @ f), green_strain(f), atol=1e-12)


class TestDeviatorAndNorm:
    def test_spherical_maps_to_zero(self):
        np.testing.assert_allclose(deviator(3.7 * np.eye(3)), 0.0, atol=1e-15)

    def test_hand_value(self):
        t = np.diag([3.0, 0.0, 0.0])
        np.testing.assert_allclose(deviator(t), np.diag([2.0, -1.0, -1.0]))
        assert frobenius_norm(t) == pytest.approx(3.0)

    def test_zero_norm(self):
        assert frobenius_norm(np.zeros((3, 3))) == 0.0

    def test_traceless(self):
        rng = np.random.default_rng(5)
        t = rng.standard_normal((1000, 3, 3))
        d = deviator(t)
        tr = d[..., 0, 0] + d[..., 1, 1] + d[..., 2, 2]
        assert np.max(np.abs(tr)) < 1e-12 * np.max(frobenius_norm(t))

    def test_idempotent(self):
        rng = np.random.default_rng(6)
        t = rng.standard_normal((200, 3, 3))
        np.testing.assert_allclose(deviator(deviator(t)), deviator(t), atol=1e-14)


class TestPolarRotation:
    def test_identity(self):
        np.testing.assert_allclose(polar_rotation(np.eye(3)), np.eye(3), atol=1e-14)

    def test_pure_rotation(self):
        q = rotation_z(0.9)
        np.testing.assert_allclose(polar_rotation(q), q, atol=1e-12)

    def test_recovers_known_factor(self):
        q = rotation_z(-0.4)
        f = q @ np.diag([2.0, 1.0, 1.0])
        np.testing.assert_allclose(polar_rotation(f), q, atol=1e-10)

    def test_orthogonality_and_orientation(self):
        rng = np.random.default_rng(8)
        f = np.eye(3) + 0.4 * rng.standard_normal((500, 3, 3))
        f = f[det33(f) > 0.1]
        r = polar_rotation(f)
        err = r @ np.swapaxes(r, -1, -2) - np.eye(3)
        assert np.max(frobenius_norm(err)) < 1e-10
        assert np.all(det33(r) > 0.0)

    def test_left_equivariance(self):
        # R(QF) = Q R(F)
        rng = np.random.default_rng(9)
        f = np.eye(3) + 0.3 * rng.standard_normal((300, 3, 3))
        f = f[det33(f) > 0.2]
        q = random_rotations(rng, f.shape[0])
        np.testing.assert_allclose(polar_rotation(q @ f), q @ polar_rotation(f), atol=1e-9)

    def test_rejects_inverted(self):
        with pytest.raises(NonPositiveJacobian):
            polar_rotation(np.diag([1.0, -2.0, 1.0]))


def test_inv33_matches_numpy():
    rng = np.random.default_rng(12)
    t = np.eye(3) + 0.6 * rng.standard_normal((300, 3, 3))
    t = t[np.abs(det33(t)) > 0.1]
    np.testing.assert_allclose(inv33(t), np.linalg.inv(t), rtol=1e-10, atol=1e-12)
