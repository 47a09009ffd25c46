import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from kachanov.material import (ElasticConstants, hydrostatic, plane_strain_szz, strain_from_gradient, stress,
                               von_mises)

C = ElasticConstants()
finite = st.floats(-1e3, 1e3)
triples = hnp.arrays(float, 3, elements=finite)


def test_defaults_and_poisson():
    assert (C.lam, C.mu) == (121.15, 80.77)
    assert C.nu == pytest.approx(121.15 / (2 * 201.92), rel=1e-15)
    assert abs(C.nu - 0.3) < 1e-3


def test_invalid_constants():
    with pytest.raises(ValueError):
        ElasticConstants(-1.0, 1.0)


def test_stress_examples():
    assert np.all(stress(np.zeros(3), 0.0, C) == 0.0)
    assert np.all(stress(np.array([0.3, -0.2, 0.1]), 1.0, C) == 0.0)
    np.testing.assert_allclose(stress(np.array([1.0, 1.0, 0.0]), 0.0, C), [403.84, 403.84, 0.0], rtol=1e-15)


@given(triples, st.floats(0, 1))
def test_damage_scales_stress(eps, d):
    np.testing.assert_allclose(stress(eps, d, C), (1 - d) * stress(eps, 0.0, C), rtol=1e-14, atol=1e-9)


def test_strain_from_gradient_forms():
    g = np.array([1.0, 2.0, 4.0, 3.0])
    np.testing.assert_array_equal(strain_from_gradient(g), [1.0, 3.0, 3.0])
    np.testing.assert_array_equal(strain_from_gradient(g.reshape(2, 2)), [1.0, 3.0, 3.0])


def test_hydrostatic_examples():
    assert hydrostatic(np.zeros(3)) == 0.0
    assert hydrostatic(np.array([3.0, 3.0, 0.0])) == pytest.approx(2.0)
    assert hydrostatic(np.array([5.0, -5.0, 1.0])) == 0.0


def test_von_mises_examples():
    p, s = 2.5, 1.7
    assert von_mises(np.array([p, p, 0.0])) == pytest.approx(p / math.sqrt(3), rel=1e-14)
    assert von_mises(np.array([s, -s, 0.0])) == pytest.approx(s * math.sqrt(3), rel=1e-14)
    assert von_mises(np.zeros(3)) == 0.0
    # full tensors are accepted as well
    assert von_mises(np.array([[s, 0.0], [0.0, -s]])) == pytest.approx(s * math.sqrt(3), rel=1e-14)


@given(triples, st.floats(0, 2 * math.pi))
def test_von_mises_rotation_invariant(s, theta):
    S = np.array([[s[0], s[2]], [s[2], s[1]]])
    R = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
    rotated = R @ S @ R.T
    assert von_mises(rotated) == pytest.approx(von_mises(S), rel=1e-12, abs=1e-9)
    assert von_mises(S) >= 0.0


@given(triples, triples, finite)
def test_hydrostatic_linear(a, b, k):
    assert hydrostatic(a + k * b) == pytest.approx(hydrostatic(a) + k * hydrostatic(b), rel=1e-12, abs=1e-6)


def test_augmented_mode_changes_measures():
    s = np.array([1.0, 1.0, 0.0])
    szz = plane_strain_szz(s, C)
    assert szz == pytest.approx(2 * C.nu)
    assert hydrostatic(s, szz) == pytest.approx((2 + 2 * C.nu) / 3)
    # equibiaxial in-plane with szz: deviator is along z only
    expect = abs(1 - szz)
    assert von_mises(s, szz) == pytest.approx(expect, rel=1e-14)
