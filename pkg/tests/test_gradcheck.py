import numpy as np
import pytest

from trnet.gradcheck import GROUPS, gradcheck_suite, numerical_gradient, relative_error


def test_numerical_gradient_quadratic(rng):
    p = rng.standard_normal(5)
    g = numerical_gradient(lambda: float(np.sum(p ** 2)), p)
    np.testing.assert_allclose(g, 2 * p, rtol=1e-8)


def test_numerical_gradient_restores_parameters(rng):
    p = rng.standard_normal((2, 3))
    before = p.copy()
    numerical_gradient(lambda: float(np.sum(np.sin(p))), p)
    assert np.array_equal(p, before)


def test_relative_error_floor():
    assert relative_error(np.zeros(3), np.full(3, 1e-12)) < 1e-5
    assert relative_error(np.ones(3), -np.ones(3)) == pytest.approx(2.0)


def test_suite_covers_every_group():
    errors = gradcheck_suite(n_instances=5, seed=1)
    assert set(errors) == set(GROUPS)
    assert max(errors.values()) <= 1e-5


def test_suite_seeded():
    assert gradcheck_suite(n_instances=3, seed=2) == gradcheck_suite(n_instances=3, seed=2)


@pytest.mark.parametrize("group", GROUPS)
def test_flip_is_detected(group):
    errors = gradcheck_suite(n_instances=2, seed=0, flip=group)
    assert errors[group] > 1.0
    assert all(e <= 1e-5 for g, e in errors.items() if g != group)


def test_unknown_flip():
    with pytest.raises(ValueError):
        gradcheck_suite(n_instances=1, flip="nope")
