import numpy as np
import pytest

from tue_lab.core.errors import BadDims, NonFiniteValue, ZeroVector
from tue_lab.core.kernel import (
    SeededRng,
    check_finite,
    finite_diff_grad,
    l2_normalize,
    pca_project,
    relative_error,
    rng_for,
)


def test_seeded_rng_replays_and_separates_streams():
    a = rng_for(42, 3).normal(size=5)
    b = SeededRng(42, 3).generator().normal(size=5)
    c = rng_for(42, 4).normal(size=5)
    assert np.array_equal(a, b), "same (seed, stream) must replay the same draws"
    assert not np.array_equal(a, c), "different streams must not coincide"
    assert SeededRng(1, 2).child(5) == SeededRng(1, 5)


def test_l2_normalize():
    v = l2_normalize(np.array([3.0, 4.0]))
    assert np.allclose(v, [0.6, 0.8])
    with pytest.raises(ZeroVector):
        l2_normalize(np.zeros(3))
    with pytest.raises(BadDims):
        l2_normalize(np.ones((2, 2)))


def test_check_finite_rejects_nan():
    with pytest.raises(NonFiniteValue):
        check_finite(np.array([1.0, np.nan]))


def test_finite_diff_grad_of_quadratic():
    A = np.array([[2.0, 0.5], [0.5, 1.0]])
    x = np.array([0.3, -1.2])
    grad = finite_diff_grad(lambda v: 0.5 * v @ A @ v, x)
    assert relative_error(grad, A @ x) < 1e-8, "central differences are exact on quadratics"


def test_finite_diff_grad_keeps_shape():
    x = np.arange(6, dtype=float).reshape(2, 3)
    grad = finite_diff_grad(lambda m: float(np.sum(m * m)), x)
    assert grad.shape == x.shape
    assert relative_error(grad, 2 * x) < 1e-8


def test_pca_project_orders_by_variance():
    draw = rng_for(0, 0)
    points = np.zeros((50, 3))
    points[:, 0] = draw.normal(0.0, 5.0, size=50)
    points[:, 2] = draw.normal(0.0, 0.5, size=50)
    proj = pca_project(points, 2)
    assert proj.shape == (50, 2)
    assert np.var(proj[:, 0]) > np.var(proj[:, 1]), "first component carries the most variance"
    assert np.allclose(proj.mean(axis=0), 0.0, atol=1e-12), "projection is centered"


def test_pca_project_is_deterministic_in_sign():
    points = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.1], [3.0, 0.0]])
    first = pca_project(points, 1)
    second = pca_project(points[::-1].copy(), 1)[::-1]
    assert np.allclose(first, second)


def test_pca_project_rejects_too_many_dims():
    with pytest.raises(BadDims):
        pca_project(np.ones((3, 2)), 3)


def test_pca_project_translation_invariance():
    draw = rng_for(2, 0)
    points = draw.normal(size=(30, 4)) * np.array([4.0, 2.0, 1.0, 0.5])
    base = pca_project(points, 2)
    moved = pca_project(points + draw.normal(0.0, 10.0, size=4), 2)
    signs = np.sign(np.sum(base * moved, axis=0))
    assert np.allclose(moved * signs, base, atol=1e-9)
