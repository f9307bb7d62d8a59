import numpy as np
import pytest

from tue_lab.core.errors import ShapeMismatch
from tue_lab.core.kernel import finite_diff_grad, relative_error, rng_for
from tue_lab.core.losses import cross_entropy
from tue_lab.models.mlp import (
    classifier_backward,
    classifier_forward,
    encoder_backward,
    encoder_forward,
    init_classifier,
    init_encoder,
    init_probe,
    probe_backward,
    probe_forward,
)

GRAD_TOL = 1e-4
POINTS = range(10)


def _with(model, key, value):
    return model.with_params({**model.params, key: value})


@pytest.mark.parametrize("point", POINTS)
def test_classifier_gradients(point):
    draw = rng_for(point, 0)
    model = init_classifier(6, 5, 3, seed=point)
    x = draw.uniform(size=(4, 6))
    y = draw.integers(0, 3, size=4)
    grads, input_grad, loss = classifier_backward(model, x, y)
    assert abs(loss - cross_entropy(classifier_forward(model, x), y)[0]) < 1e-12

    numeric_x = finite_diff_grad(lambda v: cross_entropy(classifier_forward(model, v), y)[0], x)
    assert relative_error(input_grad, numeric_x) < GRAD_TOL, "input gradient"
    for key, w in model.params.items():
        numeric = finite_diff_grad(lambda v: cross_entropy(classifier_forward(_with(model, key, v), x), y)[0], w)
        assert relative_error(grads[key], numeric) < GRAD_TOL, f"gradient of {key}"


@pytest.mark.parametrize("point", POINTS)
def test_encoder_gradients(point):
    draw = rng_for(point, 1)
    model = init_encoder(6, 5, 4, 3, seed=point)
    x = draw.uniform(size=(4, 6))
    gz = draw.normal(size=(4, 3))
    gf = draw.normal(size=(4, 4))

    def scalar(m, v):
        features, z = encoder_forward(m, v)
        return float(np.sum(gz * z) + np.sum(gf * features))

    grads, input_grad = encoder_backward(model, x, gz, gf)
    assert relative_error(input_grad, finite_diff_grad(lambda v: scalar(model, v), x)) < GRAD_TOL
    for key, w in model.params.items():
        numeric = finite_diff_grad(lambda v: scalar(_with(model, key, v), x), w)
        assert relative_error(grads[key], numeric) < GRAD_TOL, f"gradient of {key}"


def test_encoder_projections_are_unit_norm():
    model = init_encoder(6, 5, 4, 3, seed=0)
    _, z = encoder_forward(model, rng_for(0, 2).uniform(size=(7, 6)))
    assert np.allclose(np.linalg.norm(z, axis=1), 1.0)


@pytest.mark.parametrize("point", POINTS)
def test_probe_gradients(point):
    draw = rng_for(point, 3)
    head = init_probe(4, 3, seed=point)
    f = draw.normal(size=(5, 4))
    y = draw.integers(0, 3, size=5)
    grads, _ = probe_backward(head, f, y)
    for key, w in head.params.items():
        numeric = finite_diff_grad(lambda v: cross_entropy(probe_forward(_with(head, key, v), f), y)[0], w)
        assert relative_error(grads[key], numeric) < GRAD_TOL


def test_init_is_seeded_and_checks_shapes():
    a = init_classifier(6, 5, 3, seed=1)
    b = init_classifier(6, 5, 3, seed=1)
    assert all(np.array_equal(a.params[k], b.params[k]) for k in a.params)
    assert a.K == 3 and a.d == 6 and a.hidden == 5
    with pytest.raises(ShapeMismatch):
        classifier_forward(a, np.zeros((2, 5)))


def test_classifier_input_gradient_shrinks_with_margin():
    draw = rng_for(3, 0)
    model = init_classifier(6, 5, 3, seed=3)
    x = draw.uniform(size=(1, 6))
    y = np.array([1])
    norms = []
    for margin in (1.0, 5.0, 10.0):
        b2 = model.params["b2"].copy()
        b2[y[0]] += margin
        _, input_grad, _ = classifier_backward(_with(model, "b2", b2), x, y)
        norms.append(np.linalg.norm(input_grad))
    assert norms[0] > norms[1] > norms[2] > 0.0, f"norms {norms}"


def test_classifier_duplicated_batch_has_same_mean_gradients():
    draw = rng_for(4, 0)
    model = init_classifier(6, 5, 3, seed=4)
    x = draw.uniform(size=(3, 6))
    y = np.array([0, 2, 1])
    grads, input_grad, loss = classifier_backward(model, x, y)
    grads2, input_grad2, loss2 = classifier_backward(model, np.concatenate([x, x]), np.concatenate([y, y]))
    assert abs(loss - loss2) < 1e-12
    for key in grads:
        assert np.allclose(grads[key], grads2[key], atol=1e-12), key
    assert np.allclose(input_grad2[:3] * 2.0, input_grad, atol=1e-12), "each copy carries half the weight"


def test_classifier_forward_degenerate_inputs():
    model = init_classifier(6, 5, 3, seed=0)
    zeroed = model.with_params({k: np.zeros_like(v) for k, v in model.params.items()})
    x = rng_for(0, 1).uniform(size=(4, 6))
    assert np.array_equal(classifier_forward(zeroed, x), np.zeros((4, 3)))
    assert classifier_forward(model, np.zeros((0, 6))).shape == (0, 3)
