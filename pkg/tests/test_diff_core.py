import math

import numpy as np
import pytest

from ltvstream.diff_core import DensityGraph, as_param_vector, check_gradient


def std_normal_graph():
    return DensityGraph(1, lambda th, b: (-0.5 * float(th[0] ** 2) - 0.5 * math.log(2 * math.pi), -th))


def cauchy_graph():
    # Student-t(nu=1, mu=0, sigma=1): logp = -log(pi) - log(1 + x^2)
    def eval_fn(th, b):
        x = float(th[0])
        logp = -math.log(math.pi) - math.log1p(x * x)
        grad = np.array([-2.0 * x / (1.0 + x * x)])
        return logp, grad

    return DensityGraph(1, eval_fn)


def test_standard_normal_at_mode():
    logp, grad = std_normal_graph().evaluate(np.array([0.0]))
    assert logp == pytest.approx(-0.9189385332046727, abs=1e-9)
    assert grad[0] == 0.0


def test_standard_normal_gradient_is_minus_theta():
    _, grad = std_normal_graph().evaluate(np.array([2.0]))
    assert grad[0] == -2.0


def test_cauchy_logpdf_and_gradient_at_one():
    # oracle: pdf 1/(pi (1+x^2)) evaluated directly; gradient cross-checked
    # below by central differences
    logp, grad = cauchy_graph().evaluate(np.array([1.0]))
    assert logp == pytest.approx(math.log(1.0 / (2.0 * math.pi)), abs=1e-12)
    assert grad[0] == pytest.approx(-1.0, abs=1e-12)
    assert check_gradient(cauchy_graph(), np.array([1.0]), h=1e-6) < 1e-8


def test_check_gradient_smooth_quadratic():
    assert check_gradient(std_normal_graph(), np.array([0.5]), h=1e-5) < 1e-6


def test_check_gradient_flags_wrong_gradient():
    bad = DensityGraph(1, lambda th, b: (-0.5 * float(th[0] ** 2), -2.0 * th))
    assert check_gradient(bad, np.array([0.7]), h=1e-5) > 0.1


def test_evaluate_is_pure():
    graph = std_normal_graph()
    theta = np.array([0.3])
    a = graph.evaluate(theta)
    b = graph.evaluate(theta)
    assert a[0] == b[0]
    assert np.array_equal(a[1], b[1])


def test_non_finite_normalized_to_rejection():
    graph = DensityGraph(1, lambda th, b: (float("nan"), np.array([float("inf")])))
    logp, grad = graph.evaluate(np.array([0.0]))
    assert logp == -np.inf
    assert np.array_equal(grad, np.zeros(1))


def test_dimension_mismatch_rejected():
    with pytest.raises(ValueError):
        std_normal_graph().evaluate(np.zeros(2))


def test_as_param_vector_validation():
    with pytest.raises(ValueError):
        as_param_vector([[1.0, 2.0]])
    with pytest.raises(ValueError):
        as_param_vector([1.0, float("nan")])
    out = as_param_vector([1, 2])
    assert out.dtype == np.float64


def test_bind_rebinds_data():
    def eval_fn(th, data):
        return -0.5 * float(((th[0] - data) ** 2)), np.array([-(th[0] - data)])

    graph = DensityGraph(1, eval_fn, batch=0.0)
    bound = graph.bind(3.0)
    assert graph.evaluate(np.array([0.0]))[0] == 0.0
    assert bound.evaluate(np.array([3.0]))[0] == 0.0
    # explicit batch wins over the bound one
    assert bound.evaluate(np.array([1.0]), batch=1.0)[0] == 0.0
