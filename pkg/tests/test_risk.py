import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cfclass.data import Dataset
from cfclass.risk import (
    BasisExpansion,
    BasisSpec,
    CrossEntropyRisk,
    dr_risk,
    expand_basis,
    plugin_risk,
    risk_gradient,
    risk_hessian,
    sigmoid,
    term_names,
)


def _fd_gradient(f, beta, h=1e-5):
    g = np.empty_like(beta)
    for j in range(beta.size):
        e = np.zeros_like(beta)
        e[j] = h
        g[j] = (f(beta + e) - f(beta - e)) / (2 * h)
    return g


def test_sigmoid_values():
    assert sigmoid(0.0) == 0.5
    for u in (1, 10, 50):
        assert sigmoid(-u) == pytest.approx(1 - sigmoid(u), abs=1e-15)


def test_sigmoid_far_tail_matches_extended_precision():
    ref = float(1 / (1 + mpmath.exp(800)))  # underflows to 0 in double
    assert sigmoid(-800.0) > 0
    assert ref == 0.0 or sigmoid(-800.0) == pytest.approx(ref)
    ref700 = float(1 / (1 + mpmath.exp(700)))
    assert sigmoid(-700.0) == pytest.approx(ref700, rel=1e-12)


def test_basis_order_with_intercept():
    V = np.array([[2.0, 3.0]])
    B = expand_basis(BasisSpec("quadratic", include_intercept=True), V)
    np.testing.assert_array_equal(B, [[1, 2, 3, 4, 9, 6]])
    assert term_names(BasisSpec("quadratic", True), ["x1", "x2"]) == ["1", "x1", "x2", "x1^2", "x2^2", "x1*x2"]


def test_raw_basis_dimension():
    assert BasisSpec("raw").k_prime(4) == 4
    assert BasisSpec("raw", include_intercept=True).k_prime(4) == 5


def test_six_covariates_give_27_columns():
    assert BasisSpec("quadratic").k_prime(6) == 27
    assert expand_basis(BasisSpec("quadratic"), np.ones((3, 6))).shape == (3, 27)


def test_basis_uses_v_columns():
    data = Dataset(y=[0, 1], a=[1, 0], x=[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]], v_indices=(2, 0))
    np.testing.assert_array_equal(expand_basis(BasisSpec("raw"), data), [[3, 1], [6, 4]])


def test_custom_basis():
    spec = BasisSpec("custom", terms=((), (0, 1, 1)))
    np.testing.assert_array_equal(expand_basis(spec, np.array([[2.0, 3.0]])), [[1, 18]])
    with pytest.raises(ValueError):
        expand_basis(spec, np.array([[2.0]]))


def test_basis_transformer():
    t = BasisExpansion().fit(np.zeros((2, 3)))
    assert t.transform(np.ones((4, 3))).shape == (4, 9)
    assert list(t.get_feature_names_out(["a", "b", "c"]))[:4] == ["a", "b", "c", "a^2"]


def test_zero_beta_gives_log2(rng):
    B = rng.standard_normal((7, 3))
    phi = rng.normal(0.5, 2, 7)
    assert dr_risk(np.zeros(3), phi, B) == pytest.approx(np.log(2))
    assert plugin_risk(np.zeros(3), rng.random(7), B) == pytest.approx(np.log(2))


def test_two_row_hand_value():
    u = np.log(4.0)  # sigmoid(u) = 0.8
    B = np.array([[1.0], [-1.0]])
    assert dr_risk(np.array([u]), np.array([1.0, 0.0]), B) == pytest.approx(-np.log(0.8), abs=1e-12)


def test_plugin_equals_dr_on_same_targets(rng):
    B, mu, beta = rng.standard_normal((9, 4)), rng.random(9), rng.standard_normal(4)
    assert plugin_risk(beta, mu, B) == dr_risk(beta, mu, B)
    with pytest.raises(ValueError):
        plugin_risk(beta, mu + 1.0, B)


def test_plugin_minimum_at_matching_targets(rng):
    B, beta = rng.standard_normal((12, 3)), rng.standard_normal(3)
    mu = sigmoid(B @ beta)
    np.testing.assert_allclose(risk_gradient(beta, mu, B), 0.0, atol=1e-15)
    entropy = -np.mean(mu * np.log(mu) + (1 - mu) * np.log(1 - mu))
    assert plugin_risk(beta, mu, B) == pytest.approx(entropy, rel=1e-12)


def test_gradient_edge_cases(rng):
    B = np.abs(rng.standard_normal((10, 3)))
    np.testing.assert_array_equal(risk_gradient(np.zeros(3), np.full(10, 0.5), B), 0.0)
    assert (risk_gradient(rng.standard_normal(3), np.ones(10), B) < 0).all()


def test_hessian_single_column_quarter():
    H = risk_hessian(np.zeros(1), np.ones((5, 1)))
    assert H.shape == (1, 1) and H[0, 0] == pytest.approx(0.25)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        dr_risk(np.zeros(3), np.zeros(5), np.zeros((5, 2)))
    with pytest.raises(ValueError):
        risk_gradient(np.zeros(2), np.zeros(4), np.zeros((5, 2)))
    with pytest.raises(ValueError):
        risk_hessian(np.zeros(3), np.zeros((5, 2)))


def test_finite_differences_random_instance(rng):
    B, phi, beta = rng.standard_normal((20, 5)), rng.normal(0.5, 1.5, 20), rng.standard_normal(5)
    g = risk_gradient(beta, phi, B)
    g_fd = _fd_gradient(lambda b: dr_risk(b, phi, B), beta)
    assert np.linalg.norm(g - g_fd) <= 1e-6 * max(np.linalg.norm(g), 1e-3)
    H = risk_hessian(beta, B)
    H_fd = np.column_stack([_fd_gradient(lambda b: risk_gradient(b, phi, B)[j], beta) for j in range(5)])
    assert np.linalg.norm(H - H_fd) <= 1e-5 * np.linalg.norm(H)


def test_softplus_form_stable_for_large_index():
    B = np.array([[1.0], [1.0]])
    val = dr_risk(np.array([60.0]), np.array([1.0, 0.0]), B)
    assert np.isfinite(val) and val == pytest.approx(30.0, rel=1e-12)


finite = st.floats(-3, 3, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(arrays(float, (8, 3), elements=finite), arrays(float, 3, elements=finite))
def test_hessian_psd_and_symmetric(B, beta):
    H = risk_hessian(beta, B)
    np.testing.assert_array_equal(H, H.T)
    assert np.linalg.eigvalsh(H).min() >= -1e-12


@settings(max_examples=60, deadline=None)
@given(arrays(float, (6, 2), elements=finite), arrays(float, 2, elements=finite),
       arrays(float, 6, elements=st.floats(-5, 5)), arrays(float, 6, elements=st.floats(-5, 5)),
       st.floats(0, 1))
def test_affine_in_targets(B, beta, p1, p2, alpha):
    lhs = dr_risk(beta, alpha * p1 + (1 - alpha) * p2, B)
    rhs = alpha * dr_risk(beta, p1, B) + (1 - alpha) * dr_risk(beta, p2, B)
    assert lhs == pytest.approx(rhs, abs=1e-10)


def test_risk_object_per_row_gradient(rng):
    B, t, beta = rng.standard_normal((15, 4)), rng.random(15), rng.standard_normal(4)
    r = CrossEntropyRisk(t, B)
    np.testing.assert_allclose(r.per_row_gradient(beta).mean(axis=0), r.gradient(beta), atol=1e-15)
    ev = r.evaluate(beta, hessian=True)
    assert ev.value == r.value(beta) and ev.hessian.shape == (4, 4)
