import numpy as np
import pytest
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from slsq.system import (FeedbackLaw, FlowCache, StabilizabilityCertificate, SwitchedLinearSystem,
                         augmented_matrix, closed_loop_matrix, log_norm, propagate_segment,
                         system_constants, system_from_document, system_to_document,
                         verify_certificate_lognorm)
from slsq.util import ConfigError


def test_log_norm():
    assert log_norm([[0.1, -1.0], [1.5, 0.1]]) == pytest.approx(0.35)
    assert log_norm([[-2.0]]) == -2.0
    # symmetric: the largest eigenvalue
    assert log_norm(np.diag([1.0, -3.0])) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        log_norm(np.zeros((2, 3)))


def test_system_constants(plant):
    sys, fb, _ = plant
    c = system_constants(sys, fb)
    assert c.nu == pytest.approx(0.35)
    assert c.delta1 == pytest.approx(3.2703, abs=1e-3)
    assert c.delta2 == pytest.approx(1.0)
    assert c.L == pytest.approx(0.6442, abs=1e-3)
    assert c.delta1 + c.delta2 * c.L == pytest.approx(3.9143, abs=2e-3)


def test_certificate_lognorm(plant):
    sys, fb, cert = plant
    chk = verify_certificate_lognorm(sys, fb, cert)
    assert chk.status is True
    assert chk.margins[0] == pytest.approx(0.0, abs=1e-12)
    assert chk.margins[1] == pytest.approx(0.2992, abs=1e-3)

    strict = StabilizabilityCertificate(D=1.0, mu1=0.0, mu2=0.2)
    assert verify_certificate_lognorm(sys, fb, strict).status is False

    loose = StabilizabilityCertificate(D=2.0, mu1=0.0, mu2=0.15)
    assert verify_certificate_lognorm(sys, fb, loose).status == "inconclusive"


def test_certificate_validation():
    with pytest.raises(ValueError):
        StabilizabilityCertificate(D=0.5, mu1=0.0, mu2=1.0)
    with pytest.raises(ValueError):
        StabilizabilityCertificate(D=1.0, mu1=-0.1, mu2=1.0)
    with pytest.raises(ValueError):
        StabilizabilityCertificate(D=1.0, mu1=0.0, mu2=0.0)
    cert = StabilizabilityCertificate(D=1.0, mu1=0.1, mu2=0.15)
    assert cert.admissible(1.0)
    assert not cert.admissible(0.5)


def test_feedback_law(plant):
    _, fb, _ = plant
    assert fb.gain_bound() == pytest.approx(np.sqrt(0.38**2 + 0.52**2))
    assert fb.check_homogeneity(rng=0)
    np.testing.assert_allclose(fb.apply([1.0, 1.0], 0), [-0.86])


def test_shape_checks():
    with pytest.raises(ValueError):
        SwitchedLinearSystem.from_matrices([np.eye(2), np.eye(3)], [np.ones((2, 1)), np.ones((3, 1))])
    with pytest.raises(ValueError):
        SwitchedLinearSystem.from_matrices([np.eye(2)], [])
    with pytest.raises(ValueError):
        FeedbackLaw(([[1.0, 2.0]], [[1.0]]))


def test_closed_loop_matrix(plant):
    sys, fb, _ = plant
    np.testing.assert_allclose(closed_loop_matrix(sys, fb, 0), [[-0.33, -1.43], [1.07, -0.33]])
    np.testing.assert_allclose(closed_loop_matrix(sys, fb, 1), [[-0.5, 2.0], [-1.88, -0.52]])


def test_propagate_segment_matched_model(plant):
    sys, fb, _ = plant
    x0 = np.array([0.3, -0.7])
    A, B, K = sys.A(1), sys.B(1), fb.K(1)
    x1, xhat1 = propagate_segment(A, B, A, B, K, x0, x0, 0.25)
    expected = expm(closed_loop_matrix(sys, fb, 1) * 0.25) @ x0
    np.testing.assert_allclose(x1, expected, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(xhat1, expected, rtol=1e-12, atol=1e-14)

    x1, xhat1 = propagate_segment(A, B, A, B, K, x0, x0, 0.0)
    assert np.array_equal(x1, x0) and np.array_equal(xhat1, x0)
    with pytest.raises(ValueError):
        propagate_segment(A, B, A, B, K, x0, x0, -1.0)


def test_propagate_segment_mismatched_model(plant):
    sys, fb, _ = plant
    # plant in mode 0 driven by the mode-1 model: x' = A0 x + B0 K1 xhat, xhat' = G1 xhat
    x0, xhat0 = np.array([1.0, 0.0]), np.array([0.5, 0.5])
    G1 = closed_loop_matrix(sys, fb, 1)
    x1, xhat1 = propagate_segment(sys.A(0), sys.B(0), sys.A(1), sys.B(1), fb.K(1), x0, xhat0, 0.1)
    np.testing.assert_allclose(xhat1, expm(G1 * 0.1) @ xhat0, rtol=1e-12, atol=1e-14)

    def rhs(t, x):
        return sys.A(0) @ x + sys.B(0) @ (fb.K(1) @ expm(G1 * t) @ xhat0)

    sol = solve_ivp(rhs, (0.0, 0.1), x0, rtol=1e-11, atol=1e-13)
    np.testing.assert_allclose(x1, sol.y[:, -1], atol=1e-9)


def test_flow_cache(plant):
    sys, fb, _ = plant
    cache = FlowCache(1e-3)
    G = closed_loop_matrix(sys, fb, 0)
    E1 = cache.get("g0", G, 8)
    E2 = cache.get("g0", G, 8)
    assert E1 is E2
    assert len(cache) == 1
    np.testing.assert_allclose(E1, expm(G * 0.008))
    cache.get("g0", G, 16)
    assert len(cache) == 2


def test_system_documents(plant):
    sys, fb, cert = plant
    doc = system_to_document(sys, fb, cert)
    sys2, fb2, cert2 = system_from_document(doc)
    assert cert2 == cert
    for i in range(sys.N):
        assert np.array_equal(sys2.A(i), sys.A(i))
        assert np.array_equal(fb2.K(i), fb.K(i))

    _, _, none = system_from_document({"modes": doc["modes"]})
    assert none is None


def test_system_document_errors():
    with pytest.raises(ConfigError):
        system_from_document({})
    with pytest.raises(ConfigError):
        system_from_document({"modes": [{"A": [[0.0]], "B": [[1.0]]}]})
    with pytest.raises(ConfigError):
        system_from_document({"modes": [{"A": [[0.0]], "B": [[1.0]], "K": [[1.0, 2.0]]}]})
    with pytest.raises(ConfigError):
        system_from_document({"modes": [{"A": [[0.0]], "B": [[1.0]], "K": [[1.0]]}],
                              "certificate": {"D": 0.5, "mu1": 0.0, "mu2": 1.0}})


def _random_segment(rng, d, c):
    return (rng.standard_normal((d, d)), rng.standard_normal((d, c)), rng.standard_normal((d, d)),
            rng.standard_normal((d, c)), rng.standard_normal((c, d)))


@pytest.mark.parametrize("d,c", [(1, 1), (2, 1), (3, 2), (4, 2)])
def test_propagate_segment_semigroup(d, c):
    rng = np.random.default_rng(10 * d + c)
    mats = _random_segment(rng, d, c)
    x0, xhat0 = rng.standard_normal(d), rng.standard_normal(d)
    xa, xhata = propagate_segment(*mats, x0, xhat0, 0.3)
    x2, xhat2 = propagate_segment(*mats, xa, xhata, 0.45)
    x1, xhat1 = propagate_segment(*mats, x0, xhat0, 0.75)
    scale = np.linalg.norm(np.concatenate([x1, xhat1]))
    np.testing.assert_allclose(x2, x1, rtol=1e-9, atol=1e-9 * scale)
    np.testing.assert_allclose(xhat2, xhat1, rtol=1e-9, atol=1e-9 * scale)


@pytest.mark.parametrize("d,c", [(1, 1), (2, 1), (3, 2), (4, 2)])
def test_propagate_segment_fixes_origin(d, c):
    mats = _random_segment(np.random.default_rng(d), d, c)
    x1, xhat1 = propagate_segment(*mats, np.zeros(d), np.zeros(d), 0.6)
    assert np.array_equal(x1, np.zeros(d))
    assert np.array_equal(xhat1, np.zeros(d))


@pytest.mark.parametrize("d", [1, 2, 3, 4])
def test_log_norm_bounds_growth(d):
    rng = np.random.default_rng(d)
    for _ in range(20):
        A = rng.standard_normal((d, d))
        for t in (0.01, 0.3, 1.5):
            assert np.linalg.norm(expm(A * t), 2) <= np.exp(log_norm(A) * t) * (1 + 1e-12)

        mats = _random_segment(rng, d, 1)
        G = augmented_matrix(*mats)
        z0 = rng.standard_normal(2 * d)
        x1, xhat1 = propagate_segment(*mats, z0[:d], z0[d:], 0.4)
        bound = np.exp(log_norm(G) * 0.4) * np.linalg.norm(z0)
        assert np.linalg.norm(np.concatenate([x1, xhat1])) <= bound * (1 + 1e-12)
