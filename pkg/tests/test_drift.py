import numpy as np
import pytest
from hypothesis import given, strategies as st

from dpem import drift as D

ALL = [
    D.RandomWalk(),
    D.GaussianLangevin(np.log(0.29), 0.5),
    D.GammaLangevin(2.0, 7.0),
    D.GompertzLinear(0.3),
    D.TaperedGammaLangevin((2.0, 7.0), (1.0, 2.0), 1.0, 3.0),
    D.CentredMean((0.0, 2.0, 5.0), (-1.0, -0.5, -2.0), 0.7),
    D.WaningEffect(1.0, 2.0, (2.0, 6.0), (1.0, 0.1)),
]


def test_examples():
    assert D.RandomWalk().mu(0.3, 1.0) == 0.0
    assert D.GammaLangevin(2.0, 7.0).mu(0.0) == pytest.approx(-5.0)
    assert D.GammaLangevin(2.0, 7.0).mu_prime(0.0) == pytest.approx(-7.0)
    assert D.GompertzLinear(0.3).mu(-4.0, 9.0) == pytest.approx(0.3)
    assert D.GaussianLangevin(np.log(0.29), 1.0).mu(np.log(0.29)) == pytest.approx(0.0)
    assert D.RandomWalk().mu_prime(1.0) == 0.0


@pytest.mark.parametrize("drift", ALL, ids=lambda d: d.tag)
def test_mu_prime_matches_finite_differences(drift, rng):
    a = rng.normal(0, 1.5, 50)
    y = rng.uniform(0, 6, 50)
    h = 1e-6
    fd = (drift.mu(a + h, y) - drift.mu(a - h, y)) / (2 * h)
    np.testing.assert_allclose(drift.mu_prime(a, y), fd, rtol=1e-6, atol=1e-6)


@pytest.mark.parametrize("drift", ALL, ids=lambda d: d.tag)
def test_vectorised_and_roundtrip(drift):
    a = np.linspace(-2, 2, 7)
    y = np.linspace(0.1, 5, 7)
    vec = drift.mu(a, y)
    assert np.shape(vec) == (7,)
    np.testing.assert_allclose(vec, [drift.mu(ai, yi) for ai, yi in zip(a, y)])
    assert D.drift_from_dict(drift.to_dict()) == drift


@given(st.floats(-5, 5, allow_subnormal=False), st.floats(-3, 3, allow_subnormal=False), st.floats(0.01, 10))
def test_gaussian_langevin_reverts(alpha, mean, var):
    m = D.GaussianLangevin(mean, var).mu(alpha)
    assert np.sign(m) == np.sign(mean - alpha)


@given(st.floats(0.1, 10), st.floats(0.1, 10), st.floats(-3, 3))
def test_gamma_langevin_zero(shape, rate, delta):
    d = D.GammaLangevin(shape, rate)
    a_star = np.log(shape / rate)
    assert d.mu(a_star) == pytest.approx(0.0, abs=1e-9)
    if abs(delta) > 1e-6:
        assert np.sign(d.mu(a_star + delta)) == -np.sign(delta)


def test_taper_endpoints_and_continuity():
    t = D.TaperedGammaLangevin((2.0, 7.0), (1.0, 2.0), 1.0, 3.0)
    a = np.linspace(-2, 1, 5)
    np.testing.assert_allclose(t.mu(a, 0.5), D.GammaLangevin(2.0, 7.0).mu(a))
    np.testing.assert_allclose(t.mu(a, 4.0), D.GammaLangevin(1.0, 2.0).mu(a))
    ys = np.linspace(0.5, 3.5, 3001)
    assert np.max(np.abs(np.diff(t.mu(0.2, ys)))) < 1e-2


def test_waning_sign_and_pre_start():
    w = D.WaningEffect(1.5, 2.0, (2.0, 6.0), (1.0, 0.1))
    b = np.array([-1.0, -0.2, 0.3, 2.0])
    np.testing.assert_allclose(w.mu(b, 1.0), D.GaussianLangevin(0.0, 1.5).mu(b))
    for y in (2.0, 3.0, 10.0):
        assert np.all(np.sign(w.mu(b, y)) == -np.sign(b))


def test_centred_mean_constant_extension():
    c = D.CentredMean((0.0, 2.0), (-1.0, -2.0), 1.0)
    assert c.mu(-2.0, 50.0) == pytest.approx(0.0)
    assert c.mu(-1.0, 0.0) == pytest.approx(0.0)


@pytest.mark.parametrize(
    "spec",
    [
        {"type": "gaussian_langevin", "mean": 0.0, "var": 0.0},
        {"type": "gamma_langevin", "shape": -1.0, "rate": 1.0},
        {"type": "tapered_gamma_langevin", "start": [1, 1], "end": [1, 1], "t_a": 2.0, "t_b": 1.0},
        {"type": "nope"},
        {"type": "gompertz", "bogus": 1},
    ],
)
def test_invalid_specs(spec):
    with pytest.raises((ValueError, TypeError)):
        D.drift_from_dict(spec)
