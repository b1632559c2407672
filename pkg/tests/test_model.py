import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

import dpem
from dpem import model as M
from dpem.data import from_arrays
from dpem.discretise import InnovationScheme
from dpem.drift import GammaLangevin, GaussianLangevin, RandomWalk, WaningEffect
from dpem.pdmp import build_target


def random_model(rng, J=None, p=0):
    J = rng.integers(0, 6) if J is None else J
    knots = np.concatenate([[0.0], np.sort(rng.uniform(0.01, 4.0, J)), [4.5]])
    ck = tuple(np.concatenate([[0.0], np.sort(rng.uniform(0.01, 4.0, rng.integers(0, 4))), [4.5]])
               for _ in range(p))
    ce = tuple(rng.normal(0, 0.5, len(k) - 1) for k in ck)
    return M.HazardModel(knots, rng.normal(-0.7, 0.8, J + 1), ck, ce)


def test_constant_hazard_mean():
    m = M.HazardModel([0.0, 1.0], [np.log(0.5)])
    assert m.restricted_mean() == pytest.approx(2.0, rel=1e-12)
    assert m.survival(0.0) == 1.0
    assert m.cumulative_hazard(2.0) == pytest.approx(1.0)


def test_intervals_are_left_open_right_closed():
    m = M.HazardModel([0.0, 1.0, 2.0, 3.0], [0.0, 1.0, 2.0])
    assert m.log_hazard(1.0) == 0.0
    assert m.log_hazard(1.0 + 1e-12) == 1.0
    assert m.log_hazard(10.0) == 2.0


def test_restricted_mean_matches_quadrature(rng):
    # 100 random models, closed form vs adaptive quadrature of S
    for _ in range(100):
        m = random_model(rng, p=1)
        w = np.array([rng.choice([0.0, 1.0])])
        cut = rng.uniform(0.5, 8.0)
        edges, _ = m.union_steps(w)
        pts = [e for e in edges if 0 < e < cut]
        q, _ = integrate.quad(lambda y: m.survival(y, w), 0, cut, points=pts or None, limit=200,
                              epsabs=1e-13, epsrel=1e-13)
        assert m.restricted_mean(cut, w) == pytest.approx(q, abs=1e-8)


def test_two_piece_unbounded_mean():
    m = M.HazardModel([0.0, 1.0, 2.0], [np.log(0.5), np.log(2.0)])
    q = integrate.quad(lambda y: m.survival(y), 0, 1)[0] + integrate.quad(lambda y: m.survival(y), 1, np.inf)[0]
    assert m.restricted_mean() == pytest.approx(q, abs=1e-8)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_nested_cuts_monotone(seed):
    rng = np.random.default_rng(seed)
    m = random_model(rng)
    a, b = np.sort(rng.uniform(0.1, 6, 2))
    assert m.restricted_mean(a) <= m.restricted_mean(b) + 1e-15


def test_sufficient_stats_match_direct_likelihood(rng):
    m = random_model(rng, J=4)
    ds = dpem.data.simulate_dataset(rng, 80, m, 3.0, censor_rate=0.2)
    knots = m.knots[1:-1][m.knots[1:-1] < 3.0]
    tab = M.sufficient_stats(knots, ds)
    eta = m.log_hazards[: len(knots) + 1]
    assert tab.log_likelihood(eta) == pytest.approx(M.log_likelihood(m, ds), rel=1e-10)


def test_merge_equals_recomputation(rng):
    m = random_model(rng, J=3)
    ds = dpem.data.simulate_dataset(rng, 60, m, 3.0)
    cand = np.sort(rng.uniform(0.05, 2.95, 7))
    active = rng.random(7) < 0.5
    a = M.sufficient_stats(cand, ds).merge(active)
    b = M.sufficient_stats(cand[active], ds)
    np.testing.assert_allclose(a.events, b.events)
    np.testing.assert_allclose(a.exposure, b.exposure)
    np.testing.assert_array_equal(a.event_interval, b.event_interval)


def test_sample_times_match_survival(rng):
    m = M.HazardModel([0.0, 0.7, 1.5, 2.0], [np.log(0.3), np.log(1.2), np.log(0.6)])
    t = M.sample_times(m, rng, 20000)
    for y in (0.3, 0.7, 1.2, 2.5):
        emp = np.mean(t > y)
        assert abs(emp - m.survival(y)) < 4 * np.sqrt(m.survival(y) * (1 - m.survival(y)) / t.size)


def _target_case(rng, drift, kind, p=0):
    n = 40
    cov = rng.integers(0, 2, (n, p)).astype(float) if p else None
    ds = from_arrays(rng.uniform(0.05, 3.0, n), rng.random(n) < 0.6, 3.0, cov)
    sch = InnovationScheme(kind)
    kc = dpem.KnotConfig(3.0, 7.0)
    cov_drifts = [WaningEffect(1.0, 1.5, (1.5, 3.0), (1.0, 0.3))] * p
    tg = build_target(ds, drift, sch, kc, cov_drifts)
    cands = [np.sort(rng.uniform(0.01, 2.99, rng.integers(0, 8))) for _ in range(p + 1)]
    fr = tg.frame(cands)
    return tg, fr


@pytest.mark.parametrize("kind", ["skew_symmetric", "euler_maruyama"])
@pytest.mark.parametrize("drift", [RandomWalk(), GaussianLangevin(-1.0, 0.5), GammaLangevin(2.0, 3.0)],
                         ids=lambda d: d.tag)
def test_gradient_finite_differences(rng, drift, kind):
    for _ in range(5):
        tg, fr = _target_case(rng, drift, kind, p=1)
        x = rng.normal(0, 0.6, fr.dim)
        x[-1] = rng.uniform(0.2, 1.0)
        free = ~(fr.sticky & (rng.random(fr.dim) < 0.3))
        x[~free] = 0.0
        _, g = tg.log_posterior_and_grad(fr, x, free)
        h = 1e-6
        for i in np.flatnonzero(free):
            e = np.zeros(fr.dim)
            e[i] = h
            fd = (tg.log_posterior_and_grad(fr, x + e, free)[0] - tg.log_posterior_and_grad(fr, x - e, free)[0]) / (2 * h)
            assert g[i] == pytest.approx(fd, rel=1e-4, abs=1e-5)
        assert np.all(g[~free] == 0.0)


def test_loglik_agrees_with_direct_formula(rng):
    tg, fr = _target_case(rng, RandomWalk(), "skew_symmetric", p=1)
    x = rng.normal(0, 0.5, fr.dim)
    x[-1] = 0.4
    al = [tg.alphas(fr, x, b) for b in range(2)]
    m = M.HazardModel(np.concatenate([[0.0], fr.candidates[0], [5.0]]), al[0],
                      (np.concatenate([[0.0], fr.candidates[1], [5.0]]),), (al[1],))
    assert tg.loglik(fr, x) == pytest.approx(M.log_likelihood(m, tg.ds), rel=1e-10)
    assert tg.pointwise_loglik(fr, x).sum() == pytest.approx(tg.loglik(fr, x), rel=1e-10)


def test_inactive_knots_leave_likelihood_unchanged(rng):
    tg, fr = _target_case(rng, RandomWalk(), "skew_symmetric")
    if not fr.candidates[0].size:
        fr = tg.frame([np.array([1.0, 2.0])])
    x = rng.normal(0, 0.5, fr.dim)
    x[-1] = 0.5
    x[1] = 0.0
    small = tg.frame([np.delete(fr.candidates[0], 0)])
    y = np.delete(x, 1)
    assert tg.loglik(fr, x) == pytest.approx(tg.loglik(small, y), rel=1e-12)


def test_block_count_validation(colon):
    with pytest.raises(ValueError):
        M.Target(dpem.load_colon(("treated",)), [M.Block(RandomWalk())], InnovationScheme())
    with pytest.raises(ValueError):
        M.HazardModel([0.5, 1.0], [0.0])
