import numpy as np
import pytest
from scipy import stats

from dpem.discretise import InnovationScheme
from dpem.drift import GaussianLangevin, RandomWalk
from dpem.posterior import (
    ExtrapolationConfig,
    PosteriorDraws,
    curve_quantiles,
    ess,
    extrapolate,
    gpd_fit,
    mean_survival,
    mean_survival_difference,
    psis_loo,
    refinement,
)


def constant_draws(log_rates, y_plus=3.0, sigma=0.5, gamma=2.0):
    snaps = [dict(sigma=sigma, gamma=gamma, blocks=[(np.zeros(0), np.array([a]))], loglik=None)
             for a in log_rates]
    return PosteriorDraws.from_snapshots(snaps, y_plus)


def test_refinement_rule():
    cfg = ExtrapolationConfig(10.0)
    np.testing.assert_array_equal(refinement(np.array([0.05, 0.1, 0.15, 0.5]), cfg), [1, 1, 3, 25])
    assert refinement(np.array([0.5]), ExtrapolationConfig(10.0, kappa=4))[0] == 4
    with pytest.raises(ValueError):
        ExtrapolationConfig(10.0, kappa=0)


@pytest.mark.parametrize("kappa", [1, 4, 16])
def test_extrapolation_variance_rate(kappa, rng):
    # random walk: Var(alpha(h) - alpha(y_plus)) = gamma * sigma^2 * (h - y_plus) for any kappa
    d = constant_draws(np.zeros(20000), sigma=0.4, gamma=3.0)
    e = extrapolate(d, [RandomWalk()], InnovationScheme(), ExtrapolationConfig(8.0, kappa=kappa), rng)
    end = np.array([a[-1] for _, a in e.blocks[0]])
    assert end.var() == pytest.approx(3.0 * 0.16 * 5.0, rel=0.05)
    assert e.horizon == 8.0


def test_extrapolation_keeps_observed_part(rng):
    d = constant_draws([-1.0, 0.5])
    e = extrapolate(d, [RandomWalk()], InnovationScheme(), ExtrapolationConfig(6.0), rng)
    for k, a in e.blocks[0]:
        assert np.all(k > 3.0) and len(a) == len(k) + 1
    assert [a[0] for _, a in e.blocks[0]] == [-1.0, 0.5]
    with pytest.raises(ValueError):
        extrapolate(d, [RandomWalk()], InnovationScheme(), ExtrapolationConfig(2.0), rng)


def test_langevin_extrapolation_reaches_stationary_law(rng):
    d = constant_draws(np.full(3000, 2.0), sigma=0.5, gamma=4.0)
    e = extrapolate(d, [GaussianLangevin(-1.0, 0.25)], InnovationScheme(), ExtrapolationConfig(30.0), rng)
    end = np.array([a[-1] for _, a in e.blocks[0]])
    assert stats.kstest(end, stats.norm(-1.0, 0.5).cdf).pvalue > 0.01


def test_langevin_band_narrower_than_random_walk(rng):
    d = constant_draws(rng.normal(-1.0, 0.2, 2000), sigma=0.5, gamma=4.0)
    cfg = ExtrapolationConfig(20.0, seed=1)
    rw = extrapolate(d, [RandomWalk()], InnovationScheme(), cfg)
    gl = extrapolate(d, [GaussianLangevin(-1.0, 0.25)], InnovationScheme(), cfg)
    qr, qg = curve_quantiles(rw, [15.0]), curve_quantiles(gl, [15.0])
    assert (qg["upper"] - qg["lower"])[0] < (qr["upper"] - qr["lower"])[0]
    wr, wg = (mean_survival(x, 20.0) for x in (rw, gl))
    assert wg["upper"] - wg["lower"] < wr["upper"] - wr["lower"]


def test_curve_quantiles_ordering(rng):
    d = constant_draws(rng.normal(-0.5, 0.3, 500))
    for which in ("hazard", "log-hazard", "survival"):
        q = curve_quantiles(d, np.linspace(0.1, 3.0, 9), which)
        assert np.all(q["lower"] <= q["median"]) and np.all(q["median"] <= q["upper"])
    s = curve_quantiles(d, np.linspace(0.0, 3.0, 9), "survival")
    assert s["median"][0] == 1.0 and np.all(np.diff(s["median"]) < 0)
    one = curve_quantiles(constant_draws([np.log(0.5)]), [1.0, 2.0], "survival")
    np.testing.assert_allclose(one["median"], np.exp([-0.5, -1.0]))
    with pytest.raises(ValueError):
        curve_quantiles(d, [0.0, 1.0], "hazard")
    with pytest.raises(ValueError):
        curve_quantiles(d, [2.0, 1.0], "survival")


def test_mean_survival_difference_examples():
    t, c = constant_draws([np.log(0.5)] * 3), constant_draws([0.0] * 3)
    out = mean_survival_difference(t, c, 3.0)
    assert out["median"] == pytest.approx((1 - np.exp(-1.5)) / 0.5 - (1 - np.exp(-3.0)), rel=1e-12)
    assert mean_survival_difference(c, c)["upper"] == 0.0
    assert mean_survival_difference(t, constant_draws([0.0] * 5), 3.0)["lower"] > 0


def test_psis_loo_matches_exact_refits(rng):
    # y ~ N(theta, 1), theta ~ N(0, 10^2): exact leave-one-out predictives are normal
    y = rng.normal(1.0, 1.0, 40)
    prec = 1 / 100 + y.size
    theta = rng.normal(y.sum() / prec, np.sqrt(1 / prec), 8000)
    ll = stats.norm.logpdf(y[None, :], theta[:, None], 1.0)
    res = psis_loo(ll)
    prec_i = 1 / 100 + y.size - 1
    m_i = (y.sum() - y) / prec_i
    exact = stats.norm.logpdf(y, m_i, np.sqrt(1 + 1 / prec_i))
    np.testing.assert_allclose(res.pointwise, exact, atol=0.02)
    lpd = stats.norm.logpdf(y, y.sum() / prec, np.sqrt(1 + 1 / prec)).sum()
    assert res.n_bad_k == 0
    assert res.p_loo == pytest.approx(lpd - exact.sum(), abs=0.1)
    with pytest.raises(ValueError):
        psis_loo(ll[:50])


@pytest.mark.parametrize("k", [0.2, 0.6])
def test_gpd_fit_recovers_shape(k):
    x = stats.genpareto(k, scale=2.0).rvs(5000, random_state=np.random.default_rng(7))
    kh, sh = gpd_fit(x)
    assert kh == pytest.approx(k, abs=0.06)
    assert sh == pytest.approx(2.0, rel=0.1)


def test_ess_reference_cases(rng):
    x = rng.standard_normal(8000)
    assert ess(x) == pytest.approx(8000, rel=0.1)
    ar = np.empty(40000)
    ar[0] = 0.0
    e = rng.standard_normal(ar.size)
    for t in range(1, ar.size):
        ar[t] = 0.8 * ar[t - 1] + e[t]
    assert ess(ar) == pytest.approx(40000 / 9, rel=0.2)
    assert ess(np.repeat(x[:4000], 2)) == pytest.approx(4000, rel=0.15)
    assert ess(np.ones(50), return_flag=True) == (50.0, True)
    with pytest.raises(ValueError):
        ess(np.ones(5))
