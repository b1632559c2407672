"""Posterior draws, extrapolation beyond y_+, estimands and diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from . import discretise
from .model import exposure_matrices, restricted_mean_steps


@dataclass
class PosteriorDraws:
    """Skeleton of posterior draws.

    ``blocks[b][s]`` is ``(knots, alphas)`` for block ``b`` (0 = baseline) of
    draw ``s``: ``len(alphas) == len(knots) + 1`` and ``alphas[j]`` is the value on
    ``(knots[j-1], knots[j]]``, the last one open-ended.
    """

    sigma: np.ndarray
    gamma: np.ndarray
    blocks: list
    y_plus: float
    horizon: float
    chain: np.ndarray
    index: np.ndarray
    loglik: np.ndarray | None = None
    info: dict = field(default_factory=dict)

    @classmethod
    def from_snapshots(cls, snaps, y_plus, chain=0):
        nb = len(snaps[0]["blocks"]) if snaps else 1
        ll = None
        if snaps and snaps[0]["loglik"] is not None:
            ll = np.array([s["loglik"] for s in snaps])
        return cls(
            sigma=np.array([s["sigma"] for s in snaps]),
            gamma=np.array([s["gamma"] for s in snaps]),
            blocks=[[s["blocks"][b] for s in snaps] for b in range(nb)],
            y_plus=y_plus,
            horizon=y_plus,
            chain=np.full(len(snaps), chain, dtype=int),
            index=np.arange(len(snaps)),
            loglik=ll,
        )

    @classmethod
    def concat(cls, parts):
        parts = list(parts)
        ll = None
        if all(p.loglik is not None for p in parts):
            ll = np.concatenate([p.loglik for p in parts])
        return cls(
            sigma=np.concatenate([p.sigma for p in parts]),
            gamma=np.concatenate([p.gamma for p in parts]),
            blocks=[sum((p.blocks[b] for p in parts), []) for b in range(len(parts[0].blocks))],
            y_plus=parts[0].y_plus,
            horizon=parts[0].horizon,
            chain=np.concatenate([p.chain for p in parts]),
            index=np.concatenate([p.index for p in parts]),
            loglik=ll,
        )

    def __len__(self):
        return len(self.sigma)

    @property
    def p(self):
        return len(self.blocks) - 1

    def steps(self, s, covariates=None):
        """Union step function ``(edges, eta)`` of draw ``s`` for covariate vector ``covariates``."""
        k0, a0 = self.blocks[0][s]
        w = np.zeros(self.p) if covariates is None else np.asarray(covariates, dtype=float)
        use = [k for k in range(self.p) if w[k] != 0.0]
        if not use:
            return np.concatenate([[0.0], k0]), a0
        edges = np.concatenate([[0.0], k0] + [self.blocks[k + 1][s][0] for k in use])
        edges = np.unique(edges)
        eta = a0[np.searchsorted(k0, edges, side="right")]
        for k in use:
            kk, bb = self.blocks[k + 1][s]
            eta = eta + w[k] * bb[np.searchsorted(kk, edges, side="right")]
        return edges, eta

    def hazard_model(self, s):
        from .model import HazardModel

        def knots_of(k):
            return np.concatenate([[0.0], k, [max(self.horizon, (k[-1] if len(k) else 0.0) + 1.0)]])

        k0, a0 = self.blocks[0][s]
        ck = tuple(knots_of(self.blocks[b][s][0]) for b in range(1, len(self.blocks)))
        ce = tuple(self.blocks[b][s][1] for b in range(1, len(self.blocks)))
        return HazardModel(knots_of(k0), a0, ck, ce)

    def log_hazard_at(self, y, covariates=None):
        """(draws, len(y)) matrix of log-hazards."""
        y = np.atleast_1d(np.asarray(y, dtype=float))
        out = np.empty((len(self), y.size))
        for s in range(len(self)):
            edges, eta = self.steps(s, covariates)
            out[s] = eta[np.clip(np.searchsorted(edges, y, side="left") - 1, 0, None)]
        return out

    def pointwise_loglik(self, ds):
        """(draws, n) log-likelihood contributions recomputed from the skeleton."""
        out = np.empty((len(self), ds.n))
        W = ds.covariates
        for s in range(len(self)):
            k0, a0 = self.blocks[0][s]
            allk = [k0] + [self.blocks[b][s][0] for b in range(1, len(self.blocks))]
            grid = np.unique(np.concatenate(allk)) if any(len(k) for k in allk) else np.zeros(0)
            D, E, _ = exposure_matrices(ds.times, ds.events, grid)
            left = np.concatenate([[0.0], grid])
            eta = np.repeat(a0[np.searchsorted(k0, left, side="right")][None, :], ds.n, axis=0)
            for k in range(self.p):
                kk, bb = self.blocks[k + 1][s]
                eta = eta + W[:, [k]] * bb[np.searchsorted(kk, left, side="right")][None, :]
            out[s] = np.sum(D * eta - E * np.exp(eta), axis=1)
        return out


# ---------------------------------------------------------------------------
# Extrapolation


@dataclass(frozen=True)
class ExtrapolationConfig:
    """``kappa=None`` picks, per draw, the smallest integer with ``sigma/sqrt(kappa) <= 0.1``."""

    horizon: float
    kappa: int | None = None
    seed: int = 0
    max_step_sigma: float = 0.1

    def __post_init__(self):
        if self.kappa is not None and (int(self.kappa) != self.kappa or self.kappa < 1):
            raise ValueError("kappa must be a positive integer")


def refinement(sigma, config: ExtrapolationConfig):
    if config.kappa is not None:
        return np.full(np.shape(sigma), int(config.kappa))
    return np.maximum(1, np.ceil((np.asarray(sigma) / config.max_step_sigma) ** 2 - 1e-12)).astype(int)


def extrapolate(draws: PosteriorDraws, drifts, scheme, config: ExtrapolationConfig, rng=None):
    """Extend every draw from ``y_plus`` to ``config.horizon``.

    Each block continues from its value at ``y_plus`` with knots
    PPP(kappa*gamma) and innovations of scale ``sigma/sqrt(kappa)``, so that
    the variance rate ``gamma*sigma**2`` of the time-changed diffusion is kept.
    ``drifts`` lists one drift per block.
    """
    if config.horizon <= draws.y_plus:
        raise ValueError("horizon must exceed y_plus")
    if len(drifts) != len(draws.blocks):
        raise ValueError("need one drift per block")
    rng = np.random.default_rng(config.seed) if rng is None else rng
    kappa = refinement(draws.sigma, config)
    g2 = draws.gamma * kappa
    s2 = draws.sigma / np.sqrt(kappa)
    new_blocks = []
    for b, drift in enumerate(drifts):
        start = np.array([al[-1] for _, al in draws.blocks[b]])
        paths = discretise.simulate_paths(drift, scheme, start, draws.y_plus, config.horizon, g2, s2, rng)
        new_blocks.append([
            (np.concatenate([k, pk]), np.concatenate([a, pa]))
            for (k, a), (pk, pa) in zip(draws.blocks[b], paths)
        ])
    return PosteriorDraws(draws.sigma, draws.gamma, new_blocks, draws.y_plus, config.horizon,
                          draws.chain, draws.index, draws.loglik, dict(draws.info, kappa=kappa.tolist()))


def extrapolate_endpoints(draws: PosteriorDraws, drifts, scheme, config: ExtrapolationConfig, rng=None):
    """Log-hazard of every block at ``config.horizon``, one row per block.

    Same process as :func:`extrapolate` but without storing paths, for
    horizons where whole paths would not fit in memory.
    """
    if config.horizon <= draws.y_plus:
        raise ValueError("horizon must exceed y_plus")
    if len(drifts) != len(draws.blocks):
        raise ValueError("need one drift per block")
    rng = np.random.default_rng(config.seed) if rng is None else rng
    kappa = refinement(draws.sigma, config)
    out = np.empty((len(drifts), len(draws)))
    for b, drift in enumerate(drifts):
        start = np.array([al[-1] for _, al in draws.blocks[b]])
        out[b] = discretise.simulate_endpoints(drift, scheme, start, draws.y_plus, config.horizon,
                                               draws.gamma * kappa, draws.sigma / np.sqrt(kappa), rng)
    return out


# ---------------------------------------------------------------------------
# Estimands


def summarise(values, level=0.95):
    values = np.asarray(values, dtype=float)
    lo, hi = (1 - level) / 2, 1 - (1 - level) / 2
    return dict(median=float(np.median(values)), lower=float(np.quantile(values, lo)),
                upper=float(np.quantile(values, hi)), mean=float(np.mean(values)))


def mean_survival_draws(draws: PosteriorDraws, y_cut=None, covariates=None):
    y_cut = draws.horizon if y_cut is None else y_cut
    if y_cut > draws.horizon + 1e-12:
        raise ValueError("y_cut beyond the horizon of the draws")
    out = np.empty(len(draws))
    for s in range(len(draws)):
        edges, eta = draws.steps(s, covariates)
        out[s] = restricted_mean_steps(edges, np.exp(eta), y_cut)
    return out


def mean_survival(draws_or_model, y_cut=None, covariates=None):
    """Restricted mean survival on ``(0, y_cut)``: median and central 95% interval across draws."""
    if hasattr(draws_or_model, "restricted_mean"):
        v = draws_or_model.restricted_mean(np.inf if y_cut is None else y_cut, covariates)
        return dict(median=v, lower=v, upper=v, mean=v)
    return summarise(mean_survival_draws(draws_or_model, y_cut, covariates))


def curve_quantiles(draws: PosteriorDraws, grid, which="hazard", covariates=None, level=0.95):
    if len(draws) == 0:
        raise ValueError("no draws")
    grid = np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) < 0):
        raise ValueError("grid must be increasing")
    if which in ("hazard", "log-hazard"):
        if np.any(grid <= 0):
            raise ValueError("hazard grid must be positive")
        vals = draws.log_hazard_at(grid, covariates)
        if which == "hazard":
            vals = np.exp(vals)
    elif which == "survival":
        vals = np.empty((len(draws), grid.size))
        for s in range(len(draws)):
            edges, eta = draws.steps(s, covariates)
            right = np.append(edges[1:], np.inf)
            expo = np.clip(grid[:, None] - edges[None, :], 0.0, (right - edges)[None, :])
            vals[s] = np.exp(-(expo @ np.exp(eta)))
    else:
        raise ValueError(f"unknown curve {which!r}")
    a = (1 - level) / 2
    return dict(grid=grid, median=np.median(vals, axis=0), lower=np.quantile(vals, a, axis=0),
                upper=np.quantile(vals, 1 - a, axis=0))


def mean_survival_difference(draws_t, draws_c, y_cut=None, covariates_t=None, covariates_c=None, rng=None):
    """Treatment minus control restricted mean, paired by draw index.

    Unequal draw counts are paired by resampling the shorter set.
    """
    if abs(draws_t.horizon - draws_c.horizon) > 1e-12 and y_cut is None:
        raise ValueError("draw sets have different horizons; give y_cut")
    mt = mean_survival_draws(draws_t, y_cut, covariates_t)
    mc = mean_survival_draws(draws_c, y_cut, covariates_c)
    if mt.size != mc.size:
        rng = np.random.default_rng(0) if rng is None else rng
        n = max(mt.size, mc.size)
        mt = mt if mt.size == n else rng.choice(mt, n)
        mc = mc if mc.size == n else rng.choice(mc, n)
    return summarise(mt - mc)


# ---------------------------------------------------------------------------
# PSIS-LOO


def gpd_fit(x):
    """Zhang & Stephens (2009) estimate of the generalized Pareto ``(k, sigma)`` for exceedances ``x``,
    with the shape shrunk towards 0.5 by a weak prior."""
    x = np.sort(np.asarray(x, dtype=float))
    n = x.size
    m = 30 + int(np.sqrt(n))
    b = 1.0 - np.sqrt(m / (np.arange(1, m + 1) - 0.5))
    b = b / (3.0 * x[int(n / 4 + 0.5) - 1]) + 1.0 / x[-1]
    k = np.log1p(-b[:, None] * x).mean(axis=1)
    ll = n * (np.log(-b / k) - k - 1.0)
    w = np.exp(ll - logsumexp(ll))
    keep = w >= 10 * np.finfo(float).eps
    w, b = w[keep] / w[keep].sum(), b[keep]
    bh = np.sum(b * w)
    kh = np.log1p(-bh * x).mean()
    sh = -kh / bh
    kh = (n * kh + 10 * 0.5) / (n + 10)
    return kh, sh


def psis_smooth(log_ratios):
    """Pareto-smoothed log weights (unnormalised) and the tail shape estimate."""
    lw = np.asarray(log_ratios, dtype=float).copy()
    S = lw.size
    lw -= lw.max()
    M = int(math.ceil(min(0.2 * S, 3.0 * math.sqrt(S))))
    order = np.argsort(lw, kind="stable")
    tail_idx = order[-M:]
    cutoff = lw[order[-M - 1]]
    tail = np.exp(lw[tail_idx])
    exc = tail - np.exp(cutoff)
    if M < 5 or np.all(exc <= 0) or np.ptp(tail) == 0:
        return lw, np.nan
    k, sig = gpd_fit(exc)
    if not np.isfinite(k):
        return lw, np.nan
    p = (np.arange(1, M + 1) - 0.5) / M
    if abs(k) < 1e-12:
        q = -sig * np.log1p(-p)
    else:
        q = sig * np.expm1(-k * np.log1p(-p)) / k
    smoothed = np.log(q + np.exp(cutoff))
    lw[tail_idx] = np.minimum(smoothed, 0.0)
    return lw, float(k)


@dataclass
class LooResult:
    elpd_loo: float
    se: float
    pointwise: np.ndarray
    pareto_k: np.ndarray
    p_loo: float

    @property
    def n_bad_k(self):
        return int(np.sum(self.pareto_k > 0.7))

    def to_dict(self):
        k = self.pareto_k[np.isfinite(self.pareto_k)]
        return dict(elpd_loo=self.elpd_loo, se=self.se, p_loo=self.p_loo,
                    max_k=float(k.max()) if k.size else None, n_k_above_0_7=self.n_bad_k,
                    n_k_undefined=int(np.sum(~np.isfinite(self.pareto_k))))


def psis_loo(loglik, min_draws=100) -> LooResult:
    """PSIS-LOO from a (draws, n) matrix of pointwise log-likelihoods."""
    loglik = np.asarray(loglik, dtype=float)
    S, n = loglik.shape
    if S < min_draws:
        raise ValueError(f"PSIS-LOO needs at least {min_draws} draws, got {S}")
    loo = np.empty(n)
    ks = np.empty(n)
    for i in range(n):
        lw, k = psis_smooth(-loglik[:, i])
        lw -= logsumexp(lw)
        loo[i] = logsumexp(lw + loglik[:, i])
        ks[i] = k
    lpd = logsumexp(loglik, axis=0) - np.log(S)
    return LooResult(float(loo.sum()), float(np.sqrt(n * np.var(loo))), loo, ks, float(np.sum(lpd - loo)))


# ---------------------------------------------------------------------------
# Effective sample size


def _autocov(x):
    n = x.size
    f = np.fft.rfft(x - x.mean(), n=2 * n)
    ac = np.fft.irfft(f * np.conj(f))[:n]
    return ac / n


def ess(samples, return_flag=False):
    """Effective sample size by Geyer's initial positive sequence.

    ``samples`` is 1-D or (chains, draws).  A constant input returns the draw
    count (with ``degenerate=True`` when ``return_flag`` is set).
    """
    x = np.atleast_2d(np.asarray(samples, dtype=float))
    m, n = x.shape
    if n < 10:
        raise ValueError("need at least 10 samples")
    if np.all(np.ptp(x, axis=1) == 0):
        return (float(m * n), True) if return_flag else float(m * n)
    acov = np.array([_autocov(c) for c in x])
    chain_mean = x.mean(axis=1)
    w = acov[:, 0].mean() * n / (n - 1)
    var_plus = w * (n - 1) / n + (np.var(chain_mean, ddof=1) if m > 1 else 0.0)
    rho = 1.0 - (w - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0
    tau = -1.0
    prev = np.inf
    for k in range(0, n - 1, 2):
        g = rho[k] + rho[k + 1]
        if g < 0:
            break
        g = min(g, prev)
        tau += 2.0 * g
        prev = g
    out = float(m * n / max(tau, 1e-12))
    return (out, False) if return_flag else out


def mcse_mean(samples):
    x = np.asarray(samples, dtype=float)
    return float(np.std(x) / np.sqrt(ess(x)))
