"""Innovation densities of the discretised log-hazard diffusion.

Both schemes are written in the non-centred coordinate ``theta`` (the
innovation divided by the step scale ``sigma``) and depend on the drift
only through the product ``shift = sigma * mu``:

* Euler-Maruyama: ``theta ~ Normal(shift, 1)``
* skew-symmetric: density ``(1 + tanh(shift * theta)) * phi(theta)``
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

LOG_2PI = np.log(2.0 * np.pi)
PHI0 = 1.0 / np.sqrt(2.0 * np.pi)

EULER_MARUYAMA = "euler_maruyama"
SKEW_SYMMETRIC = "skew_symmetric"


@dataclass(frozen=True)
class InnovationScheme:
    """Discretisation scheme plus its scale parameters.

    Attributes:
        kind: ``"skew_symmetric"`` or ``"euler_maruyama"``.
        sigma: step scale used when sigma is not sampled (prior simulation,
            fixed-sigma runs).
        sigma0: standard deviation of the initial log-hazard.
        sigma_rate: rate of the Exponential prior on sigma.
    """

    kind: str = SKEW_SYMMETRIC
    sigma: float = 0.5
    sigma0: float = 2.0
    sigma_rate: float = 2.0

    def __post_init__(self):
        if self.kind not in (EULER_MARUYAMA, SKEW_SYMMETRIC):
            raise ValueError(f"unknown scheme {self.kind!r}")
        if not (self.sigma > 0 and self.sigma0 > 0 and self.sigma_rate > 0):
            raise ValueError("scheme scales must be positive")

    @property
    def skew(self) -> bool:
        return self.kind == SKEW_SYMMETRIC


def _check_sigma(sigma):
    if np.any(np.asarray(sigma) <= 0):
        raise ValueError("sigma must be positive")


def log1p_tanh(z):
    """Stable ``log(1 + tanh(z))``."""
    z = np.asarray(z, dtype=float)
    return np.log(2.0) - np.logaddexp(0.0, -2.0 * z)


def innovation_logpdf(scheme: InnovationScheme, theta, mu_val, sigma):
    """Log-density of the standardised innovation ``theta``."""
    _check_sigma(sigma)
    theta = np.asarray(theta, dtype=float)
    shift = np.asarray(mu_val) * sigma
    if scheme.skew:
        return log1p_tanh(shift * theta) - 0.5 * theta**2 - 0.5 * LOG_2PI
    return -0.5 * (theta - shift) ** 2 - 0.5 * LOG_2PI


def logpdf_grad(skew: bool, theta, shift):
    """Partial derivatives of the log-density in ``theta`` and in ``shift``."""
    if skew:
        w = 2.0 * expit(-2.0 * shift * theta)  # 1 - tanh(shift*theta)
        return w * shift - theta, w * theta
    r = theta - shift
    return -r, r


def density_at_zero(skew: bool, shift):
    """Innovation density at ``theta = 0``; governs how fast a frozen knot is released."""
    if skew:
        return np.full(np.shape(shift), PHI0)[()]
    return PHI0 * np.exp(-0.5 * np.asarray(shift) ** 2)


def sample_innovation(scheme: InnovationScheme, mu_val, sigma, rng, size=None):
    """Draw standardised innovations.

    The skew-symmetric draw keeps ``Z ~ N(0,1)`` with probability
    ``(1 + tanh(shift*Z))/2`` and returns ``-Z`` otherwise.
    """
    _check_sigma(sigma)
    shift = np.asarray(mu_val) * sigma
    if size is None:
        size = np.shape(shift)
    z = rng.standard_normal(size)
    if scheme.skew:
        keep = rng.random(size) < expit(2.0 * shift * z)
        return np.where(keep, z, -z)
    return z + shift


def simulate_paths(drift, scheme, alpha_start, t_start, t_end, gamma, sigma, rng):
    """Continue log-hazard paths over ``(t_start, t_end)``.

    Each path gets Poisson(``gamma * (t_end - t_start)``) uniform knots and
    one innovation of scale ``sigma`` per knot, with the drift evaluated at
    the previous log-hazard and the knot time.  All arguments except the
    drift and scheme may be per-path arrays.

    Returns:
        list of ``(knots, alphas)``: ``knots`` are the new knot times and
        ``alphas`` the log-hazard after each knot (same length).
    """
    alpha_start = np.atleast_1d(np.asarray(alpha_start, dtype=float))
    n = alpha_start.size
    t_start = np.broadcast_to(np.asarray(t_start, dtype=float), (n,))
    t_end = np.broadcast_to(np.asarray(t_end, dtype=float), (n,))
    gamma = np.broadcast_to(np.asarray(gamma, dtype=float), (n,))
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), (n,))
    counts = rng.poisson(gamma * np.maximum(t_end - t_start, 0.0))
    kmax = int(counts.max()) if n else 0
    times = np.full((n, kmax), np.inf)
    for i in range(n):
        if counts[i]:
            times[i, : counts[i]] = np.sort(rng.uniform(t_start[i], t_end[i], counts[i]))
    alphas = np.empty((n, kmax))
    cur = alpha_start.copy()
    for k in range(kmax):
        live = counts > k
        idx = np.flatnonzero(live)
        m = drift.mu(cur[idx], times[idx, k])
        th = sample_innovation(scheme, m, sigma[idx], rng)
        cur[idx] = cur[idx] + sigma[idx] * th
        alphas[idx, k] = cur[idx]
    return [(times[i, : counts[i]].copy(), alphas[i, : counts[i]].copy()) for i in range(n)]


def simulate_endpoints(drift, scheme, alpha_start, t_start, t_end, gamma, sigma, rng):
    """Log-hazard at ``t_end`` for paths continued as in :func:`simulate_paths`.

    Only the current level is kept.  Knots are generated in time order from
    exponential gaps, which gives the same Poisson process without storing
    whole paths, so long horizons stay cheap in memory.
    """
    cur = np.atleast_1d(np.asarray(alpha_start, dtype=float)).copy()
    n = cur.size
    t = np.broadcast_to(np.asarray(t_start, dtype=float), (n,)).copy()
    t_end = np.broadcast_to(np.asarray(t_end, dtype=float), (n,))
    gamma = np.broadcast_to(np.asarray(gamma, dtype=float), (n,))
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), (n,))
    idx = np.arange(n)
    while idx.size:
        t[idx] += rng.exponential(1.0 / gamma[idx])
        idx = idx[t[idx] < t_end[idx]]
        if idx.size:
            m = drift.mu(cur[idx], t[idx])
            cur[idx] = cur[idx] + sigma[idx] * sample_innovation(scheme, m, sigma[idx], rng)
    return cur


def simulate_prior_hazard(drift, scheme: InnovationScheme, gamma: float, y_end: float, rng,
                          sigma: float | None = None):
    """One prior draw of the step log-hazard on ``(0, y_end)``.

    Returns:
        HazardModel with knots ``(0, s_1, ..., s_J, y_end)``.
    """
    from .model import HazardModel

    if not gamma > 0:
        raise ValueError("gamma must be positive")
    sigma = scheme.sigma if sigma is None else sigma
    a0 = rng.normal(0.0, scheme.sigma0)
    [(knots, alphas)] = simulate_paths(drift, scheme, a0, 0.0, y_end, gamma, sigma, rng)
    return HazardModel(np.concatenate([[0.0], knots, [y_end]]), np.concatenate([[a0], alphas]))
