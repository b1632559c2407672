"""Poisson-process candidate knots, thinned into active and inactive sets."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class KnotConfig:
    """Knot prior on ``(0, y_plus)``.

    Either ``gamma`` is fixed, or ``gamma_shape``/``gamma_rate`` give a
    Gamma hyperprior and ``gamma`` is only the starting value.
    """

    y_plus: float
    gamma: float = 7.0
    omega: float = 0.5
    gamma_shape: float | None = None
    gamma_rate: float | None = None

    def __post_init__(self):
        if not 0.0 < self.omega < 1.0:
            raise ValueError("omega must lie in (0, 1)")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if not self.y_plus > 0:
            raise ValueError("y_plus must be positive")
        if (self.gamma_shape is None) != (self.gamma_rate is None):
            raise ValueError("give both gamma_shape and gamma_rate, or neither")
        if self.hyper and not (self.gamma_shape > 0 and self.gamma_rate > 0):
            raise ValueError("Gamma hyperprior parameters must be positive")

    @property
    def hyper(self) -> bool:
        return self.gamma_shape is not None

    @property
    def dominating_rate(self) -> float:
        """Intensity of the candidate process, ``gamma / omega``."""
        return self.gamma / self.omega

    def with_gamma(self, gamma: float) -> "KnotConfig":
        return replace(self, gamma=float(gamma))


@dataclass(frozen=True)
class CandidateKnots:
    locations: np.ndarray
    active: np.ndarray

    def __post_init__(self):
        loc = np.asarray(self.locations, dtype=float)
        act = np.asarray(self.active, dtype=bool)
        if loc.shape != act.shape:
            raise ValueError("locations and flags differ in length")
        if np.any(np.diff(loc) <= 0):
            raise ValueError("candidate locations must be strictly increasing")
        object.__setattr__(self, "locations", loc)
        object.__setattr__(self, "active", act)

    @property
    def M(self) -> int:
        return len(self.locations)

    @property
    def n_active(self) -> int:
        return int(self.active.sum())


def _ppp(rate, y_plus, rng):
    m = rng.poisson(rate * y_plus)
    return np.sort(rng.uniform(0.0, y_plus, m))


def sample_candidates(config: KnotConfig, rng) -> CandidateKnots:
    """Candidates ~ PPP(gamma/omega) on (0, y_plus); each active with probability omega."""
    loc = _ppp(config.dominating_rate, config.y_plus, rng)
    return CandidateKnots(loc, rng.random(loc.size) < config.omega)


def gibbs_refresh_inactive(candidates: CandidateKnots, config: KnotConfig, rng):
    """Replace the inactive knots by a fresh PPP((1-omega) gamma/omega) draw.

    Returns:
        ``(new_candidates, order)`` where ``order[i]`` is the index of new
        candidate ``i`` in the old set, or ``-1`` for a newly drawn knot.
    """
    keep = candidates.locations[candidates.active]
    old_idx = np.flatnonzero(candidates.active)
    fresh = _ppp((1.0 - config.omega) * config.dominating_rate, config.y_plus, rng)
    loc = np.concatenate([keep, fresh])
    src = np.concatenate([old_idx, np.full(fresh.size, -1)])
    order = np.argsort(loc, kind="stable")
    loc, src = loc[order], src[order]
    if np.any(np.diff(loc) <= 0):  # measure-zero tie; redraw
        return gibbs_refresh_inactive(candidates, config, rng)
    return CandidateKnots(loc, src >= 0), src


def update_intensity(candidates: CandidateKnots, config: KnotConfig, rng) -> float:
    """Conjugate draw of gamma given the candidate count.

    With ``gamma ~ Gamma(a, b)`` and ``M ~ Poisson(y_plus * gamma / omega)``,
    ``gamma/omega | M ~ Gamma(a + M, omega*b + y_plus)``.
    """
    if not config.hyper:
        raise ValueError("update_intensity needs a Gamma hyperprior")
    shape = config.gamma_shape + candidates.M
    rate = config.omega * config.gamma_rate + config.y_plus
    return config.omega * rng.gamma(shape, 1.0 / rate)
