"""Reversible jump comparator: birth/death of knots plus a random-walk Metropolis block update."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import discretise
from .knots import KnotConfig
from .model import Block, Target


@dataclass(frozen=True)
class RjConfig:
    iterations: int = 20000
    scale: float = 0.1
    birth_prob: float = 0.5
    seed: int = 0
    burn_in: int = 2000
    thin: int = 1
    transdimensional: bool = True
    fix_sigma: bool = False

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        if not 0 < self.birth_prob < 1:
            raise ValueError("birth_prob must lie in (0, 1)")


@dataclass
class RjState:
    knots: np.ndarray
    x: np.ndarray  # (theta_0, theta_1..theta_J, sigma)
    lp: float = np.nan


class RjSampler:
    """Baseline-only reversible jump sampler for the same posterior as the sticky sampler.

    ``grid`` restricts knots to a finite candidate set; each grid point is then
    a priori active with probability ``omega``.  Otherwise knots follow PPP(gamma).
    """

    def __init__(self, ds, drift, scheme, knot_config: KnotConfig, config: RjConfig, rng,
                 init=None, grid=None):
        if ds.p:
            raise ValueError("the reversible jump comparator supports the baseline block only")
        self.target = Target(ds, [Block(drift, tuple(init or ("normal", scheme.sigma0)))], scheme,
                             knot_config.omega, fix_sigma=config.fix_sigma)
        self.scheme = scheme
        self.drift = drift
        self.kc = knot_config
        self.cfg = config
        self.rng = rng
        self.grid = None if grid is None else np.sort(np.asarray(grid, dtype=float))
        self.accept = dict(birth=0, death=0, rw=0, birth_tried=0, death_tried=0, rw_tried=0)
        self._frame_cache = None

    def _frame(self, knots):
        if self._frame_cache is not None and np.array_equal(self._frame_cache[0], knots):
            return self._frame_cache[1]
        fr = self.target.frame([knots])
        self._frame_cache = (knots.copy(), fr)
        return fr

    def log_post(self, knots, x):
        if x[-1] <= 0:
            return -np.inf
        fr = self._frame(knots)
        lp, _ = self.target.log_posterior_and_grad(fr, x, np.ones(x.size, dtype=bool))
        J = knots.size
        if self.grid is None:
            return lp + J * np.log(self.kc.gamma)
        w = self.kc.omega
        return lp + J * np.log(w) + (self.grid.size - J) * np.log1p(-w)

    def initialise(self, knots=None, x=None):
        ds = self.target.ds
        knots = np.zeros(0) if knots is None else np.asarray(knots, dtype=float)
        if x is None:
            x = np.zeros(knots.size + 2)
            if ds.n and ds.events.any():
                x[0] = np.log(ds.events.sum() / ds.times.sum())
            x[-1] = self.scheme.sigma
        st = RjState(knots, np.asarray(x, dtype=float))
        st.lp = self.log_post(st.knots, st.x)
        self.state = st
        return st

    def birth_death_log_ratio(self, birth: bool, J: int):
        """Count/proposal part of the acceptance ratio (prior-proposal terms excluded)."""
        pb, pd = self.cfg.birth_prob, 1.0 - self.cfg.birth_prob
        if self.grid is None:
            if birth:
                return np.log(self.kc.y_plus / (J + 1)) + np.log(pd / pb)
            return np.log(J / self.kc.y_plus) + np.log(pb / pd)
        G = self.grid.size
        if birth:
            return np.log((G - J) / (J + 1)) + np.log(pd / pb)
        return np.log(J / (G - J + 1)) + np.log(pb / pd)

    def _conditional_mu(self, knots, x, u):
        th, sigma = x[:-1], x[-1]
        pos = int(np.searchsorted(knots, u))
        al = th[0] + sigma * np.concatenate([[0.0], np.cumsum(th[1:])])
        return pos, self.drift.mu(al[pos], u)

    def birth_proposal(self, u, theta):
        """State and log acceptance ratio for inserting a knot at ``u`` with innovation ``theta``."""
        st = self.state
        pos, mu = self._conditional_mu(st.knots, st.x, u)
        logq = float(discretise.innovation_logpdf(self.scheme, theta, mu, st.x[-1]))
        knots = np.insert(st.knots, pos, u)
        x = np.insert(st.x, pos + 1, theta)
        lp = self.log_post(knots, x)
        return knots, x, lp, lp - st.lp - logq + self.birth_death_log_ratio(True, st.knots.size)

    def death_proposal(self, j):
        """State and log acceptance ratio for deleting knot ``j`` (1-based)."""
        st = self.state
        knots = np.delete(st.knots, j - 1)
        x = np.delete(st.x, j)
        # reverse birth proposes theta_j from its conditional prior in the reduced state
        logq = self._reverse_logq(knots, x, st.knots[j - 1], st.x[j])
        lp = self.log_post(knots, x)
        return knots, x, lp, lp - st.lp + logq + self.birth_death_log_ratio(False, st.knots.size)

    def transdimensional_move(self):
        st, rng = self.state, self.rng
        J = st.knots.size
        if rng.random() < self.cfg.birth_prob:
            self.accept["birth_tried"] += 1
            if self.grid is None:
                u = rng.uniform(0.0, self.kc.y_plus)
            else:
                free = np.setdiff1d(self.grid, st.knots)
                if free.size == 0:
                    return
                u = free[rng.integers(free.size)]
            _, mu = self._conditional_mu(st.knots, st.x, u)
            theta = float(discretise.sample_innovation(self.scheme, mu, st.x[-1], rng))
            knots, x, lp, log_a = self.birth_proposal(u, theta)
            key = "birth"
        else:
            self.accept["death_tried"] += 1
            if J == 0:
                return
            knots, x, lp, log_a = self.death_proposal(int(rng.integers(J)) + 1)
            key = "death"
        if np.log(rng.random()) < log_a:
            st.knots, st.x, st.lp = knots, x, lp
            self.accept[key] += 1

    def _reverse_logq(self, knots, x, u, theta):
        """Log density of the birth proposal that would recreate knot ``u`` from the reduced state."""
        _, mu = self._conditional_mu(knots, x, u)
        return float(discretise.innovation_logpdf(self.scheme, theta, mu, x[-1]))

    def rw_move(self):
        st, rng = self.state, self.rng
        self.accept["rw_tried"] += 1
        prop = st.x + self.cfg.scale * rng.standard_normal(st.x.size)
        if self.cfg.fix_sigma:
            prop[-1] = st.x[-1]
        lp = self.log_post(st.knots, prop)
        if np.log(rng.random()) < lp - st.lp:
            st.x, st.lp = prop, lp
            self.accept["rw"] += 1

    def sweep(self):
        if self.cfg.transdimensional:
            self.transdimensional_move()
        self.rw_move()
        return self.state


def rj_sweep(sampler: RjSampler):
    """One birth/death proposal followed by one random-walk update."""
    return sampler.sweep()


def run_rj(ds, drift, scheme, knot_config, config: RjConfig, rng=None, init=None, grid=None,
           knots0=None, x0=None, chain=0):
    """Run the reversible jump chain; returns ``(PosteriorDraws, sampler)``."""
    from .posterior import PosteriorDraws

    rng = np.random.default_rng(config.seed) if rng is None else rng
    smp = RjSampler(ds, drift, scheme, knot_config, config, rng, init=init, grid=grid)
    smp.initialise(knots0, x0)
    snaps = []
    for it in range(1, config.iterations + 1):
        smp.sweep()
        if it > config.burn_in and (it - config.burn_in) % config.thin == 0:
            st = smp.state
            th = st.x[:-1]
            al = th[0] + st.x[-1] * np.concatenate([[0.0], np.cumsum(th[1:])])
            snaps.append(dict(sigma=float(st.x[-1]), gamma=knot_config.gamma,
                              blocks=[(st.knots.copy(), al)], loglik=None))
    draws = PosteriorDraws.from_snapshots(snaps, ds.admin_censor_time, chain=chain)
    draws.info = dict(smp.accept)
    return draws, smp
