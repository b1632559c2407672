"""Sticky forward event chain sampler generated by a drift-jump-drift splitting.

Velocities are Gaussian with per-coordinate standard deviation
``velocity_scale`` (default ``1/sqrt(expected dimension)``, so the speed is
about one as under a unit-sphere velocity).  A coordinate that hits zero is frozen: its
velocity component is stored in ``frozen`` and released after an
exponential time with rate ``omega/(1-omega) * f0(0) * |frozen_i|``, where
``f0(0)`` is the innovation density at zero.  For the skew-symmetric scheme
``f0(0)`` is constant; for Euler-Maruyama it depends on the state and the
release clock is thinned against the bound ``phi(0)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import discretise
from .data import Dataset
from .knots import CandidateKnots, KnotConfig, gibbs_refresh_inactive, update_intensity
from .model import Block, Frame, Target

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SamplerConfig:
    dt: float = 0.05
    lambda_e: float = 1.0
    lambda_r: float = 0.0
    gibbs_interval: float = 1.0
    burn_in: float = 200.0
    spacing: float = 0.5
    total_time: float = 5200.0
    seed: int = 0
    fix_sigma: bool = False
    record_loglik: bool = True
    velocity_scale: float | None = None  # per-coordinate velocity sd; None: 1/sqrt(expected dim)

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.lambda_e < 0 or self.lambda_r < 0:
            raise ValueError("rates must be non-negative")
        if not (self.gibbs_interval > 0 and self.spacing > 0):
            raise ValueError("gibbs_interval and spacing must be positive")
        if not 0 <= self.burn_in < self.total_time:
            raise ValueError("need 0 <= burn_in < total_time")
        if self.velocity_scale is not None and not self.velocity_scale > 0:
            raise ValueError("velocity_scale must be positive")


@dataclass
class PdmpState:
    x: np.ndarray
    v: np.ndarray
    frozen: np.ndarray
    stuck: np.ndarray
    candidates: list
    gamma: float
    t: float = 0.0
    next_orth: float = 0.0
    next_gibbs: float = 0.0


@dataclass
class Tally:
    """Running counters kept alongside a chain."""

    stuck_time: np.ndarray | None = None
    elapsed: float = 0.0
    reflections: int = 0
    unsticks: int = 0
    sticks: int = 0
    null_entries: list = field(default_factory=list)
    sojourns: list = field(default_factory=list)  # completed stays at zero
    stuck_since: np.ndarray | None = None


def event_rate(v, grad, lambda_r=0.0):
    return max(0.0, float(v @ grad)) + lambda_r


def orthogonal_refresh(v, grad, rng, mask=None, preserve_norm=False, scale=1.0):
    """Redraw the part of ``v`` orthogonal to ``grad``, keeping the parallel part.

    The new orthogonal part is Gaussian (sd ``scale`` on ``mask``, projected)
    and flipped if needed into the hemisphere ``{u : <u, v_perp> >= 0}``.
    The flip leaves the Gaussian law invariant, so this is a valid partial
    refreshment that does not change the event rate.  ``preserve_norm``
    rescales to the old orthogonal norm instead.
    """
    mask = np.ones(v.size, dtype=bool) if mask is None else mask
    gg = float(grad @ grad)
    par = (float(v @ grad) / gg) * grad if gg > 0 else np.zeros_like(v)
    perp = v - par
    if mask.sum() < 2:
        return v.copy()
    z = np.zeros_like(v)
    z[mask] = scale * rng.standard_normal(int(mask.sum()))
    if gg > 0:
        z -= (z @ grad) / gg * grad
    if preserve_norm:
        zn = np.sqrt(float(z @ z))
        z = z * (np.sqrt(float(perp @ perp)) / zn) if zn > 0 else perp
    if z @ perp < 0:
        z = -z
    return par + z


def forward_reflect(v, grad, rng, orthogonal_update=False, mask=None, preserve_norm=False, scale=1.0):
    """Negate the velocity component along ``grad``; optionally refresh the orthogonal part."""
    gg = float(grad @ grad)
    if gg == 0.0:
        return v.copy()
    if orthogonal_update:
        v = orthogonal_refresh(v, grad, rng, mask, preserve_norm, scale)
    return v - (2.0 * float(v @ grad) / gg) * grad


class StickySampler:
    """One chain of the sticky forward event chain sampler."""

    def __init__(self, target: Target, knot_config: KnotConfig, config: SamplerConfig, rng,
                 refresh_candidates=True):
        self.target = target
        self.kc = knot_config
        self.cfg = config
        self.rng = rng
        self.refresh_candidates = refresh_candidates
        self.kappa = knot_config.omega / (1.0 - knot_config.omega) * discretise.PHI0
        self.tally = Tally()
        self.state: PdmpState | None = None
        self.frame: Frame | None = None

    # -- setup ---------------------------------------------------------------
    def initialise(self, candidates=None, x0=None, sigma0=None):
        rng, tgt = self.rng, self.target
        nb = len(tgt.blocks)
        if candidates is None:
            cands = []
            for _ in range(nb):
                m = rng.poisson(self.kc.dominating_rate * self.kc.y_plus)
                loc = np.sort(rng.uniform(0.0, self.kc.y_plus, m))
                cands.append(CandidateKnots(loc, rng.random(m) < self.kc.omega))
        else:
            cands = [c if isinstance(c, CandidateKnots) else CandidateKnots(c, np.zeros(len(c), bool))
                     for c in candidates]
        fr = tgt.frame([c.locations for c in cands])
        x = np.zeros(fr.dim)
        stuck = np.zeros(fr.dim, dtype=bool)
        for b, c in enumerate(cands):
            sl = fr.block_slice(b)
            th = np.zeros(1 + c.M)
            th[1:][c.active] = 0.3 * rng.standard_normal(c.n_active)
            x[sl] = th
            stuck[sl][1:] = ~c.active
        ds = tgt.ds
        if ds.n and ds.events.any():
            x[fr.off[0]] = np.log(ds.events.sum() / ds.times.sum())
        x[-1] = tgt.scheme.sigma if sigma0 is None else sigma0
        if x0 is not None:
            x[:] = x0
            stuck = fr.sticky & (x == 0.0)
        if self.cfg.velocity_scale is None:
            expected = nb * (1.0 + self.kc.dominating_rate * self.kc.y_plus) + 1.0
            self.vscale = 1.0 / np.sqrt(expected)
        else:
            self.vscale = self.cfg.velocity_scale
        v = self.vscale * rng.standard_normal(fr.dim)
        frozen = np.where(stuck, v, 0.0)
        v[stuck] = 0.0
        if self.cfg.fix_sigma:
            v[-1] = 0.0
        self.frame = fr
        self.state = PdmpState(x, v, frozen, stuck, [c.locations for c in cands], self.kc.gamma,
                               t=0.0, next_orth=rng.exponential(1.0 / self.cfg.lambda_e)
                               if self.cfg.lambda_e > 0 else np.inf,
                               next_gibbs=self.cfg.gibbs_interval)
        self.tally.stuck_time = np.zeros(fr.dim)
        self.tally.stuck_since = np.full(fr.dim, np.nan)  # stays begun before t=0 are not counted
        return self.state

    @property
    def free(self):
        s = self.state
        f = ~s.stuck
        return f

    def movable(self):
        m = ~self.state.stuck
        if self.cfg.fix_sigma:
            m = m.copy()
            m[-1] = False
        return m

    # -- kernels -------------------------------------------------------------
    def stick(self, i):
        s = self.state
        s.x[i] = 0.0
        s.frozen[i] = s.v[i]
        s.v[i] = 0.0
        s.stuck[i] = True
        self.tally.sticks += 1
        self.tally.stuck_since[i] = s.t
        if np.all(s.stuck[self.frame.sticky]):
            self.tally.null_entries.append(s.t)

    def unstick_rate(self, i):
        """Release rate of frozen coordinate ``i`` at the current state."""
        s = self.state
        f0 = self.target.zero_density(self.frame, s.x, i)
        return self.kc.omega / (1.0 - self.kc.omega) * f0 * abs(s.frozen[i])

    def unstick(self):
        """Fire the superposed release clock: pick a frozen coordinate, thin, release."""
        s, rng = self.state, self.rng
        idx = np.flatnonzero(s.stuck)
        w = np.abs(s.frozen[idx])
        i = int(idx[rng.choice(idx.size, p=w / w.sum())])
        if not self.target.skew:
            if rng.random() * discretise.PHI0 >= self.target.zero_density(self.frame, s.x, i):
                return None
        s.v[i] = s.frozen[i]
        s.frozen[i] = 0.0
        s.stuck[i] = False
        self.tally.unsticks += 1
        if np.isfinite(self.tally.stuck_since[i]):
            self.tally.sojourns.append(s.t - self.tally.stuck_since[i])
        return i

    def _flow(self, h):
        """Linear motion for time ``h`` with exact sticking, sigma reflection and release clocks."""
        s, rng = self.state, self.rng
        rem = h
        sticky = self.frame.sticky
        while rem > 0:
            best, kind, which = rem, None, -1
            cand = np.flatnonzero(sticky & ~s.stuck & (s.x * s.v < 0))
            if cand.size:
                tc = -s.x[cand] / s.v[cand]
                k = int(np.argmin(tc))
                if tc[k] < best:
                    best, kind, which = tc[k], "stick", int(cand[k])
            if s.v[-1] < 0:
                ts = -s.x[-1] / s.v[-1]
                if ts < best:
                    best, kind = ts, "sigma"
            if s.stuck.any():
                R = self.kappa * float(np.abs(s.frozen[s.stuck]).sum())
                if R > 0:
                    tu = rng.exponential(1.0 / R)
                    if tu < best:
                        best, kind = tu, "unstick"
            s.x += s.v * best
            self.tally.stuck_time += s.stuck * best
            self.tally.elapsed += best
            s.t += best
            rem -= best
            if kind == "stick":
                self.stick(which)
            elif kind == "sigma":
                s.x[-1] = 0.0
                s.v[-1] = -s.v[-1]
            elif kind == "unstick":
                self.unstick()

    def _jump(self):
        s, rng, cfg = self.state, self.rng, self.cfg
        _, g = self.target.log_posterior_and_grad(self.frame, s.x, ~s.stuck)
        g = -g
        if cfg.fix_sigma:
            g[-1] = 0.0
        if s.t >= s.next_orth:
            # partial refresh: orthogonal part redrawn, parallel part and event rate kept
            s.v = orthogonal_refresh(s.v, g, rng, mask=self.movable(), scale=self.vscale)
            s.next_orth = s.t + rng.exponential(1.0 / cfg.lambda_e)
        lam = event_rate(s.v, g, cfg.lambda_r)
        if lam <= 0 or rng.random() >= -np.expm1(-lam * cfg.dt):
            return
        if cfg.lambda_r > 0 and rng.random() * lam < cfg.lambda_r:
            mv = self.movable()
            s.v[mv] = self.vscale * rng.standard_normal(int(mv.sum()))
            return
        s.v = forward_reflect(s.v, g, rng)
        self.tally.reflections += 1

    def splitting_step(self):
        h = 0.5 * self.cfg.dt
        self._flow(h)
        self._jump()
        self._flow(h)
        if self.refresh_candidates and self.state.t >= self.state.next_gibbs:
            self.gibbs_refresh()
            self.state.next_gibbs += self.cfg.gibbs_interval

    # -- Gibbs moves on candidates and gamma ----------------------------------
    def gibbs_refresh(self):
        s, rng, fr = self.state, self.rng, self.frame
        nb = len(self.target.blocks)
        cands = [CandidateKnots(s.candidates[b], ~s.stuck[fr.block_slice(b)][1:]) for b in range(nb)]
        if self.kc.hyper:
            total = CandidateKnots(np.arange(sum(c.M for c in cands), dtype=float),
                                   np.ones(sum(c.M for c in cands), bool))
            kc_all = KnotConfig(self.kc.y_plus * nb, s.gamma, self.kc.omega,
                                self.kc.gamma_shape, self.kc.gamma_rate)
            s.gamma = update_intensity(total, kc_all, rng)
        kc = self.kc.with_gamma(s.gamma)
        new_c, srcs = [], []
        for c in cands:
            nc, src = gibbs_refresh_inactive(c, kc, rng)
            new_c.append(nc)
            srcs.append(src)
        nfr = self.target.frame([c.locations for c in new_c])
        x = np.zeros(nfr.dim)
        v = np.zeros(nfr.dim)
        frozen = np.zeros(nfr.dim)
        stuck = np.zeros(nfr.dim, dtype=bool)
        for b in range(nb):
            osl, nsl = fr.block_slice(b), nfr.block_slice(b)
            ox, ov = s.x[osl], s.v[osl]
            nx, nv = np.zeros(nsl.stop - nsl.start), np.zeros(nsl.stop - nsl.start)
            nfz = np.zeros_like(nx)
            nst = np.zeros(nx.size, dtype=bool)
            nx[0], nv[0] = ox[0], ov[0]
            src = srcs[b]
            kept = src >= 0
            nx[1:][kept] = ox[1:][src[kept]]
            nv[1:][kept] = ov[1:][src[kept]]
            nst[1:][~kept] = True
            nfz[1:][~kept] = self.vscale * rng.standard_normal(int((~kept).sum()))
            x[nsl], v[nsl], frozen[nsl], stuck[nsl] = nx, nv, nfz, nst
        x[-1], v[-1] = s.x[-1], s.v[-1]
        s.x, s.v, s.frozen, s.stuck = x, v, frozen, stuck
        s.candidates = [c.locations for c in new_c]
        self.frame = nfr
        self.tally.stuck_time = np.zeros(nfr.dim)  # coordinates are relabelled
        self.tally.stuck_since = np.full(nfr.dim, np.nan)

    # -- snapshots -------------------------------------------------------------
    def snapshot(self):
        s, fr, tgt = self.state, self.frame, self.target
        blocks = []
        for b in range(len(tgt.blocks)):
            th = s.x[fr.block_slice(b)]
            act = ~s.stuck[fr.block_slice(b)][1:]
            knots = s.candidates[b][act]
            al = th[0] + s.x[-1] * np.concatenate([[0.0], np.cumsum(th[1:][act])])
            blocks.append((knots.copy(), al))
        ll = tgt.pointwise_loglik(fr, s.x) if (self.cfg.record_loglik and tgt.ds.n) else None
        return dict(t=s.t, sigma=float(s.x[-1]), gamma=float(s.gamma), blocks=blocks, loglik=ll)


def build_target(ds: Dataset, baseline_drift, scheme, knot_config, covariate_drifts=(),
                 init=None, covariate_init=None, fix_sigma=False):
    init = init or ("normal", scheme.sigma0)
    covariate_init = covariate_init or ("normal", scheme.sigma0)
    blocks = [Block(baseline_drift, tuple(init))]
    blocks += [Block(d, tuple(covariate_init)) for d in covariate_drifts]
    return Target(ds, blocks, scheme, knot_config.omega, fix_sigma=fix_sigma)


def run_chain(ds: Dataset, drift, scheme, knot_config: KnotConfig, config: SamplerConfig, rng=None,
              covariate_drifts=(), candidates=None, init=None, chain=0, x0=None, progress=None):
    """Run one chain and return its :class:`~dpem.posterior.PosteriorDraws`.

    ``candidates`` fixes the candidate knots (one array per block) and
    disables the Gibbs refresh.
    """
    from .posterior import PosteriorDraws

    if rng is None:
        rng = np.random.default_rng(config.seed)
    target = build_target(ds, drift, scheme, knot_config, covariate_drifts, init,
                          fix_sigma=config.fix_sigma)
    sampler = StickySampler(target, knot_config, config, rng, refresh_candidates=candidates is None)
    sampler.initialise(candidates, x0=x0)
    snaps = []
    n_steps = int(round(config.total_time / config.dt))
    every = max(1, int(round(config.spacing / config.dt)))
    burn = int(round(config.burn_in / config.dt))
    for k in range(1, n_steps + 1):
        sampler.splitting_step()
        if k > burn and (k - burn) % every == 0:
            snaps.append(sampler.snapshot())
        if progress is not None and k % 10000 == 0:
            progress(k, n_steps)
    draws = PosteriorDraws.from_snapshots(snaps, ds.admin_censor_time, chain=chain)
    draws.info = dict(reflections=sampler.tally.reflections, sticks=sampler.tally.sticks,
                      unsticks=sampler.tally.unsticks)
    return draws, sampler
