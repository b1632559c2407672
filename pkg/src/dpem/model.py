"""Piecewise exponential hazard model and the non-centred posterior potential."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import discretise
from .data import Dataset


# ---------------------------------------------------------------------------
# Step hazard evaluation


def _interval_index(knots, y):
    """Index of the interval ``(s_{j-1}, s_j]`` containing ``y`` (last one persists)."""
    j = np.searchsorted(knots, y, side="left") - 1
    return np.clip(j, 0, len(knots) - 2)


@dataclass(frozen=True)
class HazardModel:
    """Step log-hazard with optional per-covariate step effects.

    ``knots`` is ``(0, s_1, ..., s_J, s_end)`` and ``log_hazards`` holds one
    value per interval ``(s_{j-1}, s_j]`` (``len(knots) - 1`` values); the last
    value also applies beyond ``s_end``, which only marks a display horizon.
    Covariate ``k`` has its own ``covariate_knots[k]`` / ``covariate_effects[k]``
    with the same layout.
    """

    knots: np.ndarray
    log_hazards: np.ndarray
    covariate_knots: tuple = ()
    covariate_effects: tuple = ()

    def __post_init__(self):
        k = np.asarray(self.knots, dtype=float)
        a = np.asarray(self.log_hazards, dtype=float)
        object.__setattr__(self, "knots", k)
        object.__setattr__(self, "log_hazards", a)
        _validate_steps(k, a)
        if len(self.covariate_knots) != len(self.covariate_effects):
            raise ValueError("covariate knots/effects mismatch")
        ck = tuple(np.asarray(c, dtype=float) for c in self.covariate_knots)
        ce = tuple(np.asarray(c, dtype=float) for c in self.covariate_effects)
        for kk, bb in zip(ck, ce):
            _validate_steps(kk, bb)
        object.__setattr__(self, "covariate_knots", ck)
        object.__setattr__(self, "covariate_effects", ce)

    @property
    def p(self) -> int:
        return len(self.covariate_knots)

    def _w(self, covariates):
        w = np.zeros(self.p) if covariates is None else np.asarray(covariates, dtype=float)
        if w.shape != (self.p,):
            raise ValueError(f"expected {self.p} covariates")
        return w

    def log_hazard(self, y, covariates=None):
        y = np.asarray(y, dtype=float)
        if np.any(y <= 0):
            raise ValueError("y must be positive")
        w = self._w(covariates)
        out = self.log_hazards[_interval_index(self.knots, y)]
        for k in range(self.p):
            out = out + w[k] * self.covariate_effects[k][_interval_index(self.covariate_knots[k], y)]
        return out[()] if np.ndim(out) == 0 else out

    def hazard(self, y, covariates=None):
        return np.exp(self.log_hazard(y, covariates))

    def union_steps(self, covariates=None):
        """Merged step function: ``(edges, eta)`` with ``edges[0] = 0`` and the last step open-ended."""
        w = self._w(covariates)
        edges = self.knots[:-1]
        for k in range(self.p):
            if w[k] != 0.0:
                edges = np.union1d(edges, self.covariate_knots[k][:-1])
        edges = np.unique(edges)
        # evaluate at a point strictly inside each step
        nxt = np.append(edges[1:], edges[-1] + 1.0)
        mid = 0.5 * (edges + nxt)
        eta = self.log_hazards[_interval_index(self.knots, mid)]
        for k in range(self.p):
            if w[k] != 0.0:
                eta = eta + w[k] * self.covariate_effects[k][_interval_index(self.covariate_knots[k], mid)]
        return edges, eta

    def cumulative_hazard(self, y, covariates=None):
        y = np.asarray(y, dtype=float)
        if np.any(y <= 0):
            raise ValueError("y must be positive")
        edges, eta = self.union_steps(covariates)
        right = np.append(edges[1:], np.inf)
        expo = np.clip(y[..., None] - edges, 0.0, right - edges)
        out = expo @ np.exp(eta)
        return out[()] if np.ndim(out) == 0 else out

    def survival(self, y, covariates=None):
        y = np.asarray(y, dtype=float)
        pos = np.where(y > 0, y, 1.0)
        out = np.where(y > 0, np.exp(-self.cumulative_hazard(pos, covariates)), 1.0)
        return out[()] if np.ndim(out) == 0 else out

    def restricted_mean(self, y_cut=np.inf, covariates=None):
        """Exact ``int_0^y_cut S(y) dy``."""
        edges, eta = self.union_steps(covariates)
        return restricted_mean_steps(edges, np.exp(eta), y_cut)


def _validate_steps(knots, values):
    if knots.ndim != 1 or len(knots) < 2:
        raise ValueError("need at least two knots")
    if knots[0] != 0.0:
        raise ValueError("first knot must be 0")
    if np.any(np.diff(knots) <= 0):
        raise ValueError("knots must be strictly increasing")
    if len(values) != len(knots) - 1:
        raise ValueError("one value per interval required")


def restricted_mean_steps(edges, hazards, y_cut=np.inf):
    """``int_0^y_cut S`` for a step hazard starting at ``edges[0]=0``, last step open-ended."""
    right = np.append(edges[1:], np.inf)
    width = np.clip(np.minimum(right, y_cut) - edges, 0.0, None)
    H_left = np.concatenate([[0.0], np.cumsum(hazards[:-1] * width[:-1])])
    keep = width > 0
    h, wdt, Hl = hazards[keep], width[keep], H_left[keep]
    if np.isinf(wdt[-1]):
        contrib = np.exp(-Hl[:-1]) * -np.expm1(-h[:-1] * wdt[:-1]) / h[:-1]
        return float(contrib.sum() + np.exp(-Hl[-1]) / h[-1])
    return float(np.sum(np.exp(-Hl) * -np.expm1(-h * wdt) / h))


def sample_times(model: HazardModel, rng, n, covariates=None):
    """Event times from ``model`` by inverting the cumulative hazard."""
    e = rng.exponential(size=n)
    out = np.empty(n)
    for i in range(n):
        w = None if covariates is None else covariates[i]
        edges, eta = model.union_steps(w)
        h = np.exp(eta)
        H = np.concatenate([[0.0], np.cumsum(h[:-1] * np.diff(edges))])
        j = np.searchsorted(H, e[i], side="right") - 1
        out[i] = edges[j] + (e[i] - H[j]) / h[j]
    return out


def log_likelihood(model: HazardModel, ds: Dataset) -> float:
    """``sum_i delta_i log h(y_i) - H(y_i)`` evaluated directly."""
    total = 0.0
    for ob in ds.observations:
        w = np.asarray(ob.covariates) if ds.p else None
        total += (model.log_hazard(ob.time, w) if ob.event else 0.0) - model.cumulative_hazard(ob.time, w)
    return float(total)


# ---------------------------------------------------------------------------
# Sufficient statistics


@dataclass(frozen=True)
class ExposureTable:
    """Per-observation event counts and exposures on intervals cut at ``knots``.

    Interval ``j`` is ``(edges[j], edges[j+1]]`` with ``edges = (0, *knots)``
    and an open-ended last interval.
    """

    knots: np.ndarray
    events: np.ndarray  # (n, K+1)
    exposure: np.ndarray  # (n, K+1)
    event_interval: np.ndarray  # (n,), -1 if censored

    @property
    def d(self):
        return self.events.sum(axis=0)

    @property
    def e(self):
        return self.exposure.sum(axis=0)

    def merge(self, active) -> "ExposureTable":
        """Statistics for the sub-model using only knots where ``active`` is true."""
        active = np.asarray(active, dtype=bool)
        group = np.concatenate([[0], np.cumsum(active)])
        k = int(active.sum())
        ev = np.zeros((self.events.shape[0], k + 1))
        ex = np.zeros_like(ev)
        np.add.at(ev.T, group, self.events.T)
        np.add.at(ex.T, group, self.exposure.T)
        ei = np.where(self.event_interval >= 0, group[np.maximum(self.event_interval, 0)], -1)
        return ExposureTable(self.knots[active], ev, ex, ei)

    def log_likelihood(self, eta) -> float:
        """``sum d*eta - e*exp(eta)``; ``eta`` per interval or per (observation, interval)."""
        eta = np.asarray(eta, dtype=float)
        if eta.ndim == 1:
            return float(self.d @ eta - self.e @ np.exp(eta))
        return float(np.sum(self.events * eta - self.exposure * np.exp(eta)))


def exposure_matrices(times, events, knots):
    knots = np.asarray(knots, dtype=float)
    left = np.concatenate([[0.0], knots])
    right = np.append(knots, np.inf)
    expo = np.clip(times[:, None] - left[None, :], 0.0, (right - left)[None, :])
    j = np.searchsorted(knots, times, side="left")
    ev = np.zeros_like(expo)
    idx = np.flatnonzero(events)
    ev[idx, j[idx]] = 1.0
    return ev, expo, np.where(events, j, -1)


def sufficient_stats(candidate_knots, ds: Dataset) -> ExposureTable:
    k = np.asarray(candidate_knots, dtype=float)
    if k.size and (np.any(np.diff(k) <= 0)):
        raise ValueError("candidate knots must be sorted and distinct")
    if k.size and (k[0] <= 0 or k[-1] >= ds.admin_censor_time):
        raise ValueError("candidate knots must lie in (0, y_+)")
    ev, ex, ei = exposure_matrices(ds.times, ds.events, k)
    return ExposureTable(k, ev, ex, ei)


# ---------------------------------------------------------------------------
# Non-centred posterior potential


@dataclass(frozen=True)
class Block:
    """One diffusion path (the baseline or a covariate effect).

    ``init`` is ``("normal", sd)`` or ``("loggamma", shape, rate)``: the prior
    on the initial value of the path.
    """

    drift: object
    init: tuple = ("normal", 2.0)


@dataclass
class Frame:
    """Union-grid statistics for a fixed set of candidate knots.

    Position layout: for each block ``b`` the slice ``[off[b], off[b]+1+M_b)``
    holds ``(theta_0, theta_1..theta_M)``; the last coordinate is sigma.
    """

    candidates: list
    off: np.ndarray
    dim: int
    edges: np.ndarray  # left edges of union intervals
    idx: list  # per block: union interval -> block interval
    D: np.ndarray  # (G, U) pooled by covariate pattern
    E: np.ndarray
    W: np.ndarray  # (G, p)
    obs_D: np.ndarray  # (n, U)
    obs_E: np.ndarray
    obs_W: np.ndarray  # (n, p)
    sticky: np.ndarray  # bool (dim,)

    def block_slice(self, b):
        return slice(self.off[b], self.off[b] + 1 + len(self.candidates[b]))


class Target:
    """Posterior over (theta, sigma) for given candidate knots; evaluates U and grad U."""

    def __init__(self, ds: Dataset, blocks, scheme, omega=0.5, fix_sigma=False):
        if len(blocks) != ds.p + 1:
            raise ValueError(f"need {ds.p + 1} blocks (baseline + one per covariate)")
        self.ds = ds
        self.blocks = list(blocks)
        self.scheme = scheme
        self.skew = scheme.skew
        self.omega = omega
        self.fix_sigma = fix_sigma
        W = ds.covariates
        if ds.n:
            self.patterns, self.pattern_of = np.unique(W, axis=0, return_inverse=True)
            self.pattern_of = self.pattern_of.reshape(-1)
        else:
            self.patterns, self.pattern_of = np.zeros((0, ds.p)), np.zeros(0, int)

    def frame(self, candidates) -> Frame:
        candidates = [np.asarray(c, dtype=float) for c in candidates]
        sizes = np.array([1 + len(c) for c in candidates])
        off = np.concatenate([[0], np.cumsum(sizes)[:-1]])
        dim = int(sizes.sum()) + 1
        allk = np.unique(np.concatenate(candidates)) if any(len(c) for c in candidates) else np.zeros(0)
        edges = np.concatenate([[0.0], allk])
        idx = [np.searchsorted(c, edges, side="right") for c in candidates]
        obs_D, obs_E, _ = exposure_matrices(self.ds.times, self.ds.events, allk)
        G = len(self.patterns)
        D = np.zeros((G, len(edges)))
        E = np.zeros_like(D)
        np.add.at(D, self.pattern_of, obs_D)
        np.add.at(E, self.pattern_of, obs_E)
        sticky = np.zeros(dim, dtype=bool)
        for b, c in enumerate(candidates):
            sticky[off[b] + 1: off[b] + 1 + len(c)] = True
        return Frame(candidates, off, dim, edges, idx, D, E, self.patterns,
                     obs_D, obs_E, self.ds.covariates, sticky)

    # -- path reconstruction -------------------------------------------------
    def alphas(self, fr: Frame, x, b):
        th = x[fr.block_slice(b)]
        return th[0] + x[-1] * np.concatenate([[0.0], np.cumsum(th[1:])])

    def eta_union(self, fr: Frame, x):
        """Per-block step values mapped onto the union grid."""
        return [self.alphas(fr, x, b)[fr.idx[b]] for b in range(len(self.blocks))]

    def pointwise_loglik(self, fr: Frame, x):
        a = self.eta_union(fr, x)
        eta = a[0][None, :] + sum(fr.obs_W[:, [k]] * a[k + 1][None, :] for k in range(self.ds.p))
        return np.sum(fr.obs_D * eta - fr.obs_E * np.exp(eta), axis=1)

    def loglik(self, fr: Frame, x):
        a = self.eta_union(fr, x)
        eta = a[0][None, :] + sum(fr.W[:, [k]] * a[k + 1][None, :] for k in range(self.ds.p))
        return float(np.sum(fr.D * eta - fr.E * np.exp(eta)))

    # -- potential ----------------------------------------------------------
    def log_posterior_and_grad(self, fr: Frame, x, free):
        """Log posterior density (spike terms excluded) and its gradient.

        ``free`` marks coordinates on the slab; frozen knots contribute no
        prior density and get zero gradient.
        """
        sigma = x[-1]
        if sigma <= 0:
            raise ValueError("sigma must be positive")
        nb = len(self.blocks)
        grad = np.zeros_like(x)
        alph, cums = [], []
        for b in range(nb):
            th = x[fr.block_slice(b)]
            c = np.concatenate([[0.0], np.cumsum(th[1:])])
            cums.append(c)
            alph.append(th[0] + sigma * c)
        if fr.D.size:
            a = [alph[b][fr.idx[b]] for b in range(nb)]
            eta = a[0][None, :] + sum(fr.W[:, [k]] * a[k + 1][None, :] for k in range(nb - 1))
            mu_e = fr.E * np.exp(eta)
            lp = float(np.sum(fr.D * eta - mu_e))
            r = fr.D - mu_e
            rsum = r.sum(axis=0)
            gA = [np.bincount(fr.idx[0], weights=rsum, minlength=len(alph[0]))]
            for k in range(nb - 1):
                gA.append(np.bincount(fr.idx[k + 1], weights=fr.W[:, k] @ r, minlength=len(alph[k + 1])))
        else:
            lp = 0.0
            gA = [np.zeros(len(al)) for al in alph]
        g_sigma = 0.0
        for b, blk in enumerate(self.blocks):
            sl = fr.block_slice(b)
            th = x[sl]
            m = fr.candidates[b]
            al, ga = alph[b], gA[b]
            gth = np.zeros_like(th)
            act = np.flatnonzero(free[sl][1:])
            if act.size:
                prev = al[act]  # value before knot act+1
                mu = blk.drift.mu(prev, m[act])
                mup = blk.drift.mu_prime(prev, m[act])
                tj = th[1:][act]
                shift = sigma * mu
                lp += float(np.sum(discretise.innovation_logpdf(self.scheme, tj, mu, sigma)))
                d_th, d_shift = discretise.logpdf_grad(self.skew, tj, shift)
                gth[1:][act] += d_th
                ga[act] += d_shift * sigma * mup  # act has no repeats
                g_sigma += float(np.sum(d_shift * mu))
            # chain rule through alpha = theta_0 + sigma * cumsum(theta)
            rev = np.cumsum(ga[::-1])[::-1]
            gth[0] += rev[0]
            gth[1:] += sigma * rev[1:]
            g_sigma += float(ga @ cums[b])
            if blk.init[0] == "normal":
                s0 = blk.init[1]
                lp += -0.5 * th[0] ** 2 / s0**2
                gth[0] += -th[0] / s0**2
            else:
                shape, rate = blk.init[1], blk.init[2]
                lp += shape * th[0] - rate * np.exp(th[0])
                gth[0] += shape - rate * np.exp(th[0])
            grad[sl] = gth
        lp += -self.scheme.sigma_rate * sigma
        grad[-1] = g_sigma - self.scheme.sigma_rate
        grad[~free] = 0.0
        if self.fix_sigma:
            grad[-1] = 0.0
        return lp, grad

    def potential(self, fr, x, free):
        return -self.log_posterior_and_grad(fr, x, free)[0]

    def grad_potential(self, fr, x, free):
        return -self.log_posterior_and_grad(fr, x, free)[1]

    def zero_density(self, fr: Frame, x, i):
        """Slab density at zero for sticky coordinate ``i`` given the rest of the state."""
        if self.skew:
            return discretise.PHI0
        b = int(np.searchsorted(fr.off, i, side="right") - 1)
        j = i - fr.off[b]  # knot number within block (>=1)
        al = self.alphas(fr, x, b)
        mu = self.blocks[b].drift.mu(al[j - 1], fr.candidates[b][j - 1])
        return float(discretise.density_at_zero(False, x[-1] * mu))


def grad_potential_data(target: Target, frame: Frame, x, free):
    """Gradient of the negative log posterior in the non-centred coordinates."""
    return target.grad_potential(frame, np.asarray(x, dtype=float), np.asarray(free, dtype=bool))
