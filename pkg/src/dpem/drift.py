"""Drift functions for the log-hazard diffusion prior.

Every drift is vectorised: ``mu(alpha, y)`` and ``mu_prime(alpha, y)`` accept
scalars or broadcastable arrays.  Langevin-type drifts revert towards their
stationary mode.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class Drift:
    tag = "abstract"
    time_homogeneous = True

    def mu(self, alpha, y=0.0):
        raise NotImplementedError

    def mu_prime(self, alpha, y=0.0):
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class RandomWalk(Drift):
    tag = "random_walk"

    def mu(self, alpha, y=0.0):
        return np.zeros(np.broadcast(alpha, y).shape) if np.ndim(alpha) or np.ndim(y) else 0.0

    def mu_prime(self, alpha, y=0.0):
        return self.mu(alpha, y)

    def to_dict(self):
        return {"type": self.tag}


@dataclass(frozen=True)
class GaussianLangevin(Drift):
    """Langevin drift with Normal(mean, var) stationary law for the log-hazard."""

    mean: float = 0.0
    var: float = 1.0
    tag = "gaussian_langevin"

    def __post_init__(self):
        if not self.var > 0:
            raise ValueError("GaussianLangevin variance must be positive")

    def mu(self, alpha, y=0.0):
        return -(np.asarray(alpha) - self.mean) / (2.0 * self.var) + 0.0 * np.asarray(y)

    def mu_prime(self, alpha, y=0.0):
        return np.full(np.broadcast(alpha, y).shape, -1.0 / (2.0 * self.var))[()]

    def to_dict(self):
        return {"type": self.tag, "mean": self.mean, "var": self.var}


@dataclass(frozen=True)
class GammaLangevin(Drift):
    """``mu = shape - rate * exp(alpha)``; log-Gamma(shape, rate) stationary law."""

    shape: float = 1.0
    rate: float = 1.0
    tag = "gamma_langevin"

    def __post_init__(self):
        if not (self.shape > 0 and self.rate > 0):
            raise ValueError("GammaLangevin parameters must be positive")

    def mu(self, alpha, y=0.0):
        return self.shape - self.rate * np.exp(alpha) + 0.0 * np.asarray(y)

    def mu_prime(self, alpha, y=0.0):
        return -self.rate * np.exp(alpha) + 0.0 * np.asarray(y)

    def to_dict(self):
        return {"type": self.tag, "shape": self.shape, "rate": self.rate}


@dataclass(frozen=True)
class GompertzLinear(Drift):
    """Constant drift; the log-hazard of a Gompertz hazard grows linearly."""

    psi: float = 0.1
    tag = "gompertz"

    def mu(self, alpha, y=0.0):
        return np.full(np.broadcast(alpha, y).shape, float(self.psi))[()]

    def mu_prime(self, alpha, y=0.0):
        return np.zeros(np.broadcast(alpha, y).shape)[()]

    def to_dict(self):
        return {"type": self.tag, "psi": self.psi}


@dataclass(frozen=True)
class TaperedGammaLangevin(Drift):
    """Gamma Langevin drift whose (shape, rate) move linearly from ``start`` to ``end`` over ``[t_a, t_b]``."""

    start: tuple = (1.0, 1.0)
    end: tuple = (1.0, 1.0)
    t_a: float = 0.0
    t_b: float = 1.0
    tag = "tapered_gamma_langevin"
    time_homogeneous = False

    def __post_init__(self):
        if not self.t_a < self.t_b:
            raise ValueError("taper interval requires t_a < t_b")
        if min(*self.start, *self.end) <= 0:
            raise ValueError("Gamma parameters must be positive")

    def _params(self, y):
        w = np.clip((np.asarray(y, dtype=float) - self.t_a) / (self.t_b - self.t_a), 0.0, 1.0)
        shape = (1 - w) * self.start[0] + w * self.end[0]
        rate = (1 - w) * self.start[1] + w * self.end[1]
        return shape, rate

    def mu(self, alpha, y=0.0):
        shape, rate = self._params(y)
        return shape - rate * np.exp(alpha)

    def mu_prime(self, alpha, y=0.0):
        _, rate = self._params(y)
        return -rate * np.exp(alpha)

    def to_dict(self):
        return {"type": self.tag, "start": list(self.start), "end": list(self.end),
                "t_a": self.t_a, "t_b": self.t_b}


@dataclass(frozen=True)
class CentredMean(Drift):
    """Reverts the log-hazard towards a tabulated target path ``target(y)``.

    ``target`` is piecewise linear through (``times``, ``values``) and constant
    beyond the table ends; the reversion strength is ``1 / scale**2``.
    """

    times: tuple = (0.0,)
    values: tuple = (0.0,)
    scale: float = 1.0
    tag = "centred_mean"
    time_homogeneous = False

    def __post_init__(self):
        if len(self.times) != len(self.values) or not self.times:
            raise ValueError("CentredMean table needs matching, non-empty times and values")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("CentredMean times must be increasing")
        if not self.scale > 0:
            raise ValueError("CentredMean scale must be positive")

    def target(self, y):
        return np.interp(y, self.times, self.values)

    def mu(self, alpha, y=0.0):
        return -(np.asarray(alpha) - self.target(y)) / self.scale**2

    def mu_prime(self, alpha, y=0.0):
        return np.full(np.broadcast(alpha, y).shape, -1.0 / self.scale**2)[()]

    def to_dict(self):
        return {"type": self.tag, "times": list(self.times), "values": list(self.values),
                "scale": self.scale}


@dataclass(frozen=True)
class WaningEffect(Drift):
    """Drift for a covariate effect that shrinks to zero after ``start``.

    Before ``start`` it is the Normal(0, base_var) Langevin drift; from
    ``start`` on it is ``-beta / scale(y)**2`` with ``scale`` piecewise linear
    through (``scale_times``, ``scale_values``).
    """

    base_var: float = 1.0
    start: float = 0.0
    scale_times: tuple = (0.0,)
    scale_values: tuple = (1.0,)
    tag = "waning"
    time_homogeneous = False

    def __post_init__(self):
        if not self.base_var > 0 or min(self.scale_values) <= 0:
            raise ValueError("WaningEffect scales must be positive")
        if len(self.scale_times) != len(self.scale_values):
            raise ValueError("WaningEffect table lengths differ")

    def _coef(self, y):
        y = np.asarray(y, dtype=float)
        s = np.interp(y, self.scale_times, self.scale_values)
        return np.where(y >= self.start, 1.0 / s**2, 1.0 / (2.0 * self.base_var))

    def mu(self, alpha, y=0.0):
        return -self._coef(y) * np.asarray(alpha)

    def mu_prime(self, alpha, y=0.0):
        return -self._coef(y) + 0.0 * np.asarray(alpha)

    def to_dict(self):
        return {"type": self.tag, "base_var": self.base_var, "start": self.start,
                "scale_times": list(self.scale_times), "scale_values": list(self.scale_values)}


_REGISTRY = {
    cls.tag: cls
    for cls in (RandomWalk, GaussianLangevin, GammaLangevin, GompertzLinear,
                TaperedGammaLangevin, CentredMean, WaningEffect)
}


def drift_from_dict(spec: dict) -> Drift:
    """Build a drift from ``{"type": tag, **params}``."""
    spec = dict(spec)
    tag = spec.pop("type", None)
    if tag not in _REGISTRY:
        raise ValueError(f"unknown drift type {tag!r}; expected one of {sorted(_REGISTRY)}")
    for k, v in list(spec.items()):
        if isinstance(v, list):
            spec[k] = tuple(v)
    try:
        return _REGISTRY[tag](**spec)
    except TypeError as exc:
        raise ValueError(f"bad parameters for drift {tag!r}: {exc}") from None


def mu(drift: Drift, alpha, y=0.0):
    return drift.mu(alpha, y)


def mu_prime(drift: Drift, alpha, y=0.0):
    return drift.mu_prime(alpha, y)
