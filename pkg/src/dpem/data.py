"""Right-censored survival datasets with an administrative censoring time."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np


class DataError(ValueError):
    """Raised when a survival dataset fails validation."""


@dataclass(frozen=True)
class Observation:
    time: float
    event: bool
    covariates: tuple[float, ...] = ()


@dataclass(frozen=True)
class Dataset:
    observations: tuple[Observation, ...]
    admin_censor_time: float
    covariate_names: tuple[str, ...] = ()
    _arrays: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if not self.admin_censor_time > 0:
            raise DataError("admin_censor_time must be positive")
        p = len(self.covariate_names)
        for i, ob in enumerate(self.observations):
            if not ob.time > 0:
                raise DataError(f"row {i}: non-positive time {ob.time}")
            if ob.time > self.admin_censor_time:
                raise DataError(f"row {i}: time {ob.time} exceeds administrative censoring time")
            if ob.time == self.admin_censor_time and ob.event:
                raise DataError(f"row {i}: event at the administrative censoring time must be censored")
            if len(ob.covariates) != p:
                raise DataError(f"row {i}: expected {p} covariates, got {len(ob.covariates)}")

    @property
    def n(self) -> int:
        return len(self.observations)

    @property
    def p(self) -> int:
        return len(self.covariate_names)

    @property
    def times(self) -> np.ndarray:
        if "times" not in self._arrays:
            self._arrays["times"] = np.array([o.time for o in self.observations], dtype=float)
        return self._arrays["times"]

    @property
    def events(self) -> np.ndarray:
        if "events" not in self._arrays:
            self._arrays["events"] = np.array([o.event for o in self.observations], dtype=bool)
        return self._arrays["events"]

    @property
    def covariates(self) -> np.ndarray:
        if "cov" not in self._arrays:
            self._arrays["cov"] = np.array(
                [o.covariates for o in self.observations], dtype=float
            ).reshape(self.n, self.p)
        return self._arrays["cov"]

    def subset(self, mask) -> "Dataset":
        obs = tuple(o for o, keep in zip(self.observations, mask) if keep)
        return Dataset(obs, self.admin_censor_time, self.covariate_names)

    def select_covariates(self, names=()) -> "Dataset":
        """Keep only the named covariate columns (empty for a baseline-only fit)."""
        names = tuple(names)
        missing = [nm for nm in names if nm not in self.covariate_names]
        if missing:
            raise DataError(f"unknown covariates: {missing}")
        cols = [self.covariate_names.index(nm) for nm in names]
        obs = tuple(Observation(o.time, o.event, tuple(o.covariates[c] for c in cols))
                    for o in self.observations)
        return Dataset(obs, self.admin_censor_time, names)


def from_arrays(times, events, admin_censor_time, covariates=None, covariate_names=()):
    times = np.asarray(times, dtype=float)
    events = np.asarray(events, dtype=bool)
    if covariates is None:
        covariates = np.zeros((len(times), len(covariate_names)))
    covariates = np.asarray(covariates, dtype=float)
    covariates = covariates.reshape(len(times), covariates.shape[-1] if covariates.ndim == 2 else -1) \
        if covariates.size else np.zeros((len(times), len(covariate_names)))
    if not covariate_names:
        covariate_names = tuple(f"w{k}" for k in range(covariates.shape[1]))
    obs = tuple(
        Observation(float(t), bool(e), tuple(float(c) for c in w))
        for t, e, w in zip(times, events, covariates)
    )
    return Dataset(obs, float(admin_censor_time), tuple(covariate_names))


def load_dataset(path, admin_censor_time: float) -> Dataset:
    """Read a CSV with columns ``time``, ``event`` and optional covariates.

    Raises:
        FileNotFoundError: if ``path`` does not exist.
        DataError: on missing columns or invalid rows.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        for col in ("time", "event"):
            if col not in header:
                raise DataError(f"{path}: missing column '{col}'")
        it, ie = header.index("time"), header.index("event")
        cov_idx = [k for k in range(len(header)) if k not in (it, ie)]
        names = tuple(header[k] for k in cov_idx)
        obs = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                t = float(row[it])
                e = row[ie].strip()
                covs = tuple(float(row[k]) for k in cov_idx)
            except (ValueError, IndexError) as exc:
                raise DataError(f"{path}:{lineno}: cannot parse row ({exc})") from None
            if e not in ("0", "1"):
                raise DataError(f"{path}:{lineno}: event must be 0 or 1, got {e!r}")
            if not t > 0:
                raise DataError(f"{path}:{lineno}: non-positive time {t}")
            obs.append(Observation(t, e == "1", covs))
    try:
        return Dataset(tuple(obs), float(admin_censor_time), names)
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from None


def write_dataset(ds: Dataset, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "event", *ds.covariate_names])
        for o in ds.observations:
            w.writerow([repr(o.time), int(o.event), *(repr(c) for c in o.covariates)])


def dataset_summary(ds: Dataset) -> dict:
    n = ds.n
    if n == 0:
        return dict(n=0, p=ds.p, events=0, early_censored=0, admin_censored=0, censoring_rate=0.0)
    t, e = ds.times, ds.events
    admin = int(np.sum(~e & (t >= ds.admin_censor_time)))
    early = int(np.sum(~e & (t < ds.admin_censor_time)))
    events = int(e.sum())
    return dict(
        n=n,
        p=ds.p,
        events=events,
        early_censored=early,
        admin_censored=admin,
        censoring_rate=(early + admin) / n,
    )


def colon_path() -> Path:
    """Path of the bundled colon-cancer surrogate (years, administrative censoring at 3)."""
    return Path(resources.files("dpem") / "datasets" / "colon.csv")


def load_colon(covariates=()) -> Dataset:
    """Bundled colon surrogate; pass ``("treated",)`` to keep the treatment indicator."""
    return load_dataset(colon_path(), 3.0).select_covariates(covariates)


def simulate_dataset(rng, n, log_hazard, admin_censor_time, censor_rate=0.0, covariates=None):
    """Simulate right-censored data by inversion of a step log-hazard.

    ``log_hazard`` is a callable ``(knots, alphas)`` pair or a HazardModel-like
    object exposing ``survival_inverse``; see :func:`dpem.model.sample_times`.
    """
    from .model import sample_times

    t = sample_times(log_hazard, rng, n, covariates)
    c = rng.exponential(1.0 / censor_rate, n) if censor_rate > 0 else np.full(n, np.inf)
    obs_t = np.minimum(np.minimum(t, c), admin_censor_time)
    ev = (t <= c) & (t < admin_censor_time)
    return from_arrays(obs_t, ev, admin_censor_time, covariates)
