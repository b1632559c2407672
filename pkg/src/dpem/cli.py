"""Command-line front end.

Every subcommand reads one JSON run configuration; ``--set a.b=value``
overrides any scalar field.  Outputs go to ``output_dir`` (or the directory
named by ``DPEM_OUTPUT_DIR``).  Exit codes: 0 ok, 1 runtime, 2 config, 3 data.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import data as data_mod
from .data import DataError
from .discretise import InnovationScheme, simulate_prior_hazard
from .drift import RandomWalk, drift_from_dict
from .knots import KnotConfig
from .pdmp import SamplerConfig, run_chain
from .posterior import (
    ExtrapolationConfig,
    PosteriorDraws,
    curve_quantiles,
    ess,
    extrapolate,
    mcse_mean,
    mean_survival_draws,
    psis_loo,
    summarise,
)
from .rj import RjConfig, run_rj

log = logging.getLogger("dpem")

OUTPUT_ENV = "DPEM_OUTPUT_DIR"

DEFAULTS = {
    "data": {"path": "colon", "y_plus": 3.0, "covariates": []},
    "drift": {"type": "random_walk"},
    "covariate_drifts": [],
    "scheme": {"kind": "skew_symmetric", "sigma": 0.5, "sigma0": 2.0, "sigma_rate": 2.0},
    "knots": {"omega": 0.5, "gamma": 7.0, "gamma_shape": None, "gamma_rate": None},
    "sampler": {
        "method": "pdmp", "dt": 0.05, "lambda_e": 1.0, "lambda_r": 0.0, "gibbs_interval": 1.0,
        "burn_in": 200.0, "spacing": 0.5, "total_time": 5200.0, "chains": 2, "seed": 0,
        "fix_sigma": False, "rj_iterations": 20000, "rj_burn_in": 2000, "rj_thin": 1, "rj_scale": 0.1,
    },
    "extrapolation": {"horizon": None, "kappa": None},
    "curves": {"points": 61},
    "prior_sim": {"drifts": [], "paths": 20, "horizon": None},
    "loo": {"gammas": []},
    "output_dir": "dpem_out",
}


class ConfigError(Exception):
    """Configuration problem; the message names the offending field."""


class MissingInput(ConfigError):
    pass


# ---------------------------------------------------------------------------
# configuration


def _merge(base, over, path=""):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k not in base:
            raise ConfigError(f"{path}{k}: unknown field")
        if isinstance(base[k], dict) and isinstance(v, dict):
            out[k] = _merge(base[k], v, f"{path}{k}.")
        else:
            out[k] = v
    return out


def _set(cfg, assignment):
    if "=" not in assignment:
        raise ConfigError(f"--set {assignment!r}: expected key=value")
    key, raw = assignment.split("=", 1)
    try:
        val = json.loads(raw)
    except json.JSONDecodeError:
        val = raw
    node = cfg
    parts = key.split(".")
    for p in parts[:-1]:
        if not isinstance(node.get(p), dict):
            raise ConfigError(f"{key}: unknown field")
        node = node[p]
    if parts[-1] not in node:
        raise ConfigError(f"{key}: unknown field")
    node[parts[-1]] = val


def load_config(path=None, overrides=()):
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise MissingInput(f"config file not found: {p}")
        try:
            user = json.loads(p.read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"{p}: invalid JSON ({e})") from e
        if not isinstance(user, dict):
            raise ConfigError(f"{p}: top level must be an object")
        cfg = _merge(cfg, user)
    for a in overrides:
        _set(cfg, a)
    validate_config(cfg)
    return cfg


def _num(cfg, key, positive=False, nonneg=False, integer=False, allow_none=False):
    node = cfg
    for p in key.split("."):
        node = node[p]
    if node is None and allow_none:
        return
    if isinstance(node, bool) or not isinstance(node, (int, float)) or not math.isfinite(node):
        raise ConfigError(f"{key}: expected a number, got {node!r}")
    if integer and int(node) != node:
        raise ConfigError(f"{key}: expected an integer")
    if positive and not node > 0:
        raise ConfigError(f"{key}: must be positive")
    if nonneg and node < 0:
        raise ConfigError(f"{key}: must be non-negative")


def validate_config(cfg):
    _num(cfg, "data.y_plus", positive=True)
    for k in ("dt", "gibbs_interval", "spacing", "total_time", "rj_scale"):
        _num(cfg, f"sampler.{k}", positive=True)
    for k in ("lambda_e", "lambda_r", "burn_in"):
        _num(cfg, f"sampler.{k}", nonneg=True)
    _num(cfg, "sampler.chains", positive=True, integer=True)
    _num(cfg, "sampler.seed", nonneg=True, integer=True)
    for k in ("rj_iterations", "rj_thin"):
        _num(cfg, f"sampler.{k}", positive=True, integer=True)
    _num(cfg, "sampler.rj_burn_in", nonneg=True, integer=True)
    if cfg["sampler"]["burn_in"] >= cfg["sampler"]["total_time"]:
        raise ConfigError("sampler.burn_in: must be smaller than sampler.total_time")
    if cfg["sampler"]["method"] not in ("pdmp", "rj"):
        raise ConfigError("sampler.method: expected 'pdmp' or 'rj'")
    _num(cfg, "knots.omega", positive=True)
    if not cfg["knots"]["omega"] < 1:
        raise ConfigError("knots.omega: must lie in (0, 1)")
    _num(cfg, "knots.gamma", positive=True)
    _num(cfg, "knots.gamma_shape", positive=True, allow_none=True)
    _num(cfg, "knots.gamma_rate", positive=True, allow_none=True)
    if (cfg["knots"]["gamma_shape"] is None) != (cfg["knots"]["gamma_rate"] is None):
        raise ConfigError("knots.gamma_shape: give both gamma_shape and gamma_rate, or neither")
    if cfg["scheme"]["kind"] not in ("skew_symmetric", "euler_maruyama"):
        raise ConfigError("scheme.kind: expected 'skew_symmetric' or 'euler_maruyama'")
    for k in ("sigma", "sigma0", "sigma_rate"):
        _num(cfg, f"scheme.{k}", positive=True)
    _num(cfg, "extrapolation.horizon", positive=True, allow_none=True)
    _num(cfg, "extrapolation.kappa", positive=True, integer=True, allow_none=True)
    h = cfg["extrapolation"]["horizon"]
    if h is not None and h <= cfg["data"]["y_plus"]:
        raise ConfigError("extrapolation.horizon: must exceed data.y_plus")
    _num(cfg, "curves.points", positive=True, integer=True)
    _num(cfg, "prior_sim.paths", positive=True, integer=True)
    _num(cfg, "prior_sim.horizon", positive=True, allow_none=True)
    for key, spec in [("drift", cfg["drift"])] + [
        (f"covariate_drifts[{i}]", d) for i, d in enumerate(cfg["covariate_drifts"])
    ] + [(f"prior_sim.drifts[{i}]", d) for i, d in enumerate(cfg["prior_sim"]["drifts"])]:
        try:
            drift_from_dict(spec)
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"{key}: {e}") from e
    if not isinstance(cfg["data"]["covariates"], list):
        raise ConfigError("data.covariates: expected a list of column names")
    if cfg["covariate_drifts"] and len(cfg["covariate_drifts"]) != len(cfg["data"]["covariates"]):
        raise ConfigError("covariate_drifts: need one drift per selected covariate")
    for g in cfg["loo"]["gammas"]:
        if isinstance(g, bool) or not isinstance(g, (int, float)) or not g > 0:
            raise ConfigError(f"loo.gammas: invalid value {g!r}")


def config_hash(cfg) -> str:
    body = {k: v for k, v in cfg.items() if k != "output_dir"}
    return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()[:16]


def output_dir(cfg) -> Path:
    d = Path(os.environ.get(OUTPUT_ENV) or cfg["output_dir"])
    d.mkdir(parents=True, exist_ok=True)
    return d


# ---------------------------------------------------------------------------
# component builders


def build_dataset(cfg):
    d = cfg["data"]
    if d["path"] == "colon":
        path = data_mod.colon_path()
    else:
        path = Path(d["path"])
    if not Path(path).is_file():
        raise MissingInput(f"data.path: dataset file not found: {path}")
    ds = data_mod.load_dataset(path, float(d["y_plus"]))
    return ds.select_covariates(d["covariates"])


def build_scheme(cfg):
    s = cfg["scheme"]
    return InnovationScheme(kind=s["kind"], sigma=s["sigma"], sigma0=s["sigma0"], sigma_rate=s["sigma_rate"])


def build_knots(cfg, gamma=None):
    k = cfg["knots"]
    return KnotConfig(cfg["data"]["y_plus"], k["gamma"] if gamma is None else gamma, k["omega"],
                      k["gamma_shape"], k["gamma_rate"])


def covariate_drifts(cfg, ds):
    if cfg["covariate_drifts"]:
        return [drift_from_dict(d) for d in cfg["covariate_drifts"]]
    return [RandomWalk() for _ in range(ds.p)]


def chain_seeds(seed, chains):
    """Independent per-chain generators spawned from one seed."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(chains)]


def fit(cfg, ds, gamma=None):
    """Run all configured chains; returns merged PosteriorDraws."""
    s = cfg["sampler"]
    scheme = build_scheme(cfg)
    kc = build_knots(cfg, gamma)
    drift = drift_from_dict(cfg["drift"])
    rngs = chain_seeds(int(s["seed"]), int(s["chains"]))

    if s["method"] == "rj":
        if ds.p:
            raise ConfigError("sampler.method: the reversible jump comparator has no covariate support")
        rc = RjConfig(iterations=int(s["rj_iterations"]), scale=s["rj_scale"], seed=int(s["seed"]),
                      burn_in=int(s["rj_burn_in"]), thin=int(s["rj_thin"]), fix_sigma=bool(s["fix_sigma"]))

        def job(c):
            return run_rj(ds, drift, scheme, kc, rc, rng=rngs[c], chain=c)[0]
    else:
        sc = SamplerConfig(dt=s["dt"], lambda_e=s["lambda_e"], lambda_r=s["lambda_r"],
                           gibbs_interval=s["gibbs_interval"], burn_in=s["burn_in"], spacing=s["spacing"],
                           total_time=s["total_time"], seed=int(s["seed"]), fix_sigma=bool(s["fix_sigma"]),
                           record_loglik=False)
        cov = covariate_drifts(cfg, ds)

        def job(c):
            return run_chain(ds, drift, scheme, kc, sc, rng=rngs[c], covariate_drifts=cov, chain=c)[0]

    with ThreadPoolExecutor(max_workers=int(s["chains"])) as pool:
        parts = list(pool.map(job, range(int(s["chains"]))))
    return PosteriorDraws.concat(parts)


# ---------------------------------------------------------------------------
# file formats


def _f(x):
    return repr(float(x))


def write_draws(path, draws: PosteriorDraws, meta):
    with open(path, "w", newline="") as fh:
        fh.write(f"# {json.dumps(meta, sort_keys=True)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["chain", "index", "gamma", "sigma", "blocks"])
        for s in range(len(draws)):
            cell = [[[float(v) for v in draws.blocks[b][s][0]], [float(v) for v in draws.blocks[b][s][1]]]
                    for b in range(len(draws.blocks))]
            w.writerow([int(draws.chain[s]), int(draws.index[s]), _f(draws.gamma[s]), _f(draws.sigma[s]),
                        json.dumps(cell)])


def read_draws(path) -> tuple[PosteriorDraws, dict]:
    p = Path(path)
    if not p.is_file():
        raise MissingInput(f"draws file not found: {p}")
    with open(p, newline="") as fh:
        first = fh.readline()
        if not first.startswith("# "):
            raise DataError(f"{p}: missing metadata line")
        meta = json.loads(first[2:])
        rows = list(csv.DictReader(fh))
    if not rows:
        raise DataError(f"{p}: no draws")
    cells = [json.loads(r["blocks"]) for r in rows]
    nb = len(cells[0])
    blocks = [[(np.array(c[b][0], dtype=float), np.array(c[b][1], dtype=float)) for c in cells]
              for b in range(nb)]
    draws = PosteriorDraws(
        sigma=np.array([float(r["sigma"]) for r in rows]),
        gamma=np.array([float(r["gamma"]) for r in rows]),
        blocks=blocks, y_plus=float(meta["y_plus"]), horizon=float(meta["horizon"]),
        chain=np.array([int(r["chain"]) for r in rows]), index=np.array([int(r["index"]) for r in rows]),
    )
    return draws, meta


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_curves(path, draws, meta, points):
    hi = draws.horizon
    grid = np.linspace(0.0, hi, int(points))
    with open(path, "w", newline="") as fh:
        fh.write(f"# {json.dumps(meta, sort_keys=True)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["curve", "grid", "median", "lo", "hi"])
        for which, g in (("hazard", grid[1:]), ("survival", grid)):
            q = curve_quantiles(draws, g, which)
            for i in range(g.size):
                w.writerow([which, _f(g[i]), _f(q["median"][i]), _f(q["lower"][i]), _f(q["upper"][i])])


def summary_of(draws: PosteriorDraws, meta, ds=None):
    """Estimands and diagnostics computed from draws alone (plus the data for LOO)."""
    out = dict(meta)
    out["draws"] = len(draws)
    out["mean_survival_observation"] = summarise(mean_survival_draws(draws, draws.y_plus))
    if draws.horizon > draws.y_plus:
        out["mean_survival_horizon"] = summarise(mean_survival_draws(draws, draws.horizon))
    n_knots = np.array([len(k) for k, _ in draws.blocks[0]], dtype=float)
    diag = {}
    for name, vals in (("sigma", draws.sigma), ("n_knots", n_knots),
                       ("mean_survival_observation", mean_survival_draws(draws, draws.y_plus))):
        if vals.size >= 10:
            e, flag = ess(vals, return_flag=True)
            diag[name] = {"ess": float(e), "degenerate": bool(flag)}
    out["ess"] = diag
    out["sigma"] = summarise(draws.sigma)
    out["n_knots"] = summarise(n_knots)
    if ds is not None and ds.n and len(draws) >= 100:
        out["loo"] = psis_loo(draws.pointwise_loglik(ds)).to_dict()
    return out


# ---------------------------------------------------------------------------
# subcommands


def _meta(cfg, **extra):
    m = dict(config_hash=config_hash(cfg), seed=int(cfg["sampler"]["seed"]),
             y_plus=float(cfg["data"]["y_plus"]))
    m.update(extra)
    return m


def cmd_fit(cfg, args):
    ds = build_dataset(cfg)
    draws = fit(cfg, ds)
    out = output_dir(cfg)
    meta = _meta(cfg, horizon=float(draws.horizon), method=cfg["sampler"]["method"])
    write_draws(out / "draws.csv", draws, meta)
    draws, meta = read_draws(out / "draws.csv")  # summaries use exactly what is on disk
    write_curves(out / "curves.csv", draws, meta, cfg["curves"]["points"])
    write_json(out / "summary.json", summary_of(draws, meta, ds))
    write_json(out / "config.json", cfg)
    print(out / "draws.csv")
    return 0


def _draws_arg(cfg, args):
    return Path(args.draws) if args.draws else output_dir(cfg) / "draws.csv"


def cmd_summary(cfg, args):
    draws, meta = read_draws(_draws_arg(cfg, args))
    ds = build_dataset(cfg) if draws.horizon == draws.y_plus else None
    res = summary_of(draws, meta, ds)
    target = Path(args.out) if args.out else output_dir(cfg) / "summary.json"
    write_json(target, res)
    print(target)
    return 0


def cmd_extrapolate(cfg, args):
    draws, meta = read_draws(_draws_arg(cfg, args))
    ds_p = len(draws.blocks) - 1
    e = cfg["extrapolation"]
    horizon = e["horizon"] if e["horizon"] is not None else 5.0 * draws.y_plus
    if horizon <= draws.y_plus:
        raise ConfigError("extrapolation.horizon: must exceed the observation period of the draws")
    rng = np.random.default_rng(np.random.SeedSequence([int(cfg["sampler"]["seed"]), 1]))
    drifts = [drift_from_dict(cfg["drift"])]
    drifts += [drift_from_dict(d) for d in cfg["covariate_drifts"]] or [RandomWalk()] * ds_p
    ext = extrapolate(draws, drifts, build_scheme(cfg),
                      ExtrapolationConfig(horizon=float(horizon), kappa=e["kappa"]), rng)
    out = output_dir(cfg)
    meta = dict(meta, horizon=float(horizon), extrapolation_hash=config_hash(cfg))
    write_draws(out / "draws_extrapolated.csv", ext, meta)
    ext, meta = read_draws(out / "draws_extrapolated.csv")
    write_curves(out / "curves_extrapolated.csv", ext, meta, cfg["curves"]["points"])
    write_json(out / "summary_extrapolated.json", summary_of(ext, meta))
    print(out / "draws_extrapolated.csv")
    return 0


def cmd_loo(cfg, args):
    ds = build_dataset(cfg)
    out = output_dir(cfg)
    gammas = cfg["loo"]["gammas"]
    if not gammas:
        draws, meta = read_draws(_draws_arg(cfg, args))
        res = psis_loo(draws.pointwise_loglik(ds)).to_dict()
        res.update(config_hash=meta["config_hash"], seed=meta["seed"])
        write_json(out / "loo.json", res)
        print(out / "loo.json")
        return 0
    rows = []
    for g in gammas:
        draws = fit(cfg, ds, gamma=float(g))
        r = psis_loo(draws.pointwise_loglik(ds))
        mk = r.to_dict()["max_k"]
        rows.append((float(g), r.elpd_loo, r.se, np.nan if mk is None else mk, r.n_bad_k))
        log.info("gamma=%g elpd=%.3f se=%.3f", g, r.elpd_loo, r.se)
    with open(out / "loo_sweep.csv", "w", newline="") as fh:
        fh.write(f"# {json.dumps(_meta(cfg), sort_keys=True)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["gamma", "elpd", "se", "max_k", "n_bad_k"])
        for g, el, se, mk, nb in rows:
            w.writerow([_f(g), _f(el), _f(se), _f(mk), nb])
    best = max(rows, key=lambda r: r[1])[0]
    print(f"best gamma {best:g}; table at {out / 'loo_sweep.csv'}")
    return 0


def cmd_prior_sim(cfg, args):
    out = output_dir(cfg)
    ps = cfg["prior_sim"]
    specs = ps["drifts"] or [cfg["drift"]]
    horizon = ps["horizon"] or 5.0 * cfg["data"]["y_plus"]
    scheme = build_scheme(cfg)
    kc = build_knots(cfg)
    root = np.random.SeedSequence(int(cfg["sampler"]["seed"]))
    written = []
    for i, (spec, ss) in enumerate(zip(specs, root.spawn(len(specs)))):
        drift = drift_from_dict(spec)
        rng = np.random.default_rng(ss)
        path = out / f"prior_paths_{i}_{drift.tag}.csv"
        with open(path, "w", newline="") as fh:
            fh.write(f"# {json.dumps(_meta(cfg, drift=spec, horizon=float(horizon)), sort_keys=True)}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["path", "knot", "log_hazard"])
            for k in range(int(ps["paths"])):
                m = simulate_prior_hazard(drift, scheme, kc.gamma, horizon, rng)
                for y, a in zip(m.knots[:-1], m.log_hazards):
                    w.writerow([k, _f(y), _f(a)])
        written.append(path)
        print(path)
    return 0


def cmd_compare_rj(cfg, args):
    ds = build_dataset(cfg)
    if ds.p:
        raise ConfigError("data.covariates: the comparison uses the baseline model only")
    grid = np.linspace(0.0, ds.admin_censor_time, 11)[1:] - 0.5 * ds.admin_censor_time / 10
    res = {}
    for method in ("pdmp", "rj"):
        c = copy.deepcopy(cfg)
        c["sampler"]["method"] = method
        draws = fit(c, ds)
        h = np.exp(draws.log_hazard_at(grid))
        res[method] = (h.mean(axis=0), np.array([_mcse_cols(h[:, j]) for j in range(grid.size)]),
                       float(ess(mean_survival_draws(draws, draws.y_plus))))
    out = output_dir(cfg)
    z = np.abs(res["pdmp"][0] - res["rj"][0]) / np.hypot(res["pdmp"][1], res["rj"][1])
    with open(out / "compare_rj.csv", "w", newline="") as fh:
        fh.write(f"# {json.dumps(_meta(cfg), sort_keys=True)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["grid", "pdmp_mean", "pdmp_mcse", "rj_mean", "rj_mcse", "z"])
        for j in range(grid.size):
            w.writerow([_f(grid[j]), _f(res["pdmp"][0][j]), _f(res["pdmp"][1][j]),
                        _f(res["rj"][0][j]), _f(res["rj"][1][j]), _f(z[j])])
    write_json(out / "compare_rj.json", dict(_meta(cfg), max_z=float(z.max()),
                                             ess_mean_survival={k: v[2] for k, v in res.items()}))
    print(out / "compare_rj.csv")
    return 0


def _mcse_cols(x):
    return mcse_mean(x)


COMMANDS = {
    "fit": cmd_fit,
    "prior-sim": cmd_prior_sim,
    "simulate-prior": cmd_prior_sim,
    "extrapolate": cmd_extrapolate,
    "loo": cmd_loo,
    "summary": cmd_summary,
    "compare-rj": cmd_compare_rj,
}


def build_parser():
    ap = argparse.ArgumentParser(prog="dpem", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("config", nargs="?", help="JSON run configuration")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a field, e.g. sampler.seed=3")
        if name in ("summary", "extrapolate", "loo"):
            sp.add_argument("--draws", help="draws CSV (default: <output_dir>/draws.csv)")
        if name == "summary":
            sp.add_argument("--out", help="summary JSON path")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = load_config(args.config, args.set)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (DataError, FileNotFoundError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3
    except Exception as e:  # noqa: BLE001
        print(f"runtime error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
