"""Declarative experiment runners that write curve data as CSV.

A run is described by one YAML file (see ``configs/``). Every command writes
its CSV plus a ``<out>.meta.json`` sidecar holding the fully resolved config,
so a rerun from the sidecar reproduces the CSV byte for byte.

Randomness is keyed by ``(seed, tag, grid indices)`` so each grid point owns
its own stream and the output does not depend on evaluation order.
"""

from __future__ import annotations

import copy
import csv
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .analytic import (
    ConsensusModel,
    FitError,
    Mode,
    carved_bit_count,
    consensus_from_model,
    effective_error,
    fit_consensus_model,
    key_rate,
    outage_probability,
)
from .channel import ChannelParams, Link
from .consensus import CalibrationError, calibrate_thresholds, estimate_consensus
from .optimize import (
    OptimizationConfig,
    Solver,
    greedy_optimize,
    grid_search,
    nlp_baseline,
    spectral_efficiency,
    verify_result,
)
from .protocol import EpisodeConfig, run_campaign

__all__ = [
    "DEFAULTS",
    "ExperimentError",
    "cmd_fit_consensus",
    "cmd_optimize",
    "cmd_simulate",
    "cmd_sweep_kappa",
    "consensus_curve",
    "load_config",
    "resolve_config",
]

log = logging.getLogger(__name__)

FIT_COLUMNS = ["snr_db", "c", "beta", "p_mc", "p_mc_stderr", "p_regressed", "residual"]
PARAM_COLUMNS = ["snr_db", "c", "p1", "p2", "p3", "rmse"]
OPT_COLUMNS = ["solver", "snr_db", "c", "key_rate", "alpha", "beta", "p_oc", "p_oj",
               "p_o", "feasible", "runtime_ms", "evaluations"]
SWEEP_COLUMNS = ["kappa", "solver", "key_rate", "alpha", "beta", "carved_bits",
                 "spectral_efficiency", "feasible"]
SIM_COLUMNS = ["episodes", "empirical_error", "ci_halfwidth", "analytic_p_o",
               "empirical_key_rate", "analytic_key_rate"]

DEFAULTS = {
    "seed": 2021,
    "output_path": "results/out.csv",
    "mc_trials": 100_000,
    "channel": {"snr_db": [15, 20, 25, 30, 35], "c": [0.5, 0.9], "gamma": 1.0},
    "protocol": {"L": 200, "delta": 1e-3, "epsilon": 1e-2, "kappa": None},
    "consensus": {"betas": [round(0.1 * i, 1) for i in range(1, 10)],
                  "stderr_cap": 1e-3, "n_blocks": None},
    "optimization": {"beta_step": 0.01, "alpha_tol": 1e-3, "mode": "approx",
                     "solvers": ["grid", "greedy", "greedy_uniform", "nlp"],
                     "timing": True},
    "sweep": {"kappa": list(range(1, 17)), "solvers": ["greedy"]},
    "simulate": {"alpha": None, "beta": None, "from_optimize": None,
                 "solver": "greedy", "dictionary": "analytic"},
}


class ExperimentError(RuntimeError):
    pass


def _merge(base, override):
    out = copy.deepcopy(base)
    for k, v in (override or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _as_list(x):
    return list(x) if isinstance(x, (list, tuple)) else [x]


def resolve_config(raw: dict | None = None, **overrides) -> dict:
    """Fill defaults and apply CLI-style overrides (``seed``, ``out``, ...)."""
    cfg = _merge(DEFAULTS, raw or {})
    if overrides.get("seed") is not None:
        cfg["seed"] = int(overrides["seed"])
    if overrides.get("out") is not None:
        cfg["output_path"] = str(overrides["out"])
    if overrides.get("trials") is not None:
        cfg["mc_trials"] = int(overrides["trials"])
    if overrides.get("solvers") is not None:
        cfg["optimization"]["solvers"] = list(overrides["solvers"])
        cfg["sweep"]["solvers"] = list(overrides["solvers"])
    cfg["channel"]["snr_db"] = [float(s) for s in _as_list(cfg["channel"]["snr_db"])]
    cfg["channel"]["c"] = [float(c) for c in _as_list(cfg["channel"]["c"])]
    for name in cfg["optimization"]["solvers"] + cfg["sweep"]["solvers"]:
        Solver(name)
    Mode(cfg["optimization"]["mode"])
    return cfg


def load_config(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return yaml.safe_load(fh) or {}


def _rng(cfg, tag: int, *idx: int) -> np.random.Generator:
    return np.random.default_rng([int(cfg["seed"]), tag, *idx])


def _channel(cfg, snr_db: float, c: float) -> ChannelParams:
    return ChannelParams.from_snr_db(snr_db, c, gamma=float(cfg["channel"]["gamma"]))


def _opt_config(cfg, kappa="config") -> OptimizationConfig:
    o, p = cfg["optimization"], cfg["protocol"]
    return OptimizationConfig(
        epsilon=float(p["epsilon"]),
        kappa=p["kappa"] if kappa == "config" else kappa,
        L=int(p["L"]), beta_step=float(o["beta_step"]),
        alpha_tol=float(o["alpha_tol"]), mode=Mode(o["mode"]))


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return repr(x)
    return str(x)


def _write_csv(path: Path, columns, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in columns])


def _write_meta(path: Path, command: str, cfg: dict, extra: dict | None = None):
    meta = {"command": command, "config": cfg}
    if extra:
        meta.update(extra)
    with open(path.with_name(path.name + ".meta.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


# ---------------------------------------------------------------------------
# consensus curve + regression


@dataclass
class CurvePoint:
    beta: float
    p_mc: float
    stderr: float
    delta_hat: float
    ok: bool


def consensus_curve(channel: ChannelParams, betas, delta: float, rng_for,
                    stderr_cap: float = 1e-3, n_blocks=None, link: Link = Link.AR):
    """Calibrate thresholds at each beta, then estimate consensus on fresh draws.

    ``rng_for(i)`` supplies the generator for the ``i``-th beta.

    Returns
    -------
    points : list of CurvePoint
    model : ConsensusModel or None
        Regression over the successfully calibrated points.
    """
    points = []
    for i, beta in enumerate(betas):
        rng = rng_for(i)
        try:
            th, cal = calibrate_thresholds(channel, beta, link, delta, n_blocks, rng,
                                           stderr_cap=stderr_cap)
        except CalibrationError as exc:
            log.warning("calibration failed at beta=%g: %s", beta, exc)
            points.append(CurvePoint(beta, math.nan, math.nan, exc.best_delta, False))
            continue
        est = estimate_consensus(channel, beta, link, th, n_blocks, rng,
                                 stderr_cap=stderr_cap)
        points.append(CurvePoint(beta, est.p_hat, est.std_err, cal.delta_hat, True))
    good = [(pt.beta, pt.p_mc) for pt in points if pt.ok]
    try:
        model = fit_consensus_model(good)
    except FitError as exc:
        log.warning("regression failed: %s", exc)
        model = None
    return points, model


def _fit_instance(cfg, i_snr, i_c):
    snr, c = cfg["channel"]["snr_db"][i_snr], cfg["channel"]["c"][i_c]
    cons = cfg["consensus"]
    return consensus_curve(_channel(cfg, snr, c), cons["betas"],
                           float(cfg["protocol"]["delta"]),
                           lambda i: _rng(cfg, 1, i_snr, i_c, i),
                           stderr_cap=float(cons["stderr_cap"]),
                           n_blocks=cons["n_blocks"])


def cmd_fit_consensus(cfg: dict) -> int:
    """Consensus probability against beta, Monte Carlo and regressed.

    Writes the data CSV and ``<stem>.params.csv`` with one fitted-parameter row
    per (SNR, c).
    """
    out = Path(cfg["output_path"])
    rows, params = [], []
    for i_snr, snr in enumerate(cfg["channel"]["snr_db"]):
        for i_c, c in enumerate(cfg["channel"]["c"]):
            points, model = _fit_instance(cfg, i_snr, i_c)
            for pt in points:
                reg = consensus_from_model(model, pt.beta) if model else math.nan
                rows.append({"snr_db": snr, "c": c, "beta": pt.beta, "p_mc": pt.p_mc,
                             "p_mc_stderr": pt.stderr, "p_regressed": reg,
                             "residual": reg - pt.p_mc})
            if model is not None:
                params.append({"snr_db": snr, "c": c, "p1": model.p1, "p2": model.p2,
                               "p3": model.p3, "rmse": model.fit_rmse})
    rows.sort(key=lambda r: (r["snr_db"], r["c"], r["beta"]))
    params.sort(key=lambda r: (r["snr_db"], r["c"]))
    _write_csv(out, FIT_COLUMNS, rows)
    _write_csv(out.with_suffix(".params.csv"), PARAM_COLUMNS, params)
    _write_meta(out, "fit-consensus", cfg)
    return 0 if params else 2


def _models(cfg):
    """Fitted consensus model per (SNR index, c index)."""
    return {(i, j): _fit_instance(cfg, i, j)[1]
            for i in range(len(cfg["channel"]["snr_db"]))
            for j in range(len(cfg["channel"]["c"]))}


def _solve(solver: Solver, model, channel, ocfg, rng):
    if solver is Solver.Grid:
        return grid_search(model, channel, ocfg)
    if solver is Solver.Greedy:
        return greedy_optimize(model, channel, ocfg)
    if solver is Solver.GreedyUniformInit:
        return greedy_optimize(model, channel, ocfg, beta_start=float(rng.uniform(0, 1)))
    return nlp_baseline(model, channel, ocfg)


def cmd_optimize(cfg: dict) -> int:
    """Key-rate and runtime of each solver at every (SNR, c)."""
    out = Path(cfg["output_path"])
    ocfg = _opt_config(cfg)
    timing = bool(cfg["optimization"]["timing"])
    rows, violations = [], 0
    models = _models(cfg)
    for i_snr, snr in enumerate(cfg["channel"]["snr_db"]):
        for i_c, c in enumerate(cfg["channel"]["c"]):
            model = models[i_snr, i_c]
            channel = _channel(cfg, snr, c)
            for name in cfg["optimization"]["solvers"]:
                solver = Solver(name)
                if model is None:
                    res = None
                else:
                    res = _solve(solver, model, channel, ocfg, _rng(cfg, 2, i_snr, i_c))
                    if not verify_result(res, model, channel, ocfg):
                        violations += 1
                rows.append({
                    "solver": solver.value, "snr_db": snr, "c": c,
                    "key_rate": res.key_rate if res else 0.0,
                    "alpha": res.alpha if res else math.nan,
                    "beta": res.beta if res else math.nan,
                    "p_oc": res.p_oc if res else math.nan,
                    "p_oj": res.p_oj if res else math.nan,
                    "p_o": res.p_o if res else math.nan,
                    "feasible": bool(res and res.feasible),
                    "runtime_ms": 1e3 * res.runtime if (res and timing) else 0.0,
                    "evaluations": res.evaluations if res else 0,
                })
    rows.sort(key=lambda r: (r["snr_db"], r["c"], r["solver"]))
    _write_csv(out, OPT_COLUMNS, rows)
    _write_meta(out, "optimize", cfg, {"verification_failures": violations})
    if violations:
        raise ExperimentError(f"{violations} reported points failed re-verification")
    return 0 if any(r["feasible"] for r in rows) else 2


def _single_instance(cfg):
    snrs, cs = cfg["channel"]["snr_db"], cfg["channel"]["c"]
    if len(snrs) != 1 or len(cs) != 1:
        raise ExperimentError("this command takes a single snr_db and c")
    return snrs[0], cs[0]


def cmd_sweep_kappa(cfg: dict) -> int:
    """Band-limited key-rate and spectral efficiency against kappa.

    A row with ``kappa = inf`` holds the unbounded-dictionary reference.
    """
    out = Path(cfg["output_path"])
    snr, c = _single_instance(cfg)
    model = _fit_instance(cfg, 0, 0)[1]
    if model is None:
        raise ExperimentError("consensus regression failed")
    channel = _channel(cfg, snr, c)
    rows = []
    for name in cfg["sweep"]["solvers"]:
        solver = Solver(name)
        for kappa in [*cfg["sweep"]["kappa"], math.inf]:
            ocfg = _opt_config(cfg, kappa=None if math.isinf(kappa) else int(kappa))
            res = _solve(solver, model, channel, ocfg, _rng(cfg, 2, 0, 0))
            p = consensus_from_model(model, res.beta) if res.feasible else 0.0
            m = carved_bit_count(res.alpha, p, ocfg.L) if res.feasible else 0
            rows.append({"kappa": kappa, "solver": solver.value,
                         "key_rate": res.key_rate, "alpha": res.alpha, "beta": res.beta,
                         "carved_bits": m,
                         "spectral_efficiency": spectral_efficiency(res, p, ocfg.L),
                         "feasible": res.feasible})
    rows.sort(key=lambda r: (r["solver"], r["kappa"]))
    _write_csv(out, SWEEP_COLUMNS, rows)
    _write_meta(out, "sweep-kappa", cfg)
    return 0 if any(r["feasible"] for r in rows) else 2


def _point_from_optimize_csv(path, solver, snr, c):
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            if (row["solver"] == solver and float(row["snr_db"]) == snr
                    and float(row["c"]) == c and row["feasible"] == "true"):
                return float(row["alpha"]), float(row["beta"])
    raise ExperimentError(f"no feasible {solver} row for snr={snr}, c={c} in {path}")


def cmd_simulate(cfg: dict) -> int:
    """Protocol Monte Carlo at one (alpha, beta) against the analytic budget."""
    out = Path(cfg["output_path"])
    snr, c = _single_instance(cfg)
    sim = cfg["simulate"]
    channel = _channel(cfg, snr, c)
    model = _fit_instance(cfg, 0, 0)[1]
    if model is None:
        raise ExperimentError("consensus regression failed")
    ocfg = _opt_config(cfg)
    if sim["alpha"] is not None and sim["beta"] is not None:
        alpha, beta = float(sim["alpha"]), float(sim["beta"])
    elif sim["from_optimize"]:
        alpha, beta = _point_from_optimize_csv(sim["from_optimize"], sim["solver"], snr, c)
    else:
        res = _solve(Solver(sim["solver"]), model, channel, ocfg, _rng(cfg, 2, 0, 0))
        if not res.feasible:
            _write_csv(out, SIM_COLUMNS, [])
            _write_meta(out, "simulate", cfg, {"infeasible": True})
            return 2
        alpha, beta = res.alpha, res.beta

    L = ocfg.L
    p_model = consensus_from_model(model, beta)
    delta = float(cfg["protocol"]["delta"])
    n_blocks = cfg["consensus"]["n_blocks"]
    th_ar, _ = calibrate_thresholds(channel, beta, Link.AR, delta, n_blocks,
                                    _rng(cfg, 3, 0))
    th_br, _ = calibrate_thresholds(channel, beta, Link.BR, delta, n_blocks,
                                    _rng(cfg, 3, 1))
    m = carved_bit_count(alpha, p_model, L)
    dictionary = m if sim["dictionary"] == "analytic" else None
    ep = EpisodeConfig(channel=channel, L=L, alpha=alpha, beta=beta,
                       thresholds_ar=th_ar, thresholds_br=th_br,
                       dictionary_bits=dictionary, seed=int(cfg["seed"]))
    stats = run_campaign(ep, int(cfg["mc_trials"]), _rng(cfg, 4))

    rate = key_rate(alpha, p_model)
    p_oc = float(outage_probability(rate, beta, channel, Link.AR, ocfg.mode))
    budget = effective_error(p_oc, 2.0 ** -m, ocfg.mode)
    rows = [{"episodes": stats.episodes, "empirical_error": stats.empirical_error,
             "ci_halfwidth": stats.ci_halfwidth, "analytic_p_o": budget.p_o,
             "empirical_key_rate": stats.empirical_key_rate,
             "analytic_key_rate": rate * L / (L + 1)}]
    _write_csv(out, SIM_COLUMNS, rows)
    _write_meta(out, "simulate", cfg, {"alpha": alpha, "beta": beta, "carved_bits": m,
                                       "p_oc": p_oc, "causes": stats.causes})
    return 0
