"""Acceptance checks, one function per criterion.

Each check returns a :class:`CriterionResult`; :func:`run_all` runs them in
order. Expensive shared work (consensus fits and optimizer runs on the
default grid) is cached per seed.
"""

from __future__ import annotations

import functools
import math
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import integrate, special

from . import experiments
from .analytic import (
    Mode,
    carved_bit_count,
    consensus_from_model,
    jamming_probability,
    key_rate,
    marcum_q1,
    outage_probability,
)
from .channel import ChannelParams, Link, sample_channel
from .consensus import calibrate_thresholds, estimate_consensus, unfolded_moments
from .optimize import (
    OptimizationConfig,
    Solver,
    beta_init,
    greedy_optimize,
    grid_search,
    sweep_kappa,
)
from .protocol import EpisodeConfig, run_campaign

__all__ = ["CriterionResult", "consensus_quadrature", "marcum_q1_quadrature", "run_all"]

DEFAULT_SEED = 2021
SNR_GRID = (15.0, 20.0, 25.0, 30.0, 35.0)
C_GRID = (0.5, 0.9)
BETAS = tuple(round(0.1 * i, 1) for i in range(1, 10))
DELTA = 1e-3
EPSILON = 1e-2
L = 200


@dataclass(frozen=True)
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    runtime: float = 0.0

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] C{self.number} {self.name}: {self.detail} ({self.runtime:.2f} s)"


def _timed(number, name):
    def deco(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            t0 = time.perf_counter()
            passed, detail = fn(*args, **kwargs)
            return CriterionResult(number, name, bool(passed), detail,
                                   time.perf_counter() - t0)
        return wrapper
    return deco


# ---------------------------------------------------------------------------
# oracles


def marcum_q1_quadrature(a: float, b: float) -> float:
    """Q1(a, b) as the tail of the noncentral chi-squared (2 dof) density."""
    lam = a * a

    def pdf(x):
        z = math.sqrt(lam * x)
        # i0e keeps exp(-z) I0(z) finite for large z
        return 0.5 * math.exp(-(x + lam) / 2.0 + z) * special.i0e(z)

    x0 = b * b
    mode = max(lam, x0)
    head, _ = integrate.quad(pdf, x0, mode + 50.0, epsabs=1e-14, epsrel=1e-13,
                             limit=400, points=[lam] if x0 < lam < mode + 50 else None)
    tail, _ = integrate.quad(pdf, mode + 50.0, np.inf, epsabs=1e-15, limit=200)
    return head + tail


def consensus_quadrature(params: ChannelParams, beta: float, link: Link, thresholds):
    """Consensus probability by 2-D quadrature of the joint Gaussian density."""
    mean, var, cov = unfolded_moments(params, beta, link)
    sd = math.sqrt(var)
    det = var * var - cov * cov
    norm = 1.0 / (2.0 * math.pi * math.sqrt(det))

    def pdf(y, x):
        u, v = x - mean, y - mean
        return norm * math.exp(-(var * u * u - 2 * cov * u * v + var * v * v) / (2 * det))

    lo, hi = mean - 12 * sd, mean + 12 * sd
    sides = [(lo, thresholds.q_m), (thresholds.q_p, hi)]
    total = 0.0
    for xa, xb in sides:
        for ya, yb in sides:
            val, _ = integrate.dblquad(pdf, xa, xb, ya, yb, epsabs=1e-12, epsrel=1e-10)
            total += val
    return total


# ---------------------------------------------------------------------------
# shared cached work


def _rng(seed, *tag):
    return np.random.default_rng([seed, *tag])


@functools.lru_cache(maxsize=None)
def _fit(seed: int, snr_db: float, c: float):
    channel = ChannelParams.from_snr_db(snr_db, c)
    i, j = SNR_GRID.index(snr_db), C_GRID.index(c)
    points, model = experiments.consensus_curve(
        channel, BETAS, DELTA, lambda k: _rng(seed, 11, i, j, k))
    return channel, points, model


@functools.lru_cache(maxsize=None)
def _optimizer_runs(seed: int):
    cfg = OptimizationConfig(epsilon=EPSILON, L=L)
    runs = {}
    for snr in SNR_GRID:
        for c in C_GRID:
            channel, _, model = _fit(seed, snr, c)
            runs[snr, c] = (grid_search(model, channel, cfg),
                            greedy_optimize(model, channel, cfg))
    return runs


# ---------------------------------------------------------------------------
# criteria


@_timed(1, "Marcum-Q1 accuracy")
def check_marcum(seed=DEFAULT_SEED):
    grid = np.round(np.arange(0.0, 5.0001, 0.1), 10)
    err_b0 = float(np.max(np.abs(marcum_q1(grid, 0.0) - 1.0)))
    err_a0 = float(np.max(np.abs(marcum_q1(0.0, grid) - np.exp(-grid ** 2 / 2))))
    rng = _rng(seed, 1)
    pairs = [(1.0, 1.0)] + [tuple(rng.uniform(0, 5, 2)) for _ in range(20)]
    err_q = max(abs(marcum_q1(a, b) - marcum_q1_quadrature(a, b)) for a, b in pairs)
    ok = err_b0 <= 1e-12 and err_a0 <= 1e-12 and err_q <= 1e-9
    return ok, (f"|Q(a,0)-1|={err_b0:.1e}, |Q(0,b)-e^-b2/2|={err_a0:.1e}, "
                f"max quad err over 21 pairs={err_q:.1e}")


def marcum_approx_gap(snr_db: float, c: float, rates=None) -> float:
    from .analytic import marcum_q1_approx, outage_inputs
    rates = np.linspace(0.0, 2.0, 41) if rates is None else rates
    ch = ChannelParams.from_snr_db(snr_db, c)
    gap = 0.0
    for beta in (0.1, 0.3, 0.5, 0.7, 0.9):
        inp = outage_inputs(rates, beta, ch)
        gap = max(gap, float(np.max(np.abs(marcum_q1(inp.a, inp.b)
                                           - marcum_q1_approx(inp.a, inp.b)))))
    return gap


@_timed(2, "high-SNR Marcum approximation fidelity")
def check_approximation(seed=DEFAULT_SEED):
    gaps = {snr: max(marcum_approx_gap(snr, c) for c in C_GRID) for snr in (20.0, 25.0, 30.0)}
    ok = max(gaps.values()) <= 0.05 and gaps[30.0] <= 0.01
    return ok, ", ".join(f"{s:g} dB max gap={g:.2e}" for s, g in gaps.items())


OUTAGE_POINTS = ((20.0, 0.9, 0.5, 1.0), (20.0, 0.5, 0.5, 1.0), (15.0, 0.5, 0.3, 1.5),
                 (25.0, 0.5, 0.9, 2.0), (30.0, 0.9, 0.9, 2.0), (10.0, 0.5, 0.5, 0.5))


@_timed(3, "exact outage against channel Monte Carlo")
def check_outage(seed=DEFAULT_SEED, n=1_000_000):
    worst, parts = 0.0, []
    for k, (snr, c, beta, rate) in enumerate(OUTAGE_POINTS):
        ch = ChannelParams.from_snr_db(snr, c)
        g2 = np.abs(sample_channel(ch, Link.AR, _rng(seed, 3, k), n)) ** 2
        emp = float(np.mean(np.log2(1 + g2 * (1 - beta) * ch.rho) < rate))
        ana = float(outage_probability(rate, beta, ch, Link.AR, Mode.Exact))
        se = math.sqrt(max(ana * (1 - ana), 1e-12) / n)
        z = abs(emp - ana) / se
        worst = max(worst, z)
        parts.append(f"{ana:.4f}/{emp:.4f}")
    return worst <= 3.0, f"analytic/MC {', '.join(parts)}; worst |z|={worst:.2f}"


@_timed(4, "consensus pipeline (calibration, quadrature, regression)")
def check_consensus(seed=DEFAULT_SEED):
    channel, points, model = _fit(seed, 20.0, 0.9)
    cal_ok = all(pt.ok and pt.delta_hat <= DELTA for pt in points)
    z_max, n_close = 0.0, 0
    for k, pt in enumerate(points):
        th, _ = calibrate_thresholds(channel, pt.beta, Link.AR, DELTA, None,
                                     _rng(seed, 4, k))
        est = estimate_consensus(channel, pt.beta, Link.AR, th, None, _rng(seed, 5, k))
        exact = consensus_quadrature(channel, pt.beta, Link.AR, th)
        se = math.sqrt(max(exact * (1 - exact), 1e-300) / est.n_samples)
        z_max = max(z_max, abs(est.p_hat - exact) / se)
        reg = consensus_from_model(model, pt.beta)
        n_close += abs(reg - pt.p_mc) <= 2 * pt.stderr
    ok = cal_ok and z_max <= 3.0 and n_close >= 8
    return ok, (f"calibration delta<=1e-3 at all betas: {cal_ok}; MC vs quadrature "
                f"worst |z|={z_max:.2f}; regression within 2 SE at {n_close}/9 "
                f"(rmse={model.fit_rmse:.2e})")


MONOTONE_MODELS = ((15.0, 0.5), (20.0, 0.5), (30.0, 0.5), (20.0, 0.9))


@_timed(5, "monotonicity properties")
def check_monotonicity(seed=DEFAULT_SEED):
    cfg = OptimizationConfig(epsilon=EPSILON, L=L)
    tol = 1e-12
    fails = []
    for snr, c in MONOTONE_MODELS:
        channel, _, model = _fit(seed, snr, c)
        alphas = np.linspace(0.0, 0.98, 50)
        betas = np.linspace(max(0.01, -model.p3 + 1e-3), 0.99, 50)
        p = consensus_from_model(model, betas)
        kr = key_rate(alphas[:, None], p[None, :])
        if np.any(np.diff(kr, axis=1) < -tol):
            fails.append(f"rate-vs-beta@{snr:g}/{c}")
        if np.any(np.diff(kr, axis=0) > tol):
            fails.append(f"rate-vs-alpha@{snr:g}/{c}")
        poc = np.array([[outage_probability(key_rate(a, pb), b, channel, Link.AR,
                                            Mode.Approx) for b, pb in zip(betas, p)]
                        for a in alphas])
        pj = jamming_probability(alphas[:, None], p[None, :], L)
        if np.any(np.diff(poc, axis=0) > tol) or np.any(np.diff(pj, axis=0) > tol):
            fails.append(f"error-vs-alpha@{snr:g}/{c}")

        def f(b):
            return float(outage_probability(2 * consensus_from_model(model, b), b,
                                            channel, Link.AR, Mode.Approx))

        b_star = beta_init(model, channel, config=cfg)
        if b_star >= 1 - cfg.beta_step:
            if f(b_star) > EPSILON:
                fails.append(f"beta-init-cap@{snr:g}/{c}")
        else:
            bracket = f(b_star - 0.05) < EPSILON < f(min(b_star + 0.05, 0.999))
            if abs(f(b_star) - EPSILON) > 1e-4 or not bracket:
                fails.append(f"beta-init-root@{snr:g}/{c}")
    return not fails, "all hold" if not fails else "violations: " + ", ".join(fails)


@_timed(6, "greedy quality against grid")
def check_quality(seed=DEFAULT_SEED):
    t0 = time.perf_counter()
    runs = _optimizer_runs(seed)
    elapsed = time.perf_counter() - t0
    ratios, ok = [], True
    for (snr, c), (grid, greedy) in runs.items():
        ok &= greedy.key_rate >= 0.95 * grid.key_rate - 1e-12
        ok &= grid.key_rate >= greedy.key_rate - 1e-12
        if grid.key_rate > 0:
            ratios.append(greedy.key_rate / grid.key_rate)
    n_inf = sum(not g.feasible for g, _ in runs.values())
    ok &= elapsed < 120.0
    return ok, (f"min greedy/grid={min(ratios):.4f} over {len(ratios)} feasible "
                f"instances ({n_inf} infeasible for both); grid run {elapsed:.1f} s")


@_timed(7, "greedy runtime against grid")
def check_runtime(seed=DEFAULT_SEED):
    runs = _optimizer_runs(seed)
    worst = max(greedy.runtime / grid.runtime for grid, greedy in runs.values())
    evals = [(greedy.evaluations, grid.evaluations) for grid, greedy in runs.values()]
    return worst <= 0.1, (f"worst greedy/grid time ratio={worst:.4f}; evaluations "
                          f"greedy {min(e[0] for e in evals)}..{max(e[0] for e in evals)}"
                          f" vs grid {evals[0][1]}")


def _lattice_step_gain(model, res, cfg):
    p = consensus_from_model(model, res.beta)
    nb = min(res.beta + cfg.beta_step, 1 - cfg.beta_step)
    return max(2 * p * cfg.alpha_tol,
               abs(key_rate(res.alpha, consensus_from_model(model, nb)) - res.key_rate))


@_timed(8, "band-limited sweep shape")
def check_sweep(seed=DEFAULT_SEED):
    # the optimum is the exact lattice solution; greedy is reported alongside
    base = OptimizationConfig(epsilon=EPSILON, L=L)
    kappas = range(1, 17)
    fails, n, greedy_dips = [], 0, []
    for snr in SNR_GRID:
        for c in C_GRID:
            channel, _, model = _fit(seed, snr, c)
            p3 = grid_search(model, channel, base)
            if not p3.feasible:
                continue
            n += 1
            sw = sweep_kappa(model, channel, base, kappas, solver=Solver.Grid)
            kr = np.array([r.key_rate for _, r, _ in sw])
            se = np.array([s for *_, s in sw])
            if np.any(np.diff(kr) < -1e-12):
                fails.append(f"monotone@{snr:g}/{c}")
            if abs(kr[-1] - p3.key_rate) > _lattice_step_gain(model, p3, base) + 1e-12:
                fails.append(f"saturation@{snr:g}/{c}")
            inner = se[1:-1]
            ends = (se[0], se[-1])
            if not np.any((inner >= max(ends)) & (inner > min(ends))):
                fails.append(f"interior-max@{snr:g}/{c}")
            gk = np.array([r.key_rate for _, r, _ in sweep_kappa(model, channel, base, kappas)])
            dip = float(np.max(np.maximum.accumulate(gk) - gk))
            if dip > 0:
                greedy_dips.append(f"{snr:g}/{c}:{dip:.1e}")
    detail = (f"{n} feasible instances, grid optimum; "
              + ("all hold" if not fails else "violations: " + ", ".join(fails))
              + "; greedy dips (info): " + (", ".join(greedy_dips) or "none"))
    return not fails, detail


@_timed(9, "end-to-end closure")
def check_closure(seed=DEFAULT_SEED, episodes=100_000):
    cfg = OptimizationConfig(epsilon=EPSILON, L=L, kappa=16)
    ok, parts = True, []
    for k, c in enumerate(C_GRID):
        channel, _, model = _fit(seed, 20.0, c)
        res = greedy_optimize(model, channel, cfg)
        p = consensus_from_model(model, res.beta)
        th_ar, _ = calibrate_thresholds(channel, res.beta, Link.AR, DELTA, None,
                                        _rng(seed, 9, k, 0))
        th_br, _ = calibrate_thresholds(channel, res.beta, Link.BR, DELTA, None,
                                        _rng(seed, 9, k, 1))
        ep = EpisodeConfig(channel=channel, L=L, alpha=res.alpha, beta=res.beta,
                           thresholds_ar=th_ar, thresholds_br=th_br,
                           dictionary_bits=carved_bit_count(res.alpha, p, L))
        st = run_campaign(ep, episodes, _rng(seed, 9, k, 2))
        band = 3 * st.ci_halfwidth
        good = (st.empirical_error <= EPSILON + band
                and abs(st.empirical_error - res.p_o) <= band)
        ok &= good
        parts.append(f"c={c}: emp={st.empirical_error:.4f} analytic={res.p_o:.4f} "
                     f"3CI={band:.4f}")
    ze = EpisodeConfig(channel=channel, L=L, alpha=0.0, beta=0.5,
                       thresholds_ar=th_ar, thresholds_br=th_br)
    zero = run_campaign(ze, 1000, _rng(seed, 9, 99))
    ok &= zero.empirical_error == 1.0
    parts.append(f"alpha=0 failure rate={zero.empirical_error:g}")
    return ok, "; ".join(parts)


DETERMINISM_CONFIG = {
    "mc_trials": 300,
    "channel": {"snr_db": [20.0], "c": [0.5]},
    "consensus": {"stderr_cap": 5e-3},
    "optimization": {"timing": False, "solvers": ["grid", "greedy", "greedy_uniform", "nlp"]},
    "sweep": {"kappa": [6, 10, 14], "solvers": ["greedy"]},
}


@_timed(10, "byte-identical reruns")
def check_determinism(seed=DEFAULT_SEED):
    cmds = [("fit-consensus", experiments.cmd_fit_consensus),
            ("optimize", experiments.cmd_optimize),
            ("sweep-kappa", experiments.cmd_sweep_kappa),
            ("simulate", experiments.cmd_simulate)]
    bad = []
    with tempfile.TemporaryDirectory() as tmp:
        for name, cmd in cmds:
            blobs = []
            for rep in range(2):
                out = Path(tmp) / f"{name}-{rep}" / "out.csv"
                cfg = experiments.resolve_config(DETERMINISM_CONFIG, seed=seed, out=out)
                cmd(cfg)
                files = sorted(out.parent.iterdir())
                # the sidecar records the output path, which differs by design
                blobs.append([f.read_bytes() for f in files if f.suffix != ".json"])
            if blobs[0] != blobs[1]:
                bad.append(name)
    return not bad, "identical" if not bad else "differs: " + ", ".join(bad)


CHECKS = (check_marcum, check_approximation, check_outage, check_consensus,
          check_monotonicity, check_quality, check_runtime, check_sweep, check_closure,
          check_determinism)


def run_all(seed: int | None = None) -> list[CriterionResult]:
    seed = DEFAULT_SEED if seed is None else seed
    return [check(seed=seed) for check in CHECKS]
