"""Key-rate maximisation over the bit-allocation and power-allocation split.

All solvers maximise ``(1 - alpha) * 2 * p(beta)`` subject to the delivery
failure bound ``epsilon`` and, when ``kappa`` is finite, at most ``kappa``
carved bits (``2**kappa`` available bands). In ``Approx`` mode the failure
probability is the additive bound ``P~(O_C) + P(O_J)`` with the high-SNR
Marcum-Q; ``Exact`` mode uses ``P(O_C) + (1 - P(O_C)) P(O_J)`` with the exact
Marcum-Q.

Grid and greedy search share one lattice: ``beta`` in multiples of
``beta_step`` and ``alpha`` in multiples of ``alpha_tol``.
"""

from __future__ import annotations

import enum
import logging
import math
import time
from dataclasses import dataclass, replace

import numpy as np
from scipy import optimize as sopt

from .analytic import (
    FLOOR_GUARD,
    ConsensusModel,
    Mode,
    carved_bit_count,
    consensus_from_model,
    effective_error,
    jamming_probability,
    key_rate,
    marcum_q1,
    outage_probability,
)
from .channel import ChannelParams, Link

__all__ = [
    "InfeasibleError",
    "OptResult",
    "OptimizationConfig",
    "Solver",
    "beta_init",
    "greedy_optimize",
    "grid_search",
    "min_alpha",
    "nlp_baseline",
    "spectral_efficiency",
    "sweep_kappa",
    "verify_result",
]

log = logging.getLogger(__name__)


class Solver(enum.Enum):
    Grid = "grid"
    Greedy = "greedy"
    GreedyUniformInit = "greedy_uniform"
    NLP = "nlp"


class InfeasibleError(RuntimeError):
    pass


@dataclass(frozen=True)
class OptimizationConfig:
    """Problem and solver settings.

    ``kappa=None`` means an unbounded band dictionary.
    """

    epsilon: float = 1e-2
    kappa: int | None = None
    L: int = 200
    beta_step: float = 0.01
    alpha_tol: float = 1e-3
    mode: Mode = Mode.Approx

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError("epsilon must lie in (0, 1)")
        if not 0.0 < self.beta_step < 0.5:
            raise ValueError("beta_step must lie in (0, 0.5)")
        if self.alpha_tol <= 0:
            raise ValueError("alpha_tol must be positive")
        if self.kappa is not None and self.kappa < 1:
            raise ValueError("kappa must be a positive integer or None")
        object.__setattr__(self, "mode", Mode(self.mode))

    @property
    def n_beta(self) -> int:
        return int(round(1.0 / self.beta_step)) - 1

    @property
    def n_alpha(self) -> int:
        return int(round(1.0 / self.alpha_tol))

    def beta_at(self, j: int) -> float:
        return j * self.beta_step

    def alpha_at(self, i: int) -> float:
        return i * self.alpha_tol


@dataclass(frozen=True)
class OptResult:
    alpha: float
    beta: float
    key_rate: float
    p_oc: float
    p_oj: float
    p_o: float
    feasible: bool
    solver: Solver
    runtime: float = 0.0
    evaluations: int = 0
    converged: bool = True

    def with_timing(self, runtime, evaluations):
        return replace(self, runtime=runtime, evaluations=evaluations)


class _Problem:
    """Per-instance evaluator with a running count of constraint evaluations."""

    def __init__(self, model: ConsensusModel, channel: ChannelParams,
                 config: OptimizationConfig, link: Link = Link.AR):
        self.model = model
        self.config = config
        c = channel.los(link)
        self.a2 = 2.0 * c / (1.0 - c)
        self.exp_a = math.exp(-0.5 * self.a2)
        self.a = math.sqrt(self.a2)
        # b^2 = scale * (2^R - 1) / (1 - beta)
        self.b2_scale = 2.0 / (channel.rho * (1.0 - c))
        self.evaluations = 0

    def consensus(self, beta: float) -> float:
        arg = beta + self.model.p3
        if arg <= 0:
            return 0.0
        p = self.model.p1 + self.model.p2 * math.log2(arg)
        return min(max(p, 0.0), 1.0)

    def outage(self, rate: float, beta: float, mode: Mode | None = None) -> float:
        b2 = self.b2_scale * math.expm1(rate * math.log(2.0)) / (1.0 - beta)
        if (mode or self.config.mode) is Mode.Approx:
            return -self.exp_a * math.expm1(-0.5 * b2)
        return 1.0 - marcum_q1(self.a, math.sqrt(b2))

    def carved(self, alpha: float, p: float) -> int:
        return int(math.floor(alpha * 2.0 * p * self.config.L + FLOOR_GUARD))

    def point(self, alpha: float, beta: float, p: float | None = None,
              mode: Mode | None = None):
        """(feasible, key_rate, p_oc, p_oj, p_o, carved) at one lattice point."""
        self.evaluations += 1
        mode = mode or self.config.mode
        if p is None:
            p = self.consensus(beta)
        rate = key_rate(alpha, p)
        p_oc = self.outage(rate, beta, mode)
        m = self.carved(alpha, p)
        p_oj = 2.0 ** -m
        p_o = p_oc + (1.0 - p_oc) * p_oj
        err = p_oc + p_oj if mode is Mode.Approx else p_o
        ok = err <= self.config.epsilon
        if self.config.kappa is not None and m > self.config.kappa:
            ok = False
        return ok, rate, p_oc, p_oj, p_o, m

    def error_ok(self, alpha: float, beta: float, p: float) -> bool:
        """Failure-probability constraint only (monotone in alpha)."""
        self.evaluations += 1
        rate = key_rate(alpha, p)
        p_oc = self.outage(rate, beta)
        p_oj = 2.0 ** -self.carved(alpha, p)
        if self.config.mode is Mode.Approx:
            return p_oc + p_oj <= self.config.epsilon
        return p_oc + (1.0 - p_oc) * p_oj <= self.config.epsilon

    def result(self, alpha, beta, solver, feasible=True, converged=True) -> OptResult:
        ok, rate, p_oc, p_oj, p_o, _ = self.point(alpha, beta)
        self.evaluations -= 1
        return OptResult(alpha=alpha, beta=beta, key_rate=rate, p_oc=p_oc,
                         p_oj=p_oj, p_o=p_o, feasible=feasible and ok,
                         solver=solver, converged=converged)


def _infeasible(solver: Solver) -> OptResult:
    return OptResult(alpha=math.nan, beta=math.nan, key_rate=0.0, p_oc=math.nan,
                     p_oj=math.nan, p_o=math.nan, feasible=False, solver=solver)


def _better(cand, best) -> bool:
    """Larger key-rate wins; ties go to smaller alpha, then smaller beta."""
    if best is None:
        return True
    if cand[0] != best[0]:
        return cand[0] > best[0]
    if cand[1] != best[1]:
        return cand[1] < best[1]
    return cand[2] < best[2]


def beta_init(model: ConsensusModel, channel: ChannelParams,
              epsilon: float | None = None,
              config: OptimizationConfig | None = None) -> float:
    """Largest beta whose alpha = 0 channel outage meets ``epsilon``.

    Outage at rate ``2 p(beta)`` grows with beta, so the tight point is
    bracketed and bisected to machine precision. The result is capped at
    ``1 - beta_step`` when the constraint never binds.

    Raises
    ------
    InfeasibleError
        If the outage exceeds ``epsilon`` as beta approaches its lower limit.
    """
    config = config or OptimizationConfig()
    if epsilon is not None:
        config = replace(config, epsilon=epsilon)
    prob = _Problem(model, channel, config)
    eps = config.epsilon

    def f(beta):
        return prob.outage(key_rate(0.0, prob.consensus(beta)), beta)

    lo = max(0.0, -model.p3) + 1e-9
    hi = 1.0 - config.beta_step
    if f(hi) <= eps:
        return hi
    if f(lo) > eps:
        raise InfeasibleError("channel outage exceeds epsilon for every beta")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if f(mid) <= eps:
            lo = mid
        else:
            hi = mid
    return lo


def _min_alpha_index(prob: _Problem, beta: float, p: float):
    """Smallest lattice index meeting the constraints at ``beta``, or None."""
    cfg = prob.config
    top = cfg.n_alpha - 1
    if p <= 0.0 or not prob.error_ok(cfg.alpha_at(top), beta, p):
        return None
    lo, hi = -1, top   # error_ok fails at lo (virtual), holds at hi
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if prob.error_ok(cfg.alpha_at(mid), beta, p):
            hi = mid
        else:
            lo = mid
    if cfg.kappa is not None and prob.carved(cfg.alpha_at(hi), p) > cfg.kappa:
        # carved bits only grow with alpha
        return None
    return hi


def min_alpha(beta: float, model: ConsensusModel, channel: ChannelParams,
              config: OptimizationConfig):
    """Smallest lattice alpha meeting the constraints at ``beta``.

    Failure probability is non-increasing in alpha, so bisection over the
    ``alpha_tol`` lattice is exact. Returns None when no alpha in [0, 1)
    works.
    """
    if not 0.0 < beta < 1.0:
        raise ValueError("beta must lie in (0, 1)")
    prob = _Problem(model, channel, config)
    i = _min_alpha_index(prob, beta, prob.consensus(beta))
    return None if i is None else config.alpha_at(i)


def _greedy_pass(prob: _Problem, j_start: int, step: int):
    """Walk the beta lattice from ``j_start`` until the key-rate stops improving.

    Points with no feasible alpha are skipped until the first feasible one.
    """
    cfg = prob.config
    best = None
    j = j_start
    while 1 <= j <= cfg.n_beta:
        beta = cfg.beta_at(j)
        p = prob.consensus(beta)
        i = _min_alpha_index(prob, beta, p)
        if i is None:
            if best is not None:
                break
        else:
            rate = key_rate(cfg.alpha_at(i), p)
            if best is not None and not rate > best[0]:
                break
            best = (rate, cfg.alpha_at(i), beta)
        j += step
    return best


def greedy_optimize(model: ConsensusModel, channel: ChannelParams,
                    config: OptimizationConfig, beta_start: float | None = None,
                    solver: Solver | None = None) -> OptResult:
    """Outage-driven greedy search.

    Starts from :func:`beta_init` (or ``beta_start``, for the uniform-init
    variant), snapped to the beta lattice, and runs an ascending and a
    descending pass; the better local maximum is returned. When no beta
    meets the outage bound at full payload, the search starts from the
    smallest lattice beta.
    """
    t0 = time.perf_counter()
    if solver is None:
        solver = Solver.Greedy if beta_start is None else Solver.GreedyUniformInit
    prob = _Problem(model, channel, config)
    if beta_start is None:
        try:
            beta_start = beta_init(model, channel, config=config)
        except InfeasibleError:
            # full payload outages everywhere; a smaller one may still fit
            beta_start = config.beta_at(1)
    j0 = min(max(int(round(beta_start / config.beta_step)), 1), config.n_beta)
    up = _greedy_pass(prob, j0, +1)
    down = _greedy_pass(prob, j0, -1)
    best = None
    for cand in (up, down):
        if cand is not None and _better(cand, best):
            best = cand
    if best is None:
        res = _infeasible(solver)
    else:
        res = prob.result(best[1], best[2], solver)
    return res.with_timing(time.perf_counter() - t0, prob.evaluations)


def grid_search(model: ConsensusModel, channel: ChannelParams,
                config: OptimizationConfig) -> OptResult:
    """Exhaustive search over the full (beta, alpha) lattice."""
    t0 = time.perf_counter()
    prob = _Problem(model, channel, config)
    best = None
    for j in range(1, config.n_beta + 1):
        beta = config.beta_at(j)
        p = prob.consensus(beta)
        for i in range(config.n_alpha):
            alpha = config.alpha_at(i)
            ok, rate, *_ = prob.point(alpha, beta, p)
            if ok and _better((rate, alpha, beta), best):
                best = (rate, alpha, beta)
    evals = prob.evaluations
    if best is None:
        res = _infeasible(Solver.Grid)
    else:
        res = prob.result(best[1], best[2], Solver.Grid)
    return res.with_timing(time.perf_counter() - t0, evals)


def nlp_baseline(model: ConsensusModel, channel: ChannelParams,
                 config: OptimizationConfig, starts=((0.1, 0.5), (0.3, 0.2), (0.05, 0.9)),
                 maxiter: int = 200) -> OptResult:
    """Sequential quadratic programming (SLSQP) on the smooth relaxation.

    The carved-bit floor is dropped while solving. The solution is then
    rounded up to a whole number of carved bits (and to the alpha lattice)
    before the constraints are re-checked with the floor restored.
    """
    t0 = time.perf_counter()
    prob = _Problem(model, channel, config)
    cfg = config
    L = cfg.L
    beta_lo = max(0.0, -model.p3) + 1e-6
    beta_hi = 1.0 - cfg.beta_step
    n_calls = 0

    def p_of(beta):
        return prob.consensus(float(beta))

    def objective(x):
        nonlocal n_calls
        n_calls += 1
        return -key_rate(x[0], p_of(x[1]))

    def err_margin(x):
        nonlocal n_calls
        n_calls += 1
        alpha, beta = float(x[0]), float(x[1])
        p = p_of(beta)
        p_oc = prob.outage(key_rate(alpha, p), beta)
        p_oj = 2.0 ** (-alpha * 2.0 * p * L)
        if cfg.mode is Mode.Approx:
            return cfg.epsilon - p_oc - p_oj
        return cfg.epsilon - (p_oc + (1 - p_oc) * p_oj)

    cons = [{"type": "ineq", "fun": err_margin}]
    if cfg.kappa is not None:
        cons.append({"type": "ineq",
                     "fun": lambda x: cfg.kappa - x[0] * 2.0 * p_of(x[1]) * L})

    best, converged = None, False
    for x0 in starts:
        x0 = np.array([x0[0], min(max(x0[1], beta_lo), beta_hi)])
        sol = sopt.minimize(objective, x0, method="SLSQP",
                            bounds=[(0.0, 1.0 - cfg.alpha_tol), (beta_lo, beta_hi)],
                            constraints=cons,
                            options={"maxiter": maxiter, "ftol": 1e-10})
        alpha, beta = float(sol.x[0]), float(sol.x[1])
        p = p_of(beta)
        # restore the floor: round carved bits up, then onto the alpha lattice
        if p > 0:
            m = math.ceil(alpha * 2.0 * p * L - FLOOR_GUARD)
            alpha = m / (2.0 * p * L)
        alpha = math.ceil(alpha / cfg.alpha_tol - FLOOR_GUARD) * cfg.alpha_tol
        alpha = min(alpha, 1.0 - cfg.alpha_tol)
        ok, rate, *_ = prob.point(alpha, beta, p)
        cand = (rate if ok else -1.0, alpha, beta)
        if _better(cand, best):
            best, converged = cand, bool(sol.success)
    evals = prob.evaluations + n_calls
    res = prob.result(best[1], best[2], Solver.NLP, feasible=best[0] >= 0,
                      converged=converged)
    if not res.feasible:
        log.info("SLSQP: no start produced a feasible floored point")
    return res.with_timing(time.perf_counter() - t0, evals)


def spectral_efficiency(result: OptResult, p_delta: float, L: int) -> float:
    """Key-rate per carved bit, ``key_rate / max(1, floor(2 alpha p L))``."""
    if not result.feasible:
        return 0.0
    m = int(math.floor(result.alpha * 2.0 * p_delta * L + FLOOR_GUARD))
    return result.key_rate / max(1, m)


def sweep_kappa(model: ConsensusModel, channel: ChannelParams,
                config: OptimizationConfig, kappa_range, solver: Solver = Solver.Greedy):
    """Solve the band-limited problem for each ``kappa``.

    Returns
    -------
    list of (kappa, OptResult, spectral_efficiency)
    """
    kappas = list(kappa_range)
    if not kappas:
        raise ValueError("empty kappa_range")
    run = {Solver.Greedy: greedy_optimize, Solver.Grid: grid_search,
           Solver.NLP: nlp_baseline}[Solver(solver)]
    out = []
    for kappa in kappas:
        cfg = replace(config, kappa=int(kappa))
        res = run(model, channel, cfg)
        p = _Problem(model, channel, cfg).consensus(res.beta) if res.feasible else 0.0
        out.append((int(kappa), res, spectral_efficiency(res, p, cfg.L)))
    return out


def verify_result(result: OptResult, model: ConsensusModel, channel: ChannelParams,
                  config: OptimizationConfig, link: Link = Link.AR) -> bool:
    """Re-check a reported feasible point with the public analytic functions."""
    if not result.feasible:
        return True
    p = consensus_from_model(model, result.beta)
    rate = key_rate(result.alpha, p)
    p_oc = outage_probability(rate, result.beta, channel, link, config.mode)
    p_oj = jamming_probability(result.alpha, p, config.L)
    budget = effective_error(float(p_oc), float(p_oj), config.mode)
    err = budget.bound if config.mode is Mode.Approx else budget.p_o
    ok = err <= config.epsilon and math.isclose(rate, result.key_rate, rel_tol=1e-9,
                                                abs_tol=1e-12)
    if config.kappa is not None:
        ok = ok and carved_bit_count(result.alpha, p, config.L) <= config.kappa
    return ok
