r"""Closed-form error model and the consensus-probability surrogate.

Channel outage of the relay-to-A broadcast at rate :math:`\mathcal{R}` is

.. math::

    P(O_C) = 1 - Q_1(a, b), \quad a = \sqrt{2c/(1-c)}, \quad
    b = \sqrt{2(2^{\mathcal{R}} - 1) / ((1-\beta)\rho(1-c))}

and the high-SNR form replaces :math:`Q_1` by
:math:`1 + e^{-a^2/2}(e^{-b^2/2} - 1)`. A jammer picking one of
:math:`2^m` bands uniformly hits the chosen one with probability
:math:`2^{-m}`, with :math:`m = \lfloor 2\alpha p L \rfloor` carved bits.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .channel import ChannelParams, Link

__all__ = [
    "ConsensusModel",
    "ErrorBudget",
    "FitError",
    "Mode",
    "OutageInputs",
    "carved_bit_count",
    "consensus_from_model",
    "effective_error",
    "fit_consensus_model",
    "jamming_probability",
    "key_rate",
    "marcum_q1",
    "marcum_q1_approx",
    "outage_inputs",
    "outage_probability",
]

POISSON_TAIL = 1e-12
# absorbs representation error in alpha * 2 * p * L before flooring
FLOOR_GUARD = 1e-9


class Mode(enum.Enum):
    Exact = "exact"
    Approx = "approx"


class FitError(RuntimeError):
    pass


def _check_args(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("Marcum-Q arguments must be finite")
    if np.any(a < 0) or np.any(b < 0):
        raise ValueError("Marcum-Q arguments must be non-negative")
    return a, b


def _poisson_cutoff(lam: float) -> int:
    """Smallest ``k`` with ``P(K > k) < POISSON_TAIL`` for ``K ~ Pois(lam)``."""
    if lam <= 0:
        return 0
    # Chernoff-safe upper bracket, then the exact tail via the regularized gamma
    k = np.arange(int(math.ceil(lam + 8.0 * math.sqrt(lam) + 30.0)) + 1)
    tail = special.gammainc(k + 1, lam)
    return int(np.argmax(tail < POISSON_TAIL))


def marcum_q1(a, b):
    """First-order Marcum Q-function :math:`Q_1(a, b)`.

    Evaluated as a Poisson mixture of central chi-squared tails,

    .. math:: Q_1(a,b) = \\sum_{k \\ge 0} \\mathrm{Pois}(k; a^2/2)\\,
              \\Gamma_u(k + 1, b^2/2),

    truncated once the remaining Poisson mass is below ``1e-12``.

    Parameters
    ----------
    a, b : float or array_like
        Non-negative, finite; broadcast against each other.

    Returns
    -------
    float or ndarray
    """
    a, b = _check_args(a, b)
    lam = 0.5 * a * a
    x = 0.5 * b * b
    lam_b, x_b = np.broadcast_arrays(lam, x)
    lam_max = float(lam_b.max()) if lam_b.size else 0.0
    k_max = _poisson_cutoff(lam_max)
    k = np.arange(k_max + 1).reshape((-1,) + (1,) * lam_b.ndim)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_w = np.where(lam_b > 0, k * np.log(lam_b) - lam_b - special.gammaln(k + 1),
                         np.where(k == 0, 0.0, -np.inf))
    terms = np.exp(log_w) * special.gammaincc(k + 1, x_b)
    q = np.clip(terms.sum(axis=0), 0.0, 1.0)
    q = np.where(x_b == 0, 1.0, q)
    return float(q) if q.ndim == 0 else q


def marcum_q1_approx(a, b):
    """High-SNR approximation ``1 + exp(-a^2/2) (exp(-b^2/2) - 1)``."""
    a, b = _check_args(a, b)
    q = 1.0 + np.exp(-0.5 * a * a) * np.expm1(-0.5 * b * b)
    return float(q) if q.ndim == 0 else q


@dataclass(frozen=True)
class OutageInputs:
    rate: float
    a: float
    b: float


def outage_inputs(rate, beta, channel: ChannelParams, link: Link = Link.AR):
    """Marcum-Q arguments for broadcasting at ``rate`` with power ``(1-beta)P``."""
    if np.any(np.asarray(beta) <= 0) or np.any(np.asarray(beta) >= 1):
        raise ValueError("beta must lie in (0, 1)")
    if np.any(np.asarray(rate) < 0):
        raise ValueError("rate must be non-negative")
    c = channel.los(link)
    a = math.sqrt(2.0 * c / (1.0 - c))
    b = np.sqrt(2.0 * np.expm1(np.asarray(rate, dtype=float) * math.log(2.0))
                / ((1.0 - np.asarray(beta, dtype=float)) * channel.rho * (1.0 - c)))
    if np.ndim(b) == 0:
        return OutageInputs(float(rate), a, float(b))
    return OutageInputs(rate, a, b)


def outage_probability(rate, beta, channel: ChannelParams, link: Link = Link.AR,
                       mode: Mode = Mode.Exact):
    """Probability that the broadcast rate exceeds the link's mutual information."""
    inp = outage_inputs(rate, beta, channel, link)
    if Mode(mode) is Mode.Exact:
        return 1.0 - marcum_q1(inp.a, inp.b)
    p = -math.exp(-0.5 * inp.a ** 2) * np.expm1(-0.5 * np.asarray(inp.b) ** 2)
    return float(p) if np.ndim(p) == 0 else p


def carved_bit_count(alpha, p_delta, L):
    """Average number of carved bits ``floor(alpha * 2 * p * L)``."""
    x = np.asarray(alpha, dtype=float) * 2.0 * np.asarray(p_delta, dtype=float) * L
    m = np.floor(x + FLOOR_GUARD).astype(int)
    return int(m) if m.ndim == 0 else m


def jamming_probability(alpha, p_delta, L):
    """Chance a uniform jammer hits a band chosen by ``floor(2 alpha p L)`` bits."""
    m = carved_bit_count(alpha, p_delta, L)
    p = np.exp2(-np.asarray(m, dtype=float))
    return float(p) if p.ndim == 0 else p


@dataclass(frozen=True)
class ErrorBudget:
    p_oc: float
    p_oj: float
    p_o: float
    bound: float
    mode: Mode = Mode.Approx


def effective_error(p_oc: float, p_oj: float, mode: Mode = Mode.Approx) -> ErrorBudget:
    """Combine channel outage and jamming into the key-delivery failure rate.

    ``p_o = p_oc + (1 - p_oc) p_oj``; ``bound`` is the additive ``p_oc + p_oj``.
    """
    for p in (p_oc, p_oj):
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"probability out of range: {p}")
    return ErrorBudget(p_oc=p_oc, p_oj=p_oj, p_o=p_oc + (1.0 - p_oc) * p_oj,
                       bound=p_oc + p_oj, mode=Mode(mode))


def key_rate(alpha, p_delta):
    """Secret bits per coherence block ``(1 - alpha) 2 p`` (the L/(L+1) factor dropped)."""
    return (1.0 - alpha) * 2.0 * p_delta


# ---------------------------------------------------------------------------
# consensus surrogate  p(beta) ~ p1 + p2 * log2(beta + p3)


@dataclass(frozen=True)
class ConsensusModel:
    p1: float
    p2: float
    p3: float
    fit_rmse: float = 0.0

    def __call__(self, beta):
        return consensus_from_model(self, beta)


def consensus_from_model(model: ConsensusModel, beta):
    """Evaluate the surrogate, clamped to [0, 1]."""
    arg = np.asarray(beta, dtype=float) + model.p3
    if np.any(arg <= 0):
        raise ValueError(f"beta + p3 must be positive (p3 = {model.p3})")
    p = np.clip(model.p1 + model.p2 * np.log2(arg), 0.0, 1.0)
    return float(p) if p.ndim == 0 else p


def _nonneg_linear_fit(u, y):
    """Least squares ``y ~ p1 + p2 u`` with ``p1, p2 >= 0``.

    The problem is a 2-D convex QP; its optimum is the unconstrained solution
    or lies on one of the two axes.
    """
    def sse(p1, p2):
        r = y - p1 - p2 * u
        return float(r @ r)

    A = np.column_stack([np.ones_like(u), u])
    (p1, p2), *_ = np.linalg.lstsq(A, y, rcond=None)
    if p1 >= 0 and p2 >= 0:
        return p1, p2, sse(p1, p2)
    candidates = [(max(float(y.mean()), 0.0), 0.0)]
    uu = float(u @ u)
    if uu > 0:
        candidates.append((0.0, max(float(u @ y) / uu, 0.0)))
    best = min(candidates, key=lambda c: sse(*c))
    return best[0], best[1], sse(*best)


def fit_consensus_model(points, n_scan: int = 400) -> ConsensusModel:
    """Regress ``(beta, p)`` pairs onto ``p1 + p2 log2(beta + p3)``.

    For fixed ``p3`` the model is linear in ``(p1, p2)``, so the fit profiles
    out the linear part and searches ``p3`` over ``(-min(beta) + 1e-6, 1]``: a
    scan on a grid refined towards the lower end, then golden-section search
    around the best cell.

    Raises
    ------
    FitError
        Fewer than four points, repeated betas, or betas outside (0, 1).
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 4 or pts.shape[1] != 2:
        raise FitError("need at least four (beta, p) pairs")
    beta, y = pts[:, 0], pts[:, 1]
    if np.unique(beta).size != beta.size:
        raise FitError("betas must be distinct")
    if np.any(beta <= 0) or np.any(beta >= 1):
        raise FitError("betas must lie in (0, 1)")

    lo = -beta.min() + 1e-6
    hi = 1.0

    def profile(p3):
        return _nonneg_linear_fit(np.log2(beta + p3), y)

    # log spacing concentrates points where the curvature changes fastest
    grid = lo + (hi - lo) * (np.geomspace(1e-9, 1.0, n_scan) - 1e-9) / (1 - 1e-9)
    sse = np.array([profile(p3)[2] for p3 in grid])
    i = int(np.argmin(sse))
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, n_scan - 1)]

    inv_phi = (math.sqrt(5) - 1) / 2
    c, d = b - inv_phi * (b - a), a + inv_phi * (b - a)
    fc, fd = profile(c)[2], profile(d)[2]
    for _ in range(200):
        if b - a < 1e-13:
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = profile(c)[2]
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = profile(d)[2]
    p3 = 0.5 * (a + b)
    if sse[i] < profile(p3)[2]:
        p3 = grid[i]
    p1, p2, s = profile(p3)
    if not np.isfinite(s):
        raise FitError("degenerate regression")
    return ConsensusModel(p1=float(p1), p2=float(p2), p3=float(p3),
                          fit_rmse=math.sqrt(s / beta.size))
