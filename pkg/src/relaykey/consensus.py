"""Two-threshold consensus quantizer and its Monte Carlo calibration.

Complex probe samples are unfolded into reals (real part of block ``l`` at
index ``2l``, imaginary part at ``2l + 1``). A sample above ``q_p`` reads as
bit 1, below ``q_m`` as bit 0, and anything in ``[q_m, q_p]`` is discarded.
An index contributes to the key only if neither node discards it.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .channel import ChannelParams, Link, probe_amplitude, simulate_probe_pair

__all__ = [
    "BitDecision",
    "CalibrationError",
    "ConsensusEstimate",
    "QuantizerThresholds",
    "blocks_for_stderr",
    "calibrate_thresholds",
    "estimate_consensus",
    "extract_key_pair",
    "quantize",
    "unfold",
    "unfolded_moments",
]

GUARD_SPAN_SD = 6.0
BISECT_REL_TOL = 1e-4


class BitDecision(enum.Enum):
    Bit0 = 0
    Bit1 = 1
    Discard = -1


class CalibrationError(RuntimeError):
    """No guard band in the searched range meets the mismatch target."""

    def __init__(self, message, best_delta):
        super().__init__(message)
        self.best_delta = best_delta


@dataclass(frozen=True)
class QuantizerThresholds:
    q_m: float
    q_p: float

    def __post_init__(self):
        if not self.q_p > self.q_m:
            raise ValueError(f"need q_p > q_m, got ({self.q_m}, {self.q_p})")

    @classmethod
    def symmetric(cls, center: float, half_width: float) -> "QuantizerThresholds":
        q_m, q_p = center - half_width, center + half_width
        if not q_p > q_m:
            # zero width: the tightest representable band around the centre
            q_m, q_p = np.nextafter(center, -np.inf), np.nextafter(center, np.inf)
        return cls(float(q_m), float(q_p))

    @property
    def center(self) -> float:
        return 0.5 * (self.q_m + self.q_p)

    @property
    def half_width(self) -> float:
        return 0.5 * (self.q_p - self.q_m)


@dataclass(frozen=True)
class ConsensusEstimate:
    """Monte Carlo estimate of consensus probability and mismatch rate.

    ``delta_hat`` is 0 when nothing is kept; check ``n_kept`` in that case.
    """

    p_hat: float
    delta_hat: float
    n_samples: int
    std_err: float
    n_kept: int = 0


def quantize(sample: float, thresholds: QuantizerThresholds) -> BitDecision:
    if sample > thresholds.q_p:
        return BitDecision.Bit1
    if sample < thresholds.q_m:
        return BitDecision.Bit0
    return BitDecision.Discard


def _quantize_array(x: np.ndarray, thresholds: QuantizerThresholds) -> np.ndarray:
    """Vectorised :func:`quantize`: 1, 0 or -1 (discard) as int8."""
    out = np.full(x.shape, -1, dtype=np.int8)
    out[x > thresholds.q_p] = 1
    out[x < thresholds.q_m] = 0
    return out


def unfold(y: np.ndarray) -> np.ndarray:
    """Interleave real and imaginary parts: ``[Re y0, Im y0, Re y1, ...]``."""
    y = np.asarray(y, dtype=complex)
    out = np.empty(2 * y.size)
    out[0::2] = y.real
    out[1::2] = y.imag
    return out


def extract_key_pair(samples_x, samples_r, thresholds: QuantizerThresholds):
    """Form the two nodes' keys from unfolded real samples.

    Returns
    -------
    key_x, key_r : ndarray of uint8
        Bits at the jointly kept indices, in index order.
    kept : ndarray of int
        The jointly kept indices.
    """
    x = np.asarray(samples_x, dtype=float)
    r = np.asarray(samples_r, dtype=float)
    if x.shape != r.shape:
        raise ValueError(f"sample lists differ in length: {x.size} vs {r.size}")
    bx = _quantize_array(x, thresholds)
    br = _quantize_array(r, thresholds)
    kept = np.flatnonzero((bx >= 0) & (br >= 0))
    return bx[kept].astype(np.uint8), br[kept].astype(np.uint8), kept


def unfolded_moments(params: ChannelParams, beta: float, link: Link):
    """Mean, variance and cross-covariance of one unfolded sample pair.

    Both nodes observe ``Re(h) s + Re(n)`` with a shared ``h`` and
    independent noise, so the pair is jointly Gaussian.
    """
    c = params.los(link)
    s2 = probe_amplitude(params, beta) ** 2
    mean = math.sqrt(c / 2.0) * math.sqrt(s2)
    cov = s2 * (1.0 - c) / 2.0
    var = cov + params.gamma / 2.0
    return mean, var, cov


def blocks_for_stderr(stderr_cap: float) -> int:
    """Blocks needed so the worst-case (p = 1/2) std. error is below the cap."""
    return int(math.ceil(0.25 / stderr_cap ** 2 / 2.0))


def _estimate(x, r, thresholds) -> ConsensusEstimate:
    bx = _quantize_array(x, thresholds)
    br = _quantize_array(r, thresholds)
    both = (bx >= 0) & (br >= 0)
    n = x.size
    kept = int(both.sum())
    miss = int(np.count_nonzero(both & (bx != br)))
    p = kept / n
    return ConsensusEstimate(p_hat=p, delta_hat=miss / kept if kept else 0.0,
                             n_samples=n, std_err=math.sqrt(p * (1 - p) / n),
                             n_kept=kept)


def _simulate_unfolded(params, beta, link, n_blocks, rng):
    y_node, y_relay = simulate_probe_pair(params, beta, link, n_blocks, rng)
    return unfold(y_node), unfold(y_relay)


def estimate_consensus(params: ChannelParams, beta: float, link: Link,
                       thresholds: QuantizerThresholds, n_blocks: int | None,
                       rng: np.random.Generator,
                       stderr_cap: float = 1e-3) -> ConsensusEstimate:
    """Estimate consensus probability and mismatch rate by simulation.

    ``n_blocks=None`` picks the smallest count meeting ``stderr_cap``.
    """
    if n_blocks is None:
        n_blocks = blocks_for_stderr(stderr_cap)
    x, r = _simulate_unfolded(params, beta, link, n_blocks, rng)
    return _estimate(x, r, thresholds)


class _GuardProfile:
    """Kept/mismatch counts as a function of guard half-width on fixed draws.

    Index ``i`` survives a half-width ``g`` iff ``g < min(|x_i - mu|, |r_i - mu|)``,
    so both counts are tail sums over the sorted per-index margins.
    """

    def __init__(self, x, r, mean):
        dx = x - mean
        dr = r - mean
        margin = np.minimum(np.abs(dx), np.abs(dr))
        order = np.argsort(margin, kind="stable")
        self.margin = margin[order]
        miss = (np.sign(dx) != np.sign(dr))[order]
        # tail_miss[k] = mismatches among sorted positions k..n-1
        self.tail_miss = np.concatenate([np.cumsum(miss[::-1])[::-1], [0]])
        self.n = x.size

    def counts(self, g):
        k = int(np.searchsorted(self.margin, g, side="right"))
        kept = self.n - k
        return kept, int(self.tail_miss[k])

    def delta(self, g):
        """Mismatch rate among kept indices; inf when nothing is kept."""
        kept, miss = self.counts(g)
        return miss / kept if kept else math.inf

    def best_delta(self, g_max):
        k_max = int(np.searchsorted(self.margin, g_max, side="right"))
        kept = self.n - np.arange(min(k_max + 1, self.n))
        return float(np.min(self.tail_miss[:kept.size] / kept)) if kept.size else math.inf


def calibrate_thresholds(params: ChannelParams, beta: float, link: Link,
                         delta_target: float, n_blocks: int | None,
                         rng: np.random.Generator, stderr_cap: float = 1e-3):
    """Find the narrowest symmetric guard band meeting a mismatch target.

    The band is centred on the common sample mean and its half-width is
    bisected over ``[0, 6 sd]`` (tolerance ``1e-4`` of the span) on one fixed
    set of draws; bands that discard every index do not count as meeting the
    target.

    Returns
    -------
    thresholds : QuantizerThresholds
    estimate : ConsensusEstimate
        Consensus and mismatch achieved on the calibration draws.

    Raises
    ------
    CalibrationError
        If even the widest band misses ``delta_target``.
    """
    if not 0.0 < delta_target < 1.0:
        raise ValueError("delta_target must lie in (0, 1)")
    if n_blocks is None:
        n_blocks = blocks_for_stderr(stderr_cap)
    mean, var, _ = unfolded_moments(params, beta, link)
    x, r = _simulate_unfolded(params, beta, link, n_blocks, rng)
    profile = _GuardProfile(x, r, mean)

    g_max = GUARD_SPAN_SD * math.sqrt(var)
    tol = BISECT_REL_TOL * g_max
    # widest band that still keeps at least one index
    g_top = min(g_max, float(np.nextafter(profile.margin[-1], -np.inf)))
    if profile.delta(0.0) <= delta_target:
        g = 0.0
    else:
        if g_top <= 0.0 or profile.delta(g_top) > delta_target:
            best = profile.best_delta(g_max)
            raise CalibrationError(
                f"best mismatch {best:.3g} > {delta_target:.3g} within the widest "
                f"guard band", best)
        lo, hi = 0.0, g_top
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if profile.delta(mid) <= delta_target:
                hi = mid
            else:
                lo = mid
        g = hi
    thresholds = QuantizerThresholds.symmetric(mean, g)
    return thresholds, _estimate(x, r, thresholds)
