"""Reciprocal Rician channels and probing-phase samples.

Each legitimate node (A or B) shares a quasi-static channel with the relay R.
The complex gain is a fixed line-of-sight term plus a Rayleigh-faded part::

    h = sqrt(c) * (1 + 1j) / sqrt(2) + sqrt(1 - c) * g,    g ~ CN(0, 1)

so that ``E|h|^2 = 1`` and ``|h|^2`` is a scaled noncentral chi-squared
variable with noncentrality ``2c / (1 - c)``, matching the Marcum-Q outage
expression in :mod:`relaykey.analytic`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ChannelParams",
    "Link",
    "ProbeSample",
    "sample_channel",
    "simulate_probe_pair",
    "probe_amplitude",
]


class Link(enum.Enum):
    AR = "AR"
    BR = "BR"


@dataclass(frozen=True)
class ChannelParams:
    """Statistical environment of the two node-relay links.

    Parameters
    ----------
    c_ar, c_br : float
        LOS power fraction of the A-R and B-R links, strictly in (0, 1).
    p_total : float
        Total power budget ``P`` shared by probing and broadcast.
    gamma : float
        Noise power per complex sample; 0 gives the noiseless limit.
    """

    c_ar: float
    c_br: float
    p_total: float
    gamma: float = 1.0

    def __post_init__(self):
        for name in ("c_ar", "c_br"):
            c = getattr(self, name)
            if not 0.0 < c < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {c}")
        if self.p_total <= 0:
            raise ValueError("p_total must be positive")
        # gamma == 0 is the noiseless limit (rho = inf)
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")

    @property
    def rho(self) -> float:
        """Linear SNR ``P / gamma``."""
        return math.inf if self.gamma == 0 else self.p_total / self.gamma

    @property
    def snr_db(self) -> float:
        return 10.0 * math.log10(self.rho)

    @classmethod
    def from_snr_db(cls, snr_db: float, c_ar: float, c_br: float | None = None,
                    gamma: float = 1.0) -> "ChannelParams":
        """Build parameters from an SNR in dB; ``c_br`` defaults to ``c_ar``."""
        rho = 10.0 ** (snr_db / 10.0)
        return cls(c_ar=c_ar, c_br=c_ar if c_br is None else c_br,
                   p_total=rho * gamma, gamma=gamma)

    def los(self, link: Link) -> float:
        return self.c_ar if Link(link) is Link.AR else self.c_br


@dataclass(frozen=True)
class ProbeSample:
    value: complex
    block_index: int


def _complex_normal(rng: np.random.Generator, size, variance: float = 1.0):
    """Circularly-symmetric complex Gaussian with total variance ``variance``."""
    scale = math.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(size) + 1j * rng.standard_normal(size))


def _gain(c: float, g):
    return math.sqrt(c) * (1 + 1j) / math.sqrt(2.0) + math.sqrt(1.0 - c) * g


def sample_channel(params: ChannelParams, link: Link, rng: np.random.Generator,
                   size=None):
    """Draw Rician channel gain(s) for ``link``.

    Returns a Python ``complex`` when ``size`` is None, else an ndarray.
    """
    c = params.los(link)
    g = _complex_normal(rng, size)
    h = _gain(c, g)
    return complex(h) if size is None else h


def probe_amplitude(params: ChannelParams, beta: float) -> float:
    """Per-node probing amplitude ``sqrt(beta * P / 3)``."""
    return math.sqrt(beta * params.p_total / 3.0)


def simulate_probe_pair(params: ChannelParams, beta: float, link: Link,
                        n_blocks: int, rng: np.random.Generator,
                        as_samples: bool = False):
    """Simulate reciprocal probing over ``n_blocks`` coherence blocks.

    One channel gain per block is shared by both directions; each direction
    adds its own ``CN(0, gamma)`` noise.

    Returns
    -------
    (y_node, y_relay) : tuple of complex ndarrays, shape (n_blocks,)
        Samples received at the node (from the relay's probe) and at the relay
        (from the node's probe). With ``as_samples=True`` each is a list of
        :class:`ProbeSample` with 1-based block indices.
    """
    if not 0.0 < beta < 1.0:
        raise ValueError(f"beta must lie in (0, 1), got {beta}")
    if n_blocks < 1:
        raise ValueError("n_blocks must be >= 1")
    h = sample_channel(params, link, rng, size=n_blocks)
    s = probe_amplitude(params, beta)
    # draw order fixed: both noise streams after the channel draw
    n_node = _complex_normal(rng, n_blocks, params.gamma)
    n_relay = _complex_normal(rng, n_blocks, params.gamma)
    y_node = h * s + n_node
    y_relay = h * s + n_relay
    if as_samples:
        return ([ProbeSample(complex(v), i + 1) for i, v in enumerate(y_node)],
                [ProbeSample(complex(v), i + 1) for i, v in enumerate(y_relay)])
    return y_node, y_relay
