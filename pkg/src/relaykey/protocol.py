"""End-to-end Monte Carlo of relay-assisted key generation with band hopping.

One episode: both nodes probe the relay over ``L`` blocks, each pair extracts
a key, A and R carve a prefix of their key to pick a broadcast band, R sends
the XOR of the two keys on that band in block ``L + 1``, and A strips its own
key off to recover B's.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .analytic import FLOOR_GUARD
from .channel import ChannelParams, Link, sample_channel, simulate_probe_pair
from .consensus import QuantizerThresholds, extract_key_pair, unfold

__all__ = [
    "CampaignStats",
    "EpisodeConfig",
    "EpisodeOutcome",
    "FailureCause",
    "XorCase",
    "run_campaign",
    "run_episode",
    "select_band",
    "xor_package",
]


class FailureCause(enum.Enum):
    None_ = "none"
    ChannelOutage = "outage"
    Jammed = "jammed"
    EmptyKey = "empty_key"


class XorCase(enum.Enum):
    Equal = 1        # floor((1-a) N_AR) == N_BR
    TruncateBR = 2   # floor((1-a) N_AR) <  N_BR
    TruncateAR = 3   # floor((1-a) N_AR) >  N_BR


class EmptyKeyError(ValueError):
    pass


@dataclass(frozen=True)
class EpisodeConfig:
    """Settings for one protocol run.

    ``dictionary_bits=None`` carves the realised ``floor(alpha * N_AR)`` bits;
    an integer fixes the dictionary at ``2**dictionary_bits`` bands (the
    average-length model used by the analytic error budget).
    """

    channel: ChannelParams
    L: int
    alpha: float
    beta: float
    thresholds_ar: QuantizerThresholds
    thresholds_br: QuantizerThresholds
    dictionary_bits: int | None = None
    seed: int = 0
    jammer: bool = True

    def __post_init__(self):
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError("alpha must lie in [0, 1)")
        if self.dictionary_bits is not None and self.dictionary_bits < 0:
            raise ValueError("dictionary_bits must be >= 0")
        if self.L < 1:
            raise ValueError("L must be >= 1")


@dataclass(frozen=True)
class EpisodeOutcome:
    n_ar: int
    n_br: int
    n_xor: int
    delivered: bool
    failure_cause: FailureCause
    carved_bits: int
    chosen_band: int
    jammed_band: int
    bands_agree: bool = True
    key_match: bool = False


@dataclass(frozen=True)
class CampaignStats:
    episodes: int
    empirical_error: float
    empirical_key_rate: float
    ci_halfwidth: float
    causes: dict
    mean_key_length: float = 0.0


def _floor(x: float) -> int:
    return int(math.floor(x + FLOOR_GUARD))


def xor_package(k_ar, k_br, alpha: float):
    """XOR payload built by the relay from the two pairwise keys.

    ``k_bar`` denotes a prefix: the payload is the first ``floor((1-alpha) N_AR)``
    bits of ``k_ar`` against ``k_br`` (truncated to match), or all of ``k_br``
    against the first ``N_BR`` bits of ``k_ar`` when ``k_br`` is the shorter.
    """
    k_ar = np.asarray(k_ar, dtype=np.uint8)
    k_br = np.asarray(k_br, dtype=np.uint8)
    if k_ar.size == 0 or k_br.size == 0:
        raise EmptyKeyError("cannot package an empty key")
    n_bar = _floor((1.0 - alpha) * k_ar.size)
    n_br = k_br.size
    if n_bar == n_br:
        case, n = XorCase.Equal, n_br
    elif n_bar < n_br:
        case, n = XorCase.TruncateBR, n_bar
    else:
        case, n = XorCase.TruncateAR, n_br
    return k_ar[:n] ^ k_br[:n], case


def select_band(carved_bits) -> int:
    """Band index from carved bits read as an unsigned integer, MSB first."""
    idx = 0
    for bit in np.asarray(carved_bits, dtype=np.uint8).tolist():
        idx = (idx << 1) | bit
    return idx


def _pair_keys(cfg: EpisodeConfig, link: Link, thresholds, rng):
    y_node, y_relay = simulate_probe_pair(cfg.channel, cfg.beta, link, cfg.L, rng)
    k_node, k_relay, _ = extract_key_pair(unfold(y_node), unfold(y_relay), thresholds)
    return k_node, k_relay


def run_episode(config: EpisodeConfig, rng: np.random.Generator) -> EpisodeOutcome:
    """Simulate one key-generation and distribution round."""
    cfg = config
    ka_node, ka_relay = _pair_keys(cfg, Link.AR, cfg.thresholds_ar, rng)
    kb_node, kb_relay = _pair_keys(cfg, Link.BR, cfg.thresholds_br, rng)
    n_ar, n_br = ka_relay.size, kb_relay.size

    def failed(cause, n_xor=0, m=0, chosen=0, jammed=0, agree=True):
        return EpisodeOutcome(n_ar, n_br, n_xor, False, cause, m, chosen, jammed, agree)

    if n_ar == 0 or n_br == 0:
        return failed(FailureCause.EmptyKey)

    m = _floor(cfg.alpha * n_ar) if cfg.dictionary_bits is None else cfg.dictionary_bits
    chosen = select_band(ka_relay[:m])
    band_a = select_band(ka_node[:m])
    jammed = select_band(rng.integers(0, 2, size=m)) if cfg.jammer else -1

    # carved prefix rotated to the tail so the payload mask starts after it
    src_relay = np.roll(ka_relay, -m)
    src_node = np.roll(ka_node, -m)
    k_xor, _ = xor_package(src_relay, kb_relay, cfg.alpha)
    n_xor = k_xor.size
    if n_xor == 0:
        return failed(FailureCause.EmptyKey, 0, m, chosen, jammed, band_a == chosen)
    if jammed == chosen:
        return failed(FailureCause.Jammed, n_xor, m, chosen, jammed, band_a == chosen)

    h = sample_channel(cfg.channel, Link.AR, rng)
    capacity = math.log2(1.0 + abs(h) ** 2 * (1.0 - cfg.beta) * cfg.channel.rho)
    if capacity < n_xor / cfg.L:
        return failed(FailureCause.ChannelOutage, n_xor, m, chosen, jammed,
                      band_a == chosen)

    recovered = k_xor ^ src_node[:n_xor]
    match = bool(np.array_equal(recovered, kb_node[:n_xor]))
    return EpisodeOutcome(n_ar, n_br, n_xor, True, FailureCause.None_, m, chosen,
                          jammed, band_a == chosen, match)


def run_campaign(config: EpisodeConfig, n_episodes: int,
                 rng: np.random.Generator | None = None) -> CampaignStats:
    """Run ``n_episodes`` independent episodes and aggregate failure and key-rate.

    The key-rate counts delivered payload bits per coherence block, including
    the broadcast block: ``sum(n_xor) / (n_episodes * (L + 1))``.
    """
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    if rng is None:
        rng = np.random.default_rng(config.seed)
    causes = {c: 0 for c in FailureCause}
    bits = 0
    key_len = 0
    for _ in range(n_episodes):
        out = run_episode(config, rng)
        causes[out.failure_cause] += 1
        key_len += out.n_ar
        if out.delivered:
            bits += out.n_xor
    fail = 1.0 - causes[FailureCause.None_] / n_episodes
    half = 1.959963984540054 * math.sqrt(fail * (1.0 - fail) / n_episodes)
    return CampaignStats(episodes=n_episodes, empirical_error=fail,
                         empirical_key_rate=bits / (n_episodes * (config.L + 1)),
                         ci_halfwidth=half,
                         causes={c.value: k for c, k in causes.items()},
                         mean_key_length=key_len / n_episodes)
