"""Relay-assisted physical-layer key generation with band hopping against a jammer."""

from .analytic import (
    ConsensusModel,
    ErrorBudget,
    FitError,
    Mode,
    carved_bit_count,
    consensus_from_model,
    effective_error,
    fit_consensus_model,
    jamming_probability,
    key_rate,
    marcum_q1,
    marcum_q1_approx,
    outage_probability,
)
from .channel import ChannelParams, Link, probe_amplitude, sample_channel, simulate_probe_pair
from .consensus import (
    BitDecision,
    CalibrationError,
    ConsensusEstimate,
    QuantizerThresholds,
    calibrate_thresholds,
    estimate_consensus,
    extract_key_pair,
    quantize,
    unfold,
)
from .optimize import (
    InfeasibleError,
    OptimizationConfig,
    OptResult,
    Solver,
    beta_init,
    greedy_optimize,
    grid_search,
    min_alpha,
    nlp_baseline,
    sweep_kappa,
)
from .protocol import (
    CampaignStats,
    EpisodeConfig,
    EpisodeOutcome,
    FailureCause,
    run_campaign,
    run_episode,
    select_band,
    xor_package,
)

__version__ = "0.1.0"
