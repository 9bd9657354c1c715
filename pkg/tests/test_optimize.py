import math
from dataclasses import replace

import numpy as np
import pytest

from relaykey import (
    ChannelParams,
    ConsensusModel,
    InfeasibleError,
    Mode,
    OptimizationConfig,
    Solver,
    beta_init,
    consensus_from_model,
    greedy_optimize,
    grid_search,
    min_alpha,
    nlp_baseline,
    outage_probability,
    sweep_kappa,
)
from relaykey.analytic import carved_bit_count
from relaykey.optimize import _Problem, spectral_efficiency, verify_result

CFG = OptimizationConfig()


def test_config_validation():
    for bad in [dict(epsilon=0.0), dict(epsilon=1.0), dict(beta_step=0.5),
                dict(alpha_tol=0.0), dict(kappa=0)]:
        with pytest.raises(ValueError):
            OptimizationConfig(**bad)
    assert CFG.n_beta == 99 and CFG.n_alpha == 1000


def test_beta_init_cap_when_never_binding(model_20_09):
    channel, model = model_20_09
    # approx outage never exceeds exp(-a^2/2) = exp(-9) < epsilon at c = 0.9
    assert beta_init(model, channel, config=CFG) == pytest.approx(1 - CFG.beta_step)
    a2 = 2 * 0.5 / 0.5
    ch = ChannelParams.from_snr_db(20.0, 0.5)
    assert beta_init(model, ch, epsilon=math.exp(-a2 / 2) + 1e-9) == pytest.approx(0.99)


def test_beta_init_root(model_20_05):
    channel, model = model_20_05
    b = beta_init(model, channel, config=CFG)
    poc = outage_probability(2 * consensus_from_model(model, b), b, channel, mode=Mode.Approx)
    assert poc == pytest.approx(CFG.epsilon, abs=1e-4)
    lo = outage_probability(2 * consensus_from_model(model, b - 0.05), b - 0.05, channel,
                            mode=Mode.Approx)
    hi = outage_probability(2 * consensus_from_model(model, b + 0.05), b + 0.05, channel,
                            mode=Mode.Approx)
    assert lo < CFG.epsilon < hi


def test_beta_init_infeasible():
    ch = ChannelParams.from_snr_db(-10.0, 0.5)
    with pytest.raises(InfeasibleError):
        beta_init(ConsensusModel(0.9, 0.01, 0.0), ch, config=CFG)


def test_min_alpha_vacuous_epsilon(model_20_05):
    channel, model = model_20_05
    cfg = replace(CFG, epsilon=1 - 1e-9)
    a = min_alpha(0.5, model, channel, cfg)
    p = consensus_from_model(model, 0.5)
    # alpha = 0 leaves a singleton dictionary (certain jamming); one carved bit suffices
    assert carved_bit_count(a, p, cfg.L) == 1
    assert carved_bit_count(a - cfg.alpha_tol, p, cfg.L) == 0


def test_min_alpha_minimality(model_20_09):
    channel, model = model_20_09
    beta = round(beta_init(model, channel, config=CFG) - 0.05, 10)
    a = min_alpha(beta, model, channel, CFG)
    prob = _Problem(model, channel, CFG)
    p = consensus_from_model(model, beta)
    assert prob.point(a, beta, p)[0]
    assert not prob.point(a - CFG.alpha_tol, beta, p)[0]


def test_min_alpha_both_branches():
    ch = ChannelParams.from_snr_db(20.0, 0.5)
    model = ConsensusModel(0.5, 0.2, 0.0)
    # above beta_init outage at alpha = 0 exceeds epsilon, yet a smaller payload fits
    b0 = beta_init(model, ch, config=CFG)
    prob = _Problem(model, ch, CFG)
    b = b0 + 0.1
    assert prob.outage(2 * prob.consensus(b), b) > CFG.epsilon
    assert min_alpha(b, model, ch, CFG) is not None
    # close to beta = 1 no payload survives the vanishing broadcast power
    ch_low = ChannelParams.from_snr_db(0.0, 0.5)
    assert min_alpha(0.99, model, ch_low, CFG) is None


def test_min_alpha_domain(model_20_05):
    channel, model = model_20_05
    with pytest.raises(ValueError):
        min_alpha(1.0, model, channel, CFG)


def test_greedy_immediate_local_maximum():
    ch = ChannelParams.from_snr_db(25.0, 0.5)
    model = ConsensusModel(0.6, 0.3, 0.0)
    b0 = round(beta_init(model, ch, config=CFG) / CFG.beta_step) * CFG.beta_step
    res = greedy_optimize(model, ch, CFG)
    assert res.beta == pytest.approx(b0)
    assert res.alpha == min_alpha(b0, model, ch, CFG)


def test_grid_single_feasible_cell():
    ch = ChannelParams.from_snr_db(30.0, 0.5)
    cfg = OptimizationConfig(beta_step=0.49, alpha_tol=0.5)
    res = grid_search(ConsensusModel(0.5, 0.0, 0.0), ch, cfg)
    assert res.feasible and (res.alpha, res.beta) == (0.5, 0.49)
    assert res.evaluations == 2


def test_grid_evaluation_count(model_20_05):
    channel, model = model_20_05
    assert grid_search(model, channel, CFG).evaluations == 99 * 1000


def test_grid_dominates_greedy(model_20_05, model_20_09):
    for channel, model in (model_20_05, model_20_09):
        g = grid_search(model, channel, CFG)
        h = greedy_optimize(model, channel, CFG)
        assert g.key_rate >= h.key_rate >= 0
        assert h.key_rate >= 0.95 * g.key_rate


def test_grid_tie_break():
    ch = ChannelParams.from_snr_db(40.0, 0.5)
    res = grid_search(ConsensusModel(0.4, 0.0, 0.0), ch, CFG)
    # flat consensus: every feasible beta ties, the smallest wins
    assert res.beta == pytest.approx(min(
        j * 0.01 for j in range(1, 100)
        if min_alpha(j * 0.01, ConsensusModel(0.4, 0.0, 0.0), ch, CFG) == res.alpha))


def test_greedy_when_full_payload_always_outages():
    ch = ChannelParams.from_snr_db(-10.0, 0.5)
    model = ConsensusModel(0.9, 0.01, 0.0)
    g, h = grid_search(model, ch, CFG), greedy_optimize(model, ch, CFG)
    assert g.feasible and h.feasible
    assert g.key_rate >= h.key_rate >= 0.95 * g.key_rate


def test_infeasible_instance():
    ch = ChannelParams.from_snr_db(-40.0, 0.5)
    model = ConsensusModel(0.9, 0.01, 0.0)
    for res in (greedy_optimize(model, ch, CFG), grid_search(model, ch, CFG)):
        assert not res.feasible and res.key_rate == 0.0


def test_uniform_init_is_caller_seeded(model_20_05):
    channel, model = model_20_05
    a = greedy_optimize(model, channel, CFG, beta_start=0.2)
    b = greedy_optimize(model, channel, CFG, beta_start=0.2)
    assert a.solver is Solver.GreedyUniformInit
    assert (a.alpha, a.beta, a.key_rate) == (b.alpha, b.beta, b.key_rate)


def test_nlp_near_grid(model_20_05, model_20_09):
    for channel, model in (model_20_05, model_20_09):
        g = grid_search(model, channel, CFG)
        n = nlp_baseline(model, channel, CFG)
        assert n.feasible
        assert n.key_rate >= 0.98 * g.key_rate


def test_nlp_nearly_unconstrained(model_20_05):
    channel, model = model_20_05
    cfg = replace(CFG, epsilon=1 - 1e-9)
    res = nlp_baseline(model, channel, cfg)
    p = consensus_from_model(model, res.beta)
    assert res.feasible
    assert res.beta >= 0.95
    # the smallest alpha on the lattice that carves one bit
    assert res.alpha <= 1 / (2 * p * cfg.L) + cfg.alpha_tol


def test_reported_points_reverify(model_20_05, model_20_09):
    for channel, model in (model_20_05, model_20_09):
        for mode in Mode:
            cfg = replace(CFG, mode=mode, kappa=10)
            for res in (grid_search(model, channel, cfg), greedy_optimize(model, channel, cfg),
                        greedy_optimize(model, channel, cfg, beta_start=0.3),
                        nlp_baseline(model, channel, cfg)):
                assert verify_result(res, model, channel, cfg)
                if res.feasible:
                    assert res.p_o <= cfg.epsilon
                    assert res.p_oj >= 2.0 ** -cfg.kappa
                    assert res.key_rate == pytest.approx(
                        (1 - res.alpha) * 2 * consensus_from_model(model, res.beta))


def test_feasible_set_nesting(model_20_05):
    channel, model = model_20_05
    rates = [grid_search(model, channel, replace(CFG, epsilon=e)).key_rate
             for e in (1e-3, 1e-2, 5e-2)]
    assert rates == sorted(rates)


def test_sweep_saturates_and_nests(model_20_05):
    channel, model = model_20_05
    sw = sweep_kappa(model, channel, CFG, range(1, 17), solver=Solver.Grid)
    kr = [r.key_rate for _, r, _ in sw]
    assert kr == sorted(kr)
    p3 = grid_search(model, channel, CFG)
    assert kr[-1] == pytest.approx(p3.key_rate)
    se = np.array([s for *_, s in sw])
    inner = se[1:-1]
    assert np.any((inner >= max(se[0], se[-1])) & (inner > min(se[0], se[-1])))


def test_sweep_greedy_matches_grid_at_anchor(model_20_05):
    channel, model = model_20_05
    g = sweep_kappa(model, channel, CFG, [7, 9, 12], solver=Solver.Grid)
    h = sweep_kappa(model, channel, CFG, [7, 9, 12])
    for (_, rg, _), (_, rh, _) in zip(g, h):
        assert rh.key_rate == pytest.approx(rg.key_rate)


def test_sweep_empty():
    with pytest.raises(ValueError):
        sweep_kappa(ConsensusModel(0.5, 0.1, 0.0), ChannelParams.from_snr_db(20, 0.5), CFG, [])


def test_spectral_efficiency(model_20_05):
    channel, model = model_20_05
    res = greedy_optimize(model, channel, replace(CFG, kappa=9))
    p = consensus_from_model(model, res.beta)
    m = carved_bit_count(res.alpha, p, CFG.L)
    assert spectral_efficiency(res, p, CFG.L) == pytest.approx(res.key_rate / max(1, m))
    assert spectral_efficiency(grid_search(model, channel, replace(CFG, kappa=1)), p, 200) == 0


def test_exact_mode_is_stricter_than_approx(model_20_09):
    channel, model = model_20_09
    ex = grid_search(model, channel, replace(CFG, mode=Mode.Exact))
    assert ex.feasible
    assert ex.p_o <= CFG.epsilon
