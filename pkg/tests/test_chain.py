import math

import numpy as np
import pytest

from fdsic.blocks import AmpSpec
from fdsic.budget import NODES, NodePowerTable, StageAllocation, power_sum_dbm
from fdsic.chain import (
    ChainConfig,
    analytic_node_powers,
    compare_with_budget,
    frame_seeds,
    run_full_link,
    run_im3_correction_experiment,
)
from fdsic.waveform import OfdmConfig

from conftest import SIM_ALLOCATION

LNA = AmpSpec(20.0, "polynomial", iip3_dbm=-7.0)
SWEEP = [-62.0 + 2.0 * i for i in range(11)]


@pytest.fixture(scope="module")
def ofdm4():
    return OfdmConfig(n_symbols=4)


@pytest.fixture(scope="module")
def link(params_module, short_cfg):
    cfg = ChainConfig(params_module, SIM_ALLOCATION, short_cfg, n_frames=2, base_seed=5)
    return cfg, run_full_link(cfg)


@pytest.fixture(scope="module")
def params_module():
    from fdsic.budget import SystemParams
    return SystemParams()


@pytest.fixture(scope="module")
def short_cfg():
    return OfdmConfig(n_symbols=2)


# IM3 correction experiment

def test_ofdm_correction_offset_and_slope(ofdm4):
    c = run_im3_correction_experiment(ofdm4, LNA, SWEEP, seed=0)
    assert c.offset_db == pytest.approx(8.0, abs=2.0)
    assert c.slope_db_per_db == pytest.approx(3.0, abs=0.2)
    assert all(c.fit_mask) and not c.saturated


def test_predictions_follow_two_tone_law(ofdm4):
    c = run_im3_correction_experiment(ofdm4, LNA, [-60.0, -50.0], seed=1)
    assert c.im3_predicted_dbm == (3 * -60.0 + 14.0, 3 * -50.0 + 14.0)


def test_in_band_offset_matches_gaussian_moment(ofdm4):
    # in-band share of the cubic residual for a Gaussian-like input is 16/3
    c = run_im3_correction_experiment(ofdm4, LNA, [-55.0], seed=2)
    assert c.offset_db == pytest.approx(10 * math.log10(16 / 3), abs=0.3)


def test_two_tone_source_has_no_correction(ofdm4):
    c = run_im3_correction_experiment(ofdm4, LNA, [-60.0, -55.0, -50.0], source="two_tone")
    assert c.offset_db == pytest.approx(0.0, abs=0.5)
    assert c.slope_db_per_db == pytest.approx(3.0, abs=0.05)


def test_single_point_sweep(ofdm4):
    c = run_im3_correction_experiment(ofdm4, LNA, [-50.0])
    assert len(c.points) == 1
    assert math.isnan(c.slope_db_per_db)
    assert math.isfinite(c.offset_db)


def test_saturation_flagged(ofdm4):
    c = run_im3_correction_experiment(ofdm4, LNA, [-50.0, -12.0, -8.0])
    assert -8.0 in c.saturated
    assert c.fit_mask[0] and not c.fit_mask[-1]


def test_correction_experiment_errors(ofdm4):
    with pytest.raises(ValueError):
        run_im3_correction_experiment(ofdm4, LNA, [])
    with pytest.raises(ValueError):
        run_im3_correction_experiment(ofdm4, AmpSpec(20.0, "linear"), [-50.0])
    with pytest.raises(ValueError):
        run_im3_correction_experiment(ofdm4, LNA, [-50.0], source="chirp")


# full link

def test_node_levels_at_antenna(link, params_module):
    _, rep = link
    t = rep.node_powers
    assert t.get("antenna", "desired") == pytest.approx(-46.0, abs=0.2)
    si_total = power_sum_dbm([t.get("antenna", "si_linear"), t.get("antenna", "pa_im3")])
    assert si_total == pytest.approx(params_module.p_pa_out_ue_dbm - 40.0, abs=0.2)
    assert t.get("antenna", "noise") == pytest.approx(-79.98, abs=0.2)


def test_tx_evm_near_three_percent(link):
    _, rep = link
    assert rep.evm_tx_percent == pytest.approx(3.0, abs=1.0)


def test_link_adds_impairment(link):
    _, rep = link
    assert rep.evm_link_percent >= rep.evm_tx_percent


def test_report_contents(link):
    cfg, rep = link
    assert rep.node_powers.nodes == NODES
    assert len(rep.frame_evm_link_percent) == cfg.n_frames
    ref, rx = rep.link_constellation
    assert ref.shape == rx.shape == (cfg.ofdm.n_symbols, cfg.ofdm.n_active_subcarriers)
    assert not rep.closure["closes"]
    assert "toggled" in rep.attribution_rule


def test_full_chain_linear_components_close(link):
    cfg, rep = link
    cmp_ = compare_with_budget(rep.node_powers, analytic_node_powers(cfg, rep), 1.5,
                               components=("desired", "si_linear", "noise"))
    assert cmp_.passed, cmp_.failures()


@pytest.mark.xfail(strict=True, reason=(
    "the cancellers remove the SI-correlated share of the receiver IM3 (gain "
    "compression), so after SIC2 the measured level sits ~10 dB under the analytic track"))
def test_full_chain_im3_rows_within_3db(link):
    cfg, rep = link
    cmp_ = compare_with_budget(rep.node_powers, analytic_node_powers(cfg, rep), 3.0,
                               components=("rx_im3", "pa_im3"))
    assert cmp_.passed


def test_linear_chain_budget_closure(params_module, short_cfg):
    cfg = ChainConfig(params_module, SIM_ALLOCATION, short_cfg, n_frames=2, nonlinear=False)
    rep = run_full_link(cfg)
    cmp_ = compare_with_budget(rep.node_powers, analytic_node_powers(cfg, rep), 0.5)
    assert cmp_.passed, cmp_.failures()


def test_noise_only_link_follows_awgn_identity(params_module, short_cfg):
    # NF raised by 6 dB puts the in-band SNR at 28 dB
    p = params_module.updated(nf_ue_db=14.0)
    cfg = ChainConfig(p, SIM_ALLOCATION, short_cfg, n_frames=2, nonlinear=False, ue_tx_enabled=False)
    rep = run_full_link(cfg)
    assert rep.evm_link_percent == pytest.approx(100 * 10 ** (-28 / 20), abs=0.3)
    assert rep.evm_tx_percent == pytest.approx(0.0, abs=1e-9)


def test_deterministic_reports(params_module, short_cfg):
    cfg = ChainConfig(params_module, SIM_ALLOCATION, short_cfg, n_frames=1, base_seed=9)
    a, b = run_full_link(cfg), run_full_link(cfg)
    assert a.node_powers == b.node_powers
    assert a.evm_link_percent == b.evm_link_percent
    assert np.array_equal(a.link_constellation[1].grid, b.link_constellation[1].grid)


def test_frame_seeds_independent():
    assert frame_seeds(0, 0) == frame_seeds(0, 0)
    assert len({frame_seeds(0, f) for f in range(20)}) == 20
    assert frame_seeds(0, 1) != frame_seeds(1, 0)


def _evm(cfg):
    return run_full_link(cfg).evm_link_percent


@pytest.mark.parametrize("stage", ["sic1_db", "sic2_db", "sic3_db", "sic4_db"])
def test_evm_non_increasing_in_sic_depth(params_module, short_cfg, stage):
    base = ChainConfig(params_module, SIM_ALLOCATION, short_cfg, n_frames=1, base_seed=3)
    deeper = dict(vars(SIM_ALLOCATION))
    deeper[stage] += 10.0
    assert _evm(base.updated(allocation=StageAllocation(**deeper))) <= _evm(base) + 1e-9


def test_evm_non_decreasing_in_nf(params_module, short_cfg):
    base = ChainConfig(params_module, SIM_ALLOCATION, short_cfg, n_frames=1, base_seed=4)
    worse = base.updated(params=params_module.updated(nf_ue_db=12.0))
    assert _evm(worse) >= _evm(base)


def test_chain_config_validation(params_module, short_cfg):
    with pytest.raises(ValueError):
        ChainConfig(params_module, None, short_cfg)
    with pytest.raises(ValueError):
        ChainConfig(params_module, SIM_ALLOCATION, short_cfg, n_frames=0)
    with pytest.raises(ValueError):
        ChainConfig(params_module, SIM_ALLOCATION, OfdmConfig(n_symbols=0))
    cfg = ChainConfig(params_module, {"sic1_db": 1, "sic2_db": 2, "sic3_db": 3, "sic4_db": 4}, short_cfg)
    assert cfg.allocation.total_db == 10


def test_compare_with_budget_self_and_schema(params_module):
    cfg = ChainConfig(params_module, SIM_ALLOCATION, OfdmConfig(n_symbols=1))
    t = analytic_node_powers(cfg)
    cmp_ = compare_with_budget(t, t, 0.0)
    assert cmp_.passed and cmp_.max_deviation() == 0.0
    other = NodePowerTable(nodes=NODES[:2], rows=t.rows[:2])
    with pytest.raises(ValueError):
        compare_with_budget(t, other, 1.0)


def test_compare_with_budget_sentinels():
    nodes = ("a",)
    comps = ("x",)
    inf = float("-inf")
    same = compare_with_budget(NodePowerTable(nodes, ((inf,),), comps), NodePowerTable(nodes, ((inf,),), comps), 0.1)
    assert same.passed
    diff = compare_with_budget(NodePowerTable(nodes, ((inf,),), comps), NodePowerTable(nodes, ((-50.0,),), comps), 0.1)
    assert not diff.passed and diff.max_deviation() == math.inf
