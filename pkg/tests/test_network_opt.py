import numpy as np
import pytest

from ssmsim.channel import ChannelSet
from ssmsim.model import CoverageGroup, build_preset
from ssmsim.network_opt import run_pipeline, stage2_lp
from ssmsim.oracle import tiny_config, tiny_instance
from ssmsim.timeshare import TimeShareInfeasible, equal_rate_split, maxmin_lp


# --- time sharing ------------------------------------------------------------------

def test_stage2_symmetric():
    net = stage2_lp([10.0, 10.0], [0.5, 0.5], 0.01)
    assert np.allclose(net.tau_hat, [1, 1], atol=1e-7)
    assert net.min_rate == pytest.approx(10.0, rel=1e-7)


def test_stage2_equalizes_rates():
    net = stage2_lp([10.0, 30.0], [0.5, 0.5], 0.01)
    assert np.allclose(net.tau_effective, [0.75, 0.25], atol=1e-7)
    assert net.min_rate == pytest.approx(15.0, rel=1e-7)
    assert np.allclose(net.rate, net.tau_hat * net.rate_tilde)


def test_stage2_single_ue():
    net = stage2_lp([4.0], [0.25], 0.01)
    assert net.tau_hat[0] == pytest.approx(4.0, rel=1e-9)
    assert net.rate[0] == pytest.approx(16.0, rel=1e-9)


def test_stage2_too_many_users():
    with pytest.raises(TimeShareInfeasible):
        stage2_lp(np.ones(11), np.full(11, 0.1), 0.1)


def test_stage2_invariants_random():
    rng = np.random.default_rng(0)
    for _ in range(50):
        K = int(rng.integers(1, 40))
        tau_min = rng.uniform(0, 1 / K)
        rt = rng.uniform(1e6, 1e9, K) * (rng.random(K) > 0.1)
        tt = rng.uniform(0.01, 1, K)
        net = stage2_lp(rt, tt, tau_min)
        eff = net.tau_effective
        assert eff.sum() <= 1 + 1e-9
        assert np.all(eff >= tau_min - 1e-9)
        # everyone above the floor reaches the common level
        live = (rt > 0) & (eff > tau_min + 1e-7)
        if live.any():
            assert np.allclose(net.rate[live], net.min_rate, rtol=1e-6)


def test_closed_form_matches_lp():
    rng = np.random.default_rng(1)
    for _ in range(200):
        K = int(rng.integers(1, 30))
        tau_min = rng.uniform(0, 1 / K)
        c = np.exp(rng.uniform(0, 8, K))
        x_cf = equal_rate_split(c, tau_min)
        x_lp, r_lp = maxmin_lp(c, tau_min)
        assert np.min(x_cf * c) == pytest.approx(r_lp, rel=1e-6)
        assert x_cf.sum() <= 1 + 1e-12 and np.all(x_cf >= tau_min - 1e-15)
        assert x_lp.sum() <= 1 + 1e-9


def test_closed_form_pins_dead_entries():
    x = equal_rate_split([0.0, 2.0, 2.0], 0.1)
    assert np.allclose(x, [0.1, 0.45, 0.45])


# --- pipeline ------------------------------------------------------------------------

def _two_copies(data):
    """Two disjoint groups with identical channels."""
    K, L, M = data.n_ue, data.n_ssm, data.g.shape[-1]
    g = np.zeros((2 * L, 2 * K, M), complex)
    g[:L, :K] = g[L:, K:] = data.g
    cs = ChannelSet(h=np.vstack([data.h, data.h]), G=np.concatenate([data.G, data.G]), g=g)
    groups = [CoverageGroup(index=0, ue_ids=tuple(range(K)), ssm_ids=tuple(range(L))),
              CoverageGroup(index=1, ue_ids=tuple(range(K, 2 * K)),
                            ssm_ids=tuple(range(L, 2 * L)))]
    return cs, groups


@pytest.fixture(scope="module")
def tiny():
    cfg = tiny_config(sca_starts=1)
    data, cfg = tiny_instance(1002, m_bars=(1, 4), cfg=cfg)
    return data, cfg


def test_pipeline_single_group(tiny):
    data, cfg = tiny
    cs = ChannelSet(h=data.h, G=data.G, g=data.g)
    group = CoverageGroup(index=0, ue_ids=(0, 1), ssm_ids=(0, 1))
    presets = [build_preset(cfg.n_elem, m) for m in (1, 4)]
    net, sols = run_pipeline(cs, [group], presets, cfg, "ssm", seed=0)
    eff = net.tau_effective
    assert eff.sum() == pytest.approx(1.0, abs=1e-9)
    assert np.allclose(eff, sols[0].tau / sols[0].tau.sum(), rtol=1e-6)
    assert all(net.feasibility(cfg.tau_min).values())
    assert all(sols[0].feasibility(cfg.p_reflect, cfg.tau_min).values())


def test_pipeline_identical_groups(tiny):
    data, cfg = tiny
    cs, groups = _two_copies(data)
    presets = [build_preset(cfg.n_elem, m) for m in (1, 4, 1, 4)]
    net, sols = run_pipeline(cs, groups, presets, cfg, "ssm", seed=0)
    eff = net.tau_effective
    assert np.allclose(eff[:2], eff[2:], rtol=1e-6)
    assert np.allclose(sols[0].rate, sols[1].rate, rtol=1e-9)
    assert eff.sum() <= 1 + 1e-9
