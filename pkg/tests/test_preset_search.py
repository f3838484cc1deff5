import numpy as np
import pytest
from scipy.optimize import brentq

from ssmsim import link
from ssmsim.channel import ChannelSet
from ssmsim.model import CoverageGroup, ScenarioConfig, build_preset
from ssmsim.preset_search import (PresetSearchError, PresetSearchReport, random_phase_response,
                                  search_sizes)

N, M = 4, 1024


def scene(gain2: float, cfg: ScenarioConfig, L: int = 2, K: int = 2, rng=0):
    """No SSM-to-UE paths, so MRT follows the direct channel whatever the phases,
    and every element of SSM l sees |G_m w|^2 = gain2[l]."""
    rng = np.random.default_rng(rng)
    hk = rng.normal(size=N) + 1j * rng.normal(size=N)
    h = np.tile(hk, (K, 1))
    w = hk.conj() / np.linalg.norm(hk)                      # MRT on the direct link
    gain2 = np.broadcast_to(np.asarray(gain2, dtype=float), (L,))
    row = w.conj() / np.linalg.norm(w)                       # row @ w = 1
    G = np.stack([np.tile(np.sqrt(g) * row, (M, 1)) for g in gain2])
    g = np.zeros((L, K, M), complex)
    groups = [CoverageGroup(index=0, ue_ids=tuple(range(K)), ssm_ids=tuple(range(L)))]
    return ChannelSet(h=h, G=G, g=g), groups


def harvested(m_bar: int, gain2: float, cfg: ScenarioConfig) -> float:
    p_rc = cfg.tx_power * (M - m_bar) * gain2
    return float(link.harvested_power(p_rc, cfg.q1, cfg.q2, cfg.q3))


def cfg_small(**kw) -> ScenarioConfig:
    return ScenarioConfig(n_bs=N, n_elem=M, **kw)


def test_random_phase_response():
    preset = build_preset(16, 4)
    r = random_phase_response(preset, 3)
    refl = np.asarray(preset.beta) == 1
    phi = r.phi
    assert np.all(phi[~refl] == 0)
    assert np.allclose(np.abs(phi[refl]), 1.0, atol=1e-15)
    assert np.array_equal(phi, random_phase_response(preset, 3).phi)
    assert not np.array_equal(phi, random_phase_response(preset, 4).phi)


def test_zero_power_all_infeasible():
    cfg = cfg_small(tx_power=0.0)
    cs, groups = scene(1e-3, cfg)
    rep = search_sizes(cs, groups, cfg)
    assert rep.feasible == [False, False]
    assert rep.m_bar == [min(cfg.candidate_sizes)] * 2


def test_strong_surface_takes_largest_size():
    cfg = cfg_small()
    cs, groups = scene(1.0, cfg)
    assert harvested(256, 1.0, cfg) > 100 * 256 * cfg.p_reflect
    rep = search_sizes(cs, groups, cfg)
    assert rep.m_bar == [256, 256] and all(rep.feasible)


def test_matches_brute_force_between_81_and_121():
    cfg = cfg_small()
    # gain where the 81-element surface harvests exactly 100 P^Rf
    target = 100 * cfg.p_reflect
    gain2 = brentq(lambda x: harvested(81, x, cfg) - target, 1e-12, 1.0, xtol=1e-20)
    cs, groups = scene([gain2, 2 * gain2], cfg)
    rep = search_sizes(cs, groups, cfg)
    expected = []
    for g in (gain2, 2 * gain2):
        ok = [s for s in cfg.candidate_sizes if harvested(s, g, cfg) >= s * cfg.p_reflect]
        expected.append(max(ok))
    assert expected[0] == 81
    assert rep.m_bar == expected
    for l, g in enumerate((gain2, 2 * gain2)):
        for s, margin in rep.margins[l].items():
            assert margin == pytest.approx(harvested(s, g, cfg) - s * cfg.p_reflect, rel=1e-9)


def test_post_hoc_criterion():
    cfg = cfg_small()
    rng = np.random.default_rng(5)
    L, K = 3, 3
    h = (rng.normal(size=(K, N)) + 1j * rng.normal(size=(K, N))) * 1e-4
    G = (rng.normal(size=(L, M, N)) + 1j * rng.normal(size=(L, M, N))) * 2e-3
    g = (rng.normal(size=(L, K, M)) + 1j * rng.normal(size=(L, K, M))) * 1e-4
    cs = ChannelSet(h=h, G=G, g=g)
    groups = [CoverageGroup(index=0, ue_ids=(0, 1, 2), ssm_ids=(0, 1, 2))]
    rep = search_sizes(cs, groups, cfg, seed=11)
    for l in range(L):
        passing = [s for s, m in rep.margins[l].items() if m >= 0]
        if rep.feasible[l]:
            assert rep.m_bar[l] == max(passing)
            assert rep.p_harvested[l] >= rep.m_bar[l] * cfg.p_reflect
        else:
            assert not passing and rep.m_bar[l] == min(cfg.candidate_sizes)
        assert rep.m_bar[l] in cfg.candidate_sizes


def test_deterministic_and_round_trip(tmp_path):
    cfg = cfg_small()
    rng = np.random.default_rng(2)
    cs = ChannelSet(h=(rng.normal(size=(2, N)) + 0j) * 1e-4,
                    G=(rng.normal(size=(2, M, N)) + 1j * rng.normal(size=(2, M, N))) * 2e-3,
                    g=(rng.normal(size=(2, 2, M)) + 0j) * 1e-4)
    groups = [CoverageGroup(index=0, ue_ids=(0, 1), ssm_ids=(0, 1))]
    a = search_sizes(cs, groups, cfg, seed=9)
    b = search_sizes(cs, groups, cfg, seed=9)
    assert a.to_dict() == b.to_dict()
    a.save(tmp_path / "r.json")
    assert PresetSearchReport.load(tmp_path / "r.json").to_dict() == a.to_dict()


def test_empty_candidates_and_bad_report(tmp_path):
    cfg = cfg_small()
    cs, groups = scene(1.0, cfg)
    with pytest.raises((PresetSearchError, ValueError)):
        search_sizes(cs, groups, cfg.replace(candidate_sizes=()))
    (tmp_path / "bad.json").write_text("{\"m_bar\": [1]}")
    with pytest.raises(PresetSearchError):
        PresetSearchReport.load(tmp_path / "bad.json")
