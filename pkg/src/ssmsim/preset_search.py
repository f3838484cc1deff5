"""Reflecting-area sizing by the randomized-phase self-sustainability test.

Each SSM gets the largest candidate size whose reflecting block can still be
powered: averaged over random phase draws, the weakest UE it covers must
yield harvested power of at least ``Mbar * P^Rf``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import link
from .channel import ChannelSet
from .model import CoverageGroup, Preset, ScenarioConfig, build_preset, groups_of_ssm

log = logging.getLogger(__name__)


class PresetSearchError(ValueError):
    pass


def random_phase_response(preset: Preset, rng_seed) -> link.SurfaceResponse:
    """Unit-modulus phases uniform on (0, 2pi], masked by the preset."""
    rng = np.random.default_rng(rng_seed)
    theta = 2 * np.pi * (1.0 - rng.random(preset.n_elem))
    return link.SurfaceResponse(varphi=np.exp(1j * theta), beta=np.asarray(preset.beta))


@dataclass
class PresetSearchReport:
    m_bar: list[int]                      # chosen size per SSM
    p_received: list[float]               # mean over draws of the min over UEs, W
    p_harvested: list[float]              # same for the rectifier output, W
    distance: list[float]                 # SSM center to BS, m
    feasible: list[bool]                  # False where even the smallest size fails
    margins: list[dict[int, float]] = field(default_factory=list)   # size -> mean min surplus, W
    candidate_sizes: list[int] = field(default_factory=list)
    p_reflect: float = 0.0
    mc_draws: int = 0
    rounds: int = 0
    seed: int = 0

    def presets(self, n_elem: int) -> list[Preset]:
        return [build_preset(n_elem, m) for m in self.m_bar]

    def to_dict(self) -> dict[str, Any]:
        d = dict(self.__dict__)
        d["margins"] = [{str(k): v for k, v in m.items()} for m in self.margins]
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "PresetSearchReport":
        d = dict(d)
        d["margins"] = [{int(k): float(v) for k, v in m.items()} for m in d.get("margins", [])]
        return cls(**d)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "PresetSearchReport":
        try:
            return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
        except (json.JSONDecodeError, TypeError, KeyError) as exc:
            raise PresetSearchError(f"{path}: not a preset report ({exc})") from exc


class _Evaluator:
    """Randomized-phase received power with common random numbers.

    Draw ``d`` fixes one full-length phase vector per SSM; a candidate preset
    only changes which of those phases are used.
    """

    def __init__(self, cs: ChannelSet, groups: list[CoverageGroup], cfg: ScenarioConfig,
                 seed: int) -> None:
        self.cs, self.cfg = cs, cfg
        self.ue_group = {k: g for g in groups for k in g.ue_ids}
        ss = np.random.SeedSequence([seed, 0x5eed])
        dummy = Preset(beta=np.ones(cs.n_elem, dtype=np.int8), m_bar=cs.n_elem)
        self.phases = np.array([[random_phase_response(dummy, s).varphi
                                 for s in d.spawn(cs.n_ssm)]
                                for d in ss.spawn(cfg.mc_draws)])       # (D, L, M)

    def received(self, l: int, betas: np.ndarray, ue_ids: list[int]) -> np.ndarray:
        """P^Rc at SSM l for every draw and UE, shape (D, len(ue_ids))."""
        cs, P = self.cs, self.cfg.tx_power
        out = np.zeros((len(self.phases), len(ue_ids)))
        for j, k in enumerate(ue_ids):
            ls = list(self.ue_group[k].ssm_ids)
            for d, ph in enumerate(self.phases):
                contrib = [(cs.cascaded(l2, k), ph[l2] * betas[l2]) for l2 in ls]
                try:
                    w = link.mrt_precoder(cs.h[k], contrib)
                except link.UnreachableError:
                    continue
                out[d, j] = link.received_power(cs.G[l], betas[l], w, P)
        return out


def criterion(p_rc: np.ndarray, m_bar: int, cfg: ScenarioConfig) -> tuple[float, float, float]:
    """(mean of min surplus, mean of min P^Rc, mean of min P^Hr) over draws."""
    p_hr = link.harvested_power(p_rc, cfg.q1, cfg.q2, cfg.q3)
    surplus = np.min(p_hr - m_bar * cfg.p_reflect, axis=1).mean()
    return float(surplus), float(p_rc.min(axis=1).mean()), float(p_hr.min(axis=1).mean())


def search_sizes(cs: ChannelSet, groups: list[CoverageGroup], cfg: ScenarioConfig,
                 distance: np.ndarray | None = None, seed: int | None = None
                 ) -> PresetSearchReport:
    """Greedy sweep over the SSMs in index order, ``cfg.preset_rounds`` times.

    Every SSM starts at the smallest candidate; each visit evaluates all
    candidates with the other SSMs held at their current sizes and keeps the
    largest one whose averaged criterion is met.
    """
    sizes = sorted(cfg.candidate_sizes)
    if not sizes:
        raise PresetSearchError("empty candidate set")
    seed = cfg.seed if seed is None else seed
    L, M = cs.n_ssm, cs.n_elem
    ev = _Evaluator(cs, groups, cfg, seed)
    served = [sorted({k for g in gs for k in g.ue_ids}) for gs in groups_of_ssm(groups, L)]
    betas = {s: np.asarray(build_preset(M, s).beta) for s in sizes}
    chosen = [sizes[0]] * L
    stats: list[dict[int, tuple[float, float, float]]] = [{} for _ in range(L)]
    for _ in range(cfg.preset_rounds):
        for l in range(L):
            if not served[l]:
                stats[l] = {}
                continue
            current = np.array([betas[s] for s in chosen])
            res = {}
            for s in sizes:
                current[l] = betas[s]
                res[s] = criterion(ev.received(l, current, served[l]), s, cfg)
            stats[l] = res
            ok = [s for s in sizes if res[s][0] >= 0]
            chosen[l] = max(ok) if ok else sizes[0]

    p_rc, p_hr, feasible, margins = [], [], [], []
    for l in range(L):
        res = stats[l]
        if not res:
            log.warning("SSM %d covers no UE; keeping size %d", l, sizes[0])
            p_rc.append(0.0), p_hr.append(0.0), feasible.append(False), margins.append({})
            continue
        surplus, rc, hr = res[chosen[l]]
        if surplus < 0:
            log.warning("SSM %d cannot sustain any candidate size; falling back to %d",
                        l, sizes[0])
        p_rc.append(rc), p_hr.append(hr), feasible.append(surplus >= 0)
        margins.append({s: v[0] for s, v in res.items()})
    dist = np.zeros(L) if distance is None else np.asarray(distance, dtype=float)
    return PresetSearchReport(
        m_bar=[int(s) for s in chosen], p_received=p_rc, p_harvested=p_hr,
        distance=dist.tolist(), feasible=feasible, margins=margins,
        candidate_sizes=list(sizes), p_reflect=cfg.p_reflect, mc_draws=cfg.mc_draws,
        rounds=cfg.preset_rounds, seed=int(seed))
