"""Network-wide time allocation and the two-stage pipeline for every mode."""

from __future__ import annotations

import csv
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import link
from .channel import ChannelSet
from .conic import SolverSettings
from .group_opt import GroupProblemData, GroupSolution, run_algorithm1
from .model import CoverageGroup, Preset, ScenarioConfig
from .timeshare import LP_SETTINGS, maxmin_lp

log = logging.getLogger(__name__)

CSV_FIELDS = ("ue_id", "row", "snr_db", "tau_effective", "rate_bps", "eta")


@dataclass
class NetworkSolution:
    mode: str
    ue_ids: list[int]
    tau_hat: np.ndarray               # stage-2 scaling per UE
    tau_tilde: np.ndarray             # stage-1 fraction per UE
    rate_tilde: np.ndarray            # stage-1 rate per UE, bit/s
    rate: np.ndarray                  # final rate per UE, bit/s
    snr: np.ndarray = field(default_factory=lambda: np.zeros(0))
    eta: np.ndarray = field(default_factory=lambda: np.zeros(0))
    servable: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))
    diagnostics: dict[str, Any] = field(default_factory=dict)

    @property
    def tau_effective(self) -> np.ndarray:
        return self.tau_hat * self.tau_tilde

    @property
    def min_rate(self) -> float:
        live = self.servable if len(self.servable) else self.rate > 0
        return float(self.rate[live].min()) if np.any(live) else 0.0

    def feasibility(self, tau_min: float) -> dict[str, bool]:
        eff = self.tau_effective
        return {"time_budget": bool(eff.sum() <= 1 + 1e-9),
                "tau_min": bool(np.all(eff >= tau_min - 1e-9))}

    def to_dict(self) -> dict[str, Any]:
        return {
            "mode": self.mode, "ue_ids": self.ue_ids, "min_rate": self.min_rate,
            "tau_hat": self.tau_hat.tolist(), "tau_tilde": self.tau_tilde.tolist(),
            "tau_effective": self.tau_effective.tolist(),
            "rate_tilde": self.rate_tilde.tolist(), "rate": self.rate.tolist(),
            "snr": self.snr.tolist(), "eta": [None if np.isnan(x) else x for x in self.eta],
            "servable": self.servable.tolist(), "diagnostics": self.diagnostics,
        }


def stage2_lp(rtilde, tau_tilde_star, tau_min: float,
              settings: SolverSettings = LP_SETTINGS, mode: str = "ssm") -> NetworkSolution:
    """Rescale every UE's stage-1 time so the network-wide minimum rate is maximal.

    UEs with zero stage-1 rate keep the minimum share and do not limit the
    objective.
    """
    rt = np.asarray(rtilde, dtype=float)
    tt = np.asarray(tau_tilde_star, dtype=float)
    if rt.shape != tt.shape:
        raise ValueError("rtilde and tau_tilde_star differ in length")
    if np.any(rt < 0) or np.any(tt <= 0):
        raise ValueError("rates must be >= 0 and stage-1 fractions > 0")
    c = rt / tt                               # rate per unit of effective time
    x, _ = maxmin_lp(c, tau_min, settings)
    tau_hat = x / tt
    return NetworkSolution(mode=mode, ue_ids=list(range(len(rt))), tau_hat=tau_hat,
                           tau_tilde=tt, rate_tilde=rt, rate=tau_hat * rt,
                           servable=rt > 0)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("SSM_THREADS", "1")))
    except ValueError:
        return 1


def _solve_group(args) -> GroupSolution:
    data, cfg, mode, seed = args
    return run_algorithm1(data, cfg, mode, seed)


def run_stage1(cs: ChannelSet, groups: list[CoverageGroup], presets: list[Preset],
               cfg: ScenarioConfig, mode: str, seed: int = 0) -> list[GroupSolution]:
    jobs = [(GroupProblemData.from_channels(cs, g, presets, cfg), cfg, mode, seed)
            for g in groups]
    workers = min(_threads(), len(jobs))
    if workers <= 1:
        return [_solve_group(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_solve_group, jobs))


def run_pipeline(cs: ChannelSet, groups: list[CoverageGroup], presets: list[Preset],
                 cfg: ScenarioConfig, mode: str = "ssm", seed: int = 0,
                 ue_row: np.ndarray | None = None
                 ) -> tuple[NetworkSolution, list[GroupSolution]]:
    """Stage 1 per coverage group, then the network-wide time LP."""
    sols = run_stage1(cs, groups, presets, cfg, mode, seed)
    K = cs.n_ue
    rt, tt, snr = np.zeros(K), np.full(K, cfg.tau_min), np.zeros(K)
    reach = np.ones(K, dtype=bool)
    for sol in sols:
        ks = np.asarray(sol.ue_ids)
        rt[ks], tt[ks], snr[ks] = sol.rate, sol.tau, sol.snr
        if sol.reachable is not None:
            reach[ks] = sol.reachable
    dead = np.flatnonzero(~reach)
    if len(dead):
        log.warning("UEs %s are unservable and excluded from the minimum rate",
                    dead.tolist())
    net = stage2_lp(rt, tt, cfg.tau_min, mode=mode)
    net.servable = reach
    net.snr = snr
    net.eta = np.array([link.contribution_eta(cs.h[k], snr[k], cfg.tx_power, cfg.bandwidth,
                                              cfg.noise_psd) if snr[k] > 0 else np.nan
                        for k in range(K)])
    net.diagnostics = diagnostics(cs, groups, presets, cfg, sols, ue_row)
    return net, sols


def diagnostics(cs: ChannelSet, groups: list[CoverageGroup], presets: list[Preset],
                cfg: ScenarioConfig, sols: list[GroupSolution],
                ue_row: np.ndarray | None = None) -> dict[str, Any]:
    """Power ledgers per SSM, association counts and direct-link SNRs."""
    L = cs.n_ssm
    ledger: list[list[dict[str, Any]]] = [[] for _ in range(L)]
    for sol in sols:
        for i, l in enumerate(sol.ssm_ids):
            for j, k in enumerate(sol.ue_ids):
                ledger[l].append({
                    "group": sol.group, "ue": int(k), "alpha": int(sol.alpha[i, j]),
                    "p_received": float(sol.p_rc[i, j]), "p_harvested": float(sol.p_hr[i, j]),
                    "p_consumed": float(sol.alpha[i, j] * presets[l].m_bar * cfg.p_reflect),
                })
    snr_bs = [link.snr_direct(cs.h[k], cfg.tx_power, cfg.bandwidth, cfg.noise_psd)
              for k in range(cs.n_ue)]
    return {
        "m_bar": [p.m_bar for p in presets],
        "associations": [sum(e["alpha"] for e in led) for led in ledger],
        "power_ledger": ledger,
        "snr_direct": snr_bs,
        "ue_row": None if ue_row is None else np.asarray(ue_row).tolist(),
        "groups": [g.to_dict() for g in groups],
        "repaired": {str(s.group): [list(x) for x in s.repaired] for s in sols if s.repaired},
        "unservable_groups": [s.group for s in sols if not s.servable],
    }


# --- reports -------------------------------------------------------------------

def results_dict(net: NetworkSolution, sols: list[GroupSolution], cfg: ScenarioConfig
                 ) -> dict[str, Any]:
    group_reports = []
    for s in sols:
        d = s.to_dict()
        d["feasibility"] = s.feasibility(cfg.p_reflect, cfg.tau_min)
        group_reports.append(d)
    feas = net.feasibility(cfg.tau_min)
    feas["groups"] = all(all(g["feasibility"].values()) for g in group_reports)
    return {"mode": net.mode, "config": cfg.to_dict(), "network": net.to_dict(),
            "groups": group_reports, "feasible": feas}


def write_results(path: str | Path, results: dict[str, Any]) -> None:
    Path(path).write_text(json.dumps(results, indent=2), encoding="utf-8")


def write_rates_csv(path: str | Path, net: NetworkSolution, ue_row) -> None:
    """One line per UE; ``snr_db`` and ``eta`` are empty for unservable UEs."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_FIELDS)
        for k in range(len(net.rate)):
            snr_db = f"{10 * np.log10(net.snr[k]):.6f}" if net.snr[k] > 0 else ""
            eta = "" if np.isnan(net.eta[k]) else f"{net.eta[k]:.6g}"
            w.writerow([k, int(ue_row[k]), snr_db, f"{net.tau_effective[k]:.9g}",
                        f"{net.rate[k]:.9g}", eta])
