"""Brute-force reference values for tiny instances.

Nothing here calls the conic solver or the SCA loop, so the results can be
used to check them.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import link
from .group_opt import GroupProblemData
from .model import CoverageGroup, ScenarioConfig, build_preset

MAX_BINARIES = 8
MAX_EVALS = 10 ** 6


class OracleBudgetError(ValueError):
    """The enumeration would exceed the configured budget."""


def time_alloc_closed_form(c, tau_min: float) -> np.ndarray:
    """Max-min time shares for spectral rates ``c`` (all > 0).

    Equal-rate split proportional to 1/c, then any share below ``tau_min`` is
    clamped and the rest re-equalized.
    """
    c = np.asarray(c, dtype=float)
    K = len(c)
    if K * tau_min > 1.0 + 1e-12:
        raise ValueError(f"K * tau_min = {K * tau_min:.4g} exceeds the frame")
    if np.any(c <= 0):
        raise ValueError("closed-form allocation needs c > 0")
    clamped = np.zeros(K, dtype=bool)
    while True:
        free = ~clamped
        budget = 1.0 - tau_min * clamped.sum()
        tau = np.full(K, tau_min)
        tau[free] = budget * (1 / c[free]) / np.sum(1 / c[free])
        low = free & (tau < tau_min)
        if not low.any():
            return tau
        clamped |= low


def group_min_rate(snr: np.ndarray, B: float, tau_min: float,
                   reachable: np.ndarray | None = None) -> float:
    """Min rate over the reachable UEs after closed-form time sharing.

    UEs with zero SNR keep ``tau_min``; if any of them is reachable the
    minimum is 0.
    """
    snr = np.asarray(snr, dtype=float)
    reachable = np.ones(len(snr), bool) if reachable is None else np.asarray(reachable)
    live = snr > 0
    if not reachable.any():
        return 0.0
    if np.any(reachable & ~live):
        return 0.0
    K = len(snr)
    c = B * np.log2(1 + snr[live])
    # dead UEs still hold tau_min each; share the rest of the frame
    spare = 1.0 - tau_min * (K - live.sum())
    tau = time_alloc_closed_form(c, tau_min / spare) * spare
    return float(np.min((tau * c)[reachable[live]]))


def _phase_grid(n: int, Q: int, chunk: int = 1 << 15):
    """All Q^n unit-modulus vectors, in chunks of rows."""
    levels = np.exp(2j * np.pi * np.arange(Q) / Q)
    total = Q ** n
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total))
        digits = (idx[:, None] // Q ** np.arange(n)[None, :]) % Q
        yield levels[digits]


@dataclass
class OracleResult:
    min_rate: float
    snr: np.ndarray          # best feasible SNR per UE
    alpha: np.ndarray        # (L, K) association achieving it
    evaluations: int


def exhaustive_group(data: GroupProblemData, Q: int = 8, max_evals: int = MAX_EVALS
                     ) -> OracleResult:
    """Best min-rate over all associations and phases on the Q-level grid.

    Every UE's SNR and harvested powers depend only on its own associations
    and phases, and the max-min rate grows with each UE's SNR, so each UE is
    enumerated on its own. Surfaces without harvesting elements cannot power
    themselves and are never associated.
    """
    L, K = data.n_ssm, data.n_ue
    if L * K > MAX_BINARIES:
        raise OracleBudgetError(f"{L * K} binaries exceed the oracle limit {MAX_BINARIES}")
    if Q < 1:
        raise ValueError("Q must be >= 1")
    refl = [p.reflect_idx for p in data.presets]
    can_power = [len(p.harvest_idx) > 0 for p in data.presets]
    need = data.m_bar * data.p_reflect
    assoc = [a for a in itertools.product((0, 1), repeat=L)
             if all(can_power[l] or not a[l] for l in range(L))]
    cost = sum(Q ** int(sum(data.m_bar[l] for l in range(L) if a[l])) for a in assoc) * K
    if cost > max_evals:
        raise OracleBudgetError(f"enumeration needs {cost} evaluations > {max_evals}")

    scale = data.P / (data.B * data.N0)
    best_snr = np.zeros(K)
    best_alpha = np.zeros((L, K), dtype=int)
    evals = 0
    for k in range(K):
        for a in assoc:
            ls = [l for l in range(L) if a[l]]
            Hc = (np.hstack([data.H(l, k)[:, refl[l]] for l in ls]) if ls
                  else np.zeros((data.n_bs, 0), complex))
            for phases in _phase_grid(Hc.shape[1], Q):
                eff = data.h[k][None, :] + phases @ Hc.T            # (C, N)
                nrm = np.linalg.norm(eff, axis=1)
                snr = nrm ** 2 * scale
                ok = nrm > 0
                for l in ls:
                    w = eff.conj() / np.where(nrm > 0, nrm, 1.0)[:, None]
                    y = w @ data.G[l].T                              # (C, M)
                    p_rc = data.P * np.sum((1 - data.beta[l]) * np.abs(y) ** 2, axis=1)
                    p_hr = data.q1 * p_rc / (data.q2 * p_rc + data.q3)
                    ok &= p_hr >= need[l]
                evals += len(phases)
                if ok.any():
                    i = int(np.argmax(np.where(ok, snr, -1.0)))
                    if snr[i] > best_snr[k]:
                        best_snr[k] = snr[i]
                        best_alpha[:, k] = a
    return OracleResult(group_min_rate(best_snr, data.B, data.tau_min, data.reachable),
                        best_snr,
                        best_alpha, evals)


def upper_bound_rate(data: GroupProblemData) -> float:
    """Min over reachable UEs of the full-frame rate at the SNR upper bound."""
    rates = []
    for k in range(data.n_ue):
        ub = link.snr_upper_bound(data.h[k], data.H_stacked(k), data.P, data.B, data.N0)
        if ub > 0:
            rates.append(data.B * np.log2(1 + ub))
    return float(min(rates)) if rates else 0.0


def mc_received_power(G: np.ndarray, beta: np.ndarray, w: np.ndarray, P: float,
                      n_samples: int, rng: np.random.Generator | int | None = None,
                      deterministic: bool = False, chunk: int = 10_000
                      ) -> tuple[float, float]:
    """Sample mean and standard error of ||diag(1 - beta) G w x||^2.

    ``x`` is circularly-symmetric complex Gaussian with E|x|^2 = P, or has
    fixed modulus sqrt(P) and random phase when ``deterministic`` is set.
    """
    if n_samples < 100:
        raise ValueError("n_samples must be >= 100")
    rng = np.random.default_rng(rng)
    gw = (1 - np.asarray(beta)) * (np.asarray(G) @ w)
    vals = np.empty(n_samples)
    for start in range(0, n_samples, chunk):
        n = min(chunk, n_samples - start)
        if deterministic:
            x = np.sqrt(P) * np.exp(2j * np.pi * rng.random(n))
        else:
            x = np.sqrt(P / 2) * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
        y = gw[:, None] * x[None, :]
        vals[start:start + n] = np.sum(np.abs(y) ** 2, axis=0)
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(n_samples))


# --- tiny instances ---------------------------------------------------------------

def tiny_config(**changes) -> ScenarioConfig:
    """Constants for tiny random groups: 4 BS antennas, 4 elements per surface."""
    base = dict(rows=1, n_bs=4, n_elem=4, candidate_sizes=(1, 4), tau_min=0.01,
                sca_rounds=20, bnb_max_nodes=1000, sca_starts=4)
    return ScenarioConfig(**{**base, **changes})


def tiny_instance(rng: np.random.Generator | int, m_bars=(1, 4), n_ue: int = 2,
                  cfg: ScenarioConfig | None = None, direct: bool = True
                  ) -> tuple[GroupProblemData, ScenarioConfig]:
    """Random Rayleigh group with gains chosen so that self-sustainability is
    borderline: the harvested power at a random precoder is of the order of
    one element's consumption."""
    rng = np.random.default_rng(rng)
    cfg = cfg or tiny_config()
    N, M, L, K = cfg.n_bs, cfg.n_elem, len(m_bars), n_ue

    def cn(*shape, s=1.0):
        return s * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)

    noise = cfg.bandwidth * cfg.noise_psd / cfg.tx_power
    h = cn(K, N, s=np.sqrt(10 * noise)) * (1.0 if direct else 0.0)
    # received power at a surface ~ P * (#harvest elements) * sG^2 * (gain ~ 1)
    sG = np.sqrt(cfg.p_reflect / cfg.tx_power * rng.uniform(0.3, 3.0))
    G = cn(L, M, N, s=sG)
    g = cn(L, K, M, s=np.sqrt(20 * noise) / (sG * np.sqrt(N)))
    group = CoverageGroup(index=0, ue_ids=tuple(range(K)), ssm_ids=tuple(range(L)))
    presets = [build_preset(M, mb) for mb in m_bars]
    data = GroupProblemData(group=group, h=h, G=G, g=g, presets=presets, P=cfg.tx_power,
                            B=cfg.bandwidth, N0=cfg.noise_psd, p_reflect=cfg.p_reflect,
                            q1=cfg.q1, q2=cfg.q2, q3=cfg.q3, tau_min=cfg.tau_min)
    return data, cfg
