"""SVG figures built only from the JSON reports the pipeline writes."""

from __future__ import annotations

from pathlib import Path
from typing import Any, Mapping

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

plt.rcParams["svg.hashsalt"] = "ssmsim"      # stable ids, so reruns give identical files
plt.rcParams["svg.fonttype"] = "none"


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def preset_sizes(report: Mapping[str, Any], path: str | Path) -> Path:
    """Chosen reflecting size per SSM against its distance to the BS."""
    d = np.asarray(report["distance"], dtype=float)
    m = np.asarray(report["m_bar"], dtype=float)
    ok = np.asarray(report["feasible"], dtype=bool)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.scatter(d[ok], m[ok], marker="o", label="self-sustainable")
    if (~ok).any():
        ax.scatter(d[~ok], m[~ok], marker="x", color="tab:red", label="fallback (infeasible)")
    ax.set_xlabel("distance to BS (m)")
    ax.set_ylabel("reflecting elements")
    ax.grid(alpha=0.3)
    ax.legend()
    return _save(fig, path)


def snr_and_time(results: Mapping[str, Any], path: str | Path) -> Path:
    """Per-UE SNR (dB) and effective time fraction."""
    net = results["network"]
    snr = np.asarray(net["snr"], dtype=float)
    tau = np.asarray(net["tau_effective"], dtype=float)
    idx = np.arange(len(snr))
    snr_db = np.where(snr > 0, 10 * np.log10(np.where(snr > 0, snr, 1.0)), np.nan)
    fig, (a1, a2) = plt.subplots(2, 1, figsize=(8, 5), sharex=True)
    a1.bar(idx, snr_db, color="tab:blue")
    a1.set_ylabel("SNR (dB)")
    a1.grid(alpha=0.3)
    a2.bar(idx, tau, color="tab:orange")
    a2.set_ylabel("time fraction")
    a2.set_xlabel("UE index")
    a2.grid(alpha=0.3)
    a1.set_title(f"mode {results['mode']}")
    return _save(fig, path)


def power_balance(results: Mapping[str, Any], path: str | Path, p_reflect: float | None = None
                  ) -> Path:
    """Per SSM: weakest harvested power over its associated UEs against the
    consumption of its reflecting area (both in microwatts)."""
    diag = results["network"]["diagnostics"]
    p_reflect = results["config"]["p_reflect"] if p_reflect is None else p_reflect
    m_bar = np.asarray(diag["m_bar"], dtype=float)
    harvested = np.zeros(len(m_bar))
    for l, entries in enumerate(diag["power_ledger"]):
        on = [e["p_harvested"] for e in entries if e["alpha"]]
        harvested[l] = min(on) if on else 0.0
    consumed = m_bar * p_reflect
    idx = np.arange(len(m_bar))
    fig, ax = plt.subplots(figsize=(8, 4))
    ax.bar(idx - 0.2, harvested * 1e6, width=0.4, label="harvested (worst associated UE)")
    ax.bar(idx + 0.2, consumed * 1e6, width=0.4, label="consumed")
    ax.set_xlabel("SSM index")
    ax.set_ylabel("power (uW)")
    ax.grid(alpha=0.3)
    ax.legend()
    return _save(fig, path)


def mode_comparison(results_by_mode: Mapping[str, Mapping[str, Any]], path: str | Path
                    ) -> Path:
    """Network minimum rate per mode, in Mbit/s."""
    modes = list(results_by_mode)
    rates = [results_by_mode[m]["network"]["min_rate"] / 1e6 for m in modes]
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.bar([m.upper() for m in modes], rates, color="tab:green")
    for i, r in enumerate(rates):
        ax.annotate(f"{r:.1f}", (i, r), ha="center", va="bottom")
    ax.set_ylabel("minimum rate (Mbit/s)")
    ax.grid(axis="y", alpha=0.3)
    return _save(fig, path)


def all_for_results(results: Mapping[str, Any], out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    return [snr_and_time(results, out / "snr_time.svg"),
            power_balance(results, out / "power_balance.svg")]
