"""Max-min time sharing: maximize min_k x_k c_k over {sum x <= 1, x >= tau_min}."""

from __future__ import annotations

import numpy as np

from .conic import ProblemBuilder, SolverSettings, solve_continuous


class TimeShareInfeasible(ValueError):
    pass


def equal_rate_split(c, tau_min: float) -> np.ndarray:
    """Closed form: shares proportional to 1/c_k, clamping at ``tau_min``.

    Entries with ``c_k = 0`` cannot earn any rate and are pinned at ``tau_min``.
    """
    c = np.asarray(c, dtype=float)
    K = len(c)
    if K * tau_min > 1.0 + 1e-12:
        raise TimeShareInfeasible(f"{K} users need {K * tau_min:.4g} > 1 of the frame")
    if np.any(c < 0):
        raise ValueError("rates must be non-negative")
    tau = np.full(K, tau_min)
    free = c > 0
    if not free.any():
        return tau
    while True:
        budget = 1.0 - tau_min * (K - free.sum())
        inv = np.where(free, 1.0 / np.where(free, c, 1.0), 0.0)
        share = budget * inv / inv.sum()
        low = free & (share < tau_min)
        if not low.any():
            tau[free] = share[free]
            return tau
        free &= ~low


LP_SETTINGS = SolverSettings(backend="clarabel", tol_feas=1e-9, tol_gap=1e-9)


def _polish(xs: np.ndarray, c: np.ndarray, tau_min: float, budget: float) -> np.ndarray:
    """Start from the LP's pinned set, put everyone else exactly on the common
    rate level and pin whoever drops below the floor. Returns ``xs`` unchanged
    if the result is not optimal for the LP."""
    pinned = xs <= tau_min * (1 + 1e-4) + 1e-12
    while True:
        free = ~pinned
        if not free.any():
            return xs
        level = (budget - tau_min * pinned.sum()) / np.sum(1.0 / c[free])
        out = np.where(free, level / c, tau_min)
        low = free & (out < tau_min)
        if not low.any():
            break
        pinned |= low
    if np.any(c[pinned] * tau_min < level * (1 - 1e-9)):
        return xs
    return out


def maxmin_lp(c, tau_min: float, settings: SolverSettings = LP_SETTINGS
              ) -> tuple[np.ndarray, float]:
    """Same problem solved as a linear program; returns (x, min-rate).

    Rates are normalized by their maximum so the program is well scaled. The
    interior-point answer is then polished on its own active set.
    """
    c = np.asarray(c, dtype=float)
    K = len(c)
    if K * tau_min > 1.0 + 1e-12:
        raise TimeShareInfeasible(f"{K} users need {K * tau_min:.4g} > 1 of the frame")
    live = np.flatnonzero(c > 0)
    x_out = np.full(K, tau_min)
    if len(live) == 0:
        return x_out, 0.0
    scale = c[live].max()
    cn = c[live] / scale
    b = ProblemBuilder()
    x = b.var("x", len(live))
    r = b.var("r")
    b.maximize(r, 1.0)
    rows = [([*x], -1.0, 1.0 - tau_min * (K - len(live)))]
    rows += [([xi], 1.0, -tau_min) for xi in x]
    rows += [([xi, r[0]], [ci, -1.0], 0.0) for xi, ci in zip(x, cn)]
    b.add("nonneg", rows)
    sol = solve_continuous(b.build(), settings)
    if not sol.ok:
        raise TimeShareInfeasible(f"time-sharing program ended with status {sol.status}")
    budget = 1.0 - tau_min * (K - len(live))
    xs = _polish(np.maximum(sol.x[x], tau_min), c[live], tau_min, budget)
    # remove solver round-off so the frame budget holds exactly
    excess = xs.sum() - budget
    if excess > 0:
        slack = xs - tau_min
        xs -= excess * slack / max(slack.sum(), 1e-300)
    x_out[live] = xs
    return x_out, float(np.min(xs * c[live]))
