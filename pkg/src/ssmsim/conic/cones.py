"""Euclidean projections onto the cones used by the solver."""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import brentq

from .problem import ConicProblem

_RHO_CLAMP = 200.0


def proj_nonneg(v: np.ndarray) -> np.ndarray:
    return np.maximum(v, 0.0)


def proj_soc(v: np.ndarray) -> np.ndarray:
    """Projection onto {(t, x) : ||x|| <= t}."""
    t, x = v[0], v[1:]
    nx = np.linalg.norm(x)
    if nx <= t:
        return v.copy()
    if nx <= -t:
        return np.zeros_like(v)
    a = 0.5 * (t + nx)
    out = np.empty_like(v)
    out[0] = a
    out[1:] = (a / nx) * x
    return out


def in_exp(v, tol: float = 0.0) -> bool:
    r, s, t = v
    if s > 0:
        # compare in log space when possible to dodge overflow
        if t <= 0:
            return False
        return r / s + math.log(s) <= math.log(t) + tol
    return s == 0 and r <= 0 and t >= 0


def in_exp_polar(v) -> bool:
    """v in K_exp polar, i.e. -v in the dual cone."""
    r, s, t = v
    if r > 0:
        if t >= 0:
            return False
        return math.log(r) + s / r <= 1.0 + math.log(-t)
    return r == 0 and s <= 0 and t <= 0


def _exp_root_fn(rho: float, r: float, s: float, t: float) -> float:
    den = rho * rho - rho + 1.0
    return (((rho - 1.0) * r + s) * math.exp(rho) - (r - rho * s) * math.exp(-rho)) / den - t


def proj_exp(v: np.ndarray) -> np.ndarray:
    """Projection onto the exponential cone.

    Away from the easy cases the projection lies on the smooth boundary
    ``y (rho, 1, exp(rho))``; ``rho`` solves a scalar monotone equation that
    is bracketed from the sign conditions on the primal and dual parts.
    """
    r, s, t = (float(x) for x in v)
    if in_exp((r, s, t), tol=1e-12):   # relative slack on t, absorbs log-space rounding
        return np.array([r, s, t])
    if in_exp_polar((r, s, t)):
        return np.zeros(3)
    if r <= 0 and s <= 0:
        return np.array([r, 0.0, max(t, 0.0)])

    # feasible rho: primal scale ((rho-1) r + s) > 0, dual scale (r - rho s) >= 0
    lo, hi = -_RHO_CLAMP, _RHO_CLAMP
    if s > 0:
        hi = min(hi, r / s)
        if r > 0:
            lo = max(lo, 1.0 - s / r)
        elif r < 0:
            hi = min(hi, 1.0 - s / r)
    else:  # s <= 0 < r
        lo = max(lo, 1.0 - s / r)
    f = lambda x: _exp_root_fn(x, r, s, t)  # noqa: E731
    candidates = [np.array([min(r, 0.0), 0.0, max(t, 0.0)]), np.zeros(3)]
    if s > 0 and r / s < 300.0:
        # raise t onto the cone; wins when rho = r/s lies beyond the clamp
        candidates.append(np.array([r, s, max(t, s * math.exp(r / s), math.ulp(0.0))]))
    if lo < hi:
        a, b = lo, hi
        try:
            fa, fb = f(a), f(b)
            if fa > 0 or fb < 0:
                # nudge inside the bracket where the endpoint is degenerate
                eps = 1e-12 * max(1.0, abs(a), abs(b))
                a, b = a + eps, b - eps
                fa, fb = f(a), f(b)
            if fa <= 0 <= fb:
                rho = brentq(f, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
                d = np.array([rho, 1.0, math.exp(rho)])
                y = (d @ (r, s, t)) / (d @ d)    # exact scale along the ray: residual is orthogonal
                if y > 0:
                    candidates.append(y * d)
        except (OverflowError, ValueError):
            pass
    vv = np.array([r, s, t])
    best = min(candidates, key=lambda p: float(np.sum((p - vv) ** 2)))
    return best


def proj_exp_dual(v: np.ndarray) -> np.ndarray:
    """Moreau: P_{K*}(v) = v + P_K(-v)."""
    return v + proj_exp(-v)


def proj_soc_batch(V: np.ndarray) -> np.ndarray:
    """Row-wise second-order projection of a (count, dim) array."""
    t, X = V[:, 0], V[:, 1:]
    nx = np.linalg.norm(X, axis=1)
    out = V.copy()
    zero = nx <= -t
    mid = (nx > np.abs(t))
    out[zero] = 0.0
    a = 0.5 * (t[mid] + nx[mid])
    out[mid, 0] = a
    out[mid, 1:] = X[mid] * (a / nx[mid])[:, None]
    return out


class ConeLayout:
    """Index bookkeeping for vectorized projections onto the product cone."""

    def __init__(self, p: ConicProblem) -> None:
        self.zero = slice(0, p.n_zero)
        self.nonneg = slice(p.n_zero, p.n_zero + p.n_nonneg)
        start = p.n_zero + p.n_nonneg
        by_dim: dict[int, list[np.ndarray]] = {}
        for d in p.soc_dims:
            by_dim.setdefault(d, []).append(np.arange(start, start + d))
            start += d
        self.soc = {d: np.array(ix) for d, ix in by_dim.items()}
        self.exp = start + np.arange(3 * p.n_exp).reshape(-1, 3)

    def primal(self, s: np.ndarray) -> np.ndarray:
        out = s.copy()
        out[self.zero] = 0.0
        out[self.nonneg] = np.maximum(s[self.nonneg], 0.0)
        for ix in self.soc.values():
            out[ix] = proj_soc_batch(s[ix])
        for ix in self.exp:
            out[ix] = proj_exp(s[ix])
        return out

    def dual(self, y: np.ndarray) -> np.ndarray:
        out = y.copy()
        out[self.nonneg] = np.maximum(y[self.nonneg], 0.0)
        for ix in self.soc.values():
            out[ix] = proj_soc_batch(y[ix])
        for ix in self.exp:
            out[ix] = proj_exp_dual(y[ix])
        return out


def project_primal(p: ConicProblem, s: np.ndarray) -> np.ndarray:
    return ConeLayout(p).primal(s)


def project_dual(p: ConicProblem, y: np.ndarray) -> np.ndarray:
    return ConeLayout(p).dual(y)
