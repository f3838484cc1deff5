"""Operator-splitting solver on the homogeneous self-dual embedding.

Internally the problem is put in the standard form

    minimize q^T x   s.t.  A' x + s = b,  s in K

with ``q = -c`` and ``A' = -A``. The embedding variables are
``u = (x, y, tau)`` and ``v = (r, s, kappa)``; every iteration does one
linear solve with the fixed matrix ``I + Q`` (factored once per ``A``) and
one projection onto ``R^n x K* x R_+``.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .cones import ConeLayout
from .problem import ConicProblem, ConicSolution


@dataclass(frozen=True)
class AdmmSettings:
    tol_feas: float = 1e-6
    tol_gap: float = 1e-6
    max_iter: int = 100_000
    alpha: float = 1.5          # over-relaxation
    check_every: int = 10
    ruiz_passes: int = 15


class _Factor:
    """Scaling and factorization that depend on ``A`` and the cone layout only."""

    def __init__(self, p: ConicProblem, passes: int) -> None:
        m, n = p.A.shape
        Ap = (-p.A).tocsc().astype(float)
        self.layout = ConeLayout(p)
        blocks = self._row_blocks(p)
        D = np.ones(m)
        E = np.ones(n)
        S = Ap.copy()
        for _ in range(passes):
            rn = np.sqrt(np.asarray(abs(S).max(axis=1).todense()).ravel()) if m else np.zeros(0)
            cn = np.sqrt(np.asarray(abs(S).max(axis=0).todense()).ravel())
            # rows of a non-separable cone share one factor
            for ix in blocks:
                rn[ix] = rn[ix].max()
            rn = np.where(rn < 1e-8, 1.0, rn)
            cn = np.where(cn < 1e-8, 1.0, cn)
            D = np.clip(D / rn, 1e-4, 1e4)
            E = np.clip(E / cn, 1e-4, 1e4)
            S = (sp.diags(D) @ Ap @ sp.diags(E)).tocsc()
        self.D, self.E, self.A = D, E, S
        self.AT = S.T.tocsc()
        K = (sp.identity(n, format="csc") + (self.AT @ S)).tocsc()
        self.lu = spla.splu(K)

    @staticmethod
    def _row_blocks(p: ConicProblem) -> list[np.ndarray]:
        out = []
        start = p.n_zero + p.n_nonneg
        for d in p.soc_dims:
            out.append(np.arange(start, start + d))
            start += d
        for _ in range(p.n_exp):
            out.append(np.arange(start, start + 3))
            start += 3
        return out

    def solve_m(self, a: np.ndarray, bb: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Solve [[I, A^T], [-A, I]] [x; y] = [a; bb]."""
        x = self.lu.solve(a - self.AT @ bb)
        y = bb + self.A @ x
        return x, y


_CACHE: "OrderedDict[int, tuple[sp.csr_matrix, tuple, _Factor]]" = OrderedDict()
_CACHE_SIZE = 8


def _factor(p: ConicProblem, passes: int) -> _Factor:
    key = id(p.A)
    sig = (p.n_zero, p.n_nonneg, p.soc_dims, p.n_exp, passes)
    hit = _CACHE.get(key)
    if hit is not None and hit[0] is p.A and hit[1] == sig:
        _CACHE.move_to_end(key)
        return hit[2]
    f = _Factor(p, passes)
    _CACHE[key] = (p.A, sig, f)
    while len(_CACHE) > _CACHE_SIZE:
        _CACHE.popitem(last=False)
    return f


def _metrics(p: ConicProblem, x, s, y) -> tuple[float, float, float]:
    q = -p.c
    pres = np.linalg.norm(-(p.A @ x) + s - p.b, np.inf) / (1.0 + np.linalg.norm(p.b, np.inf))
    dres = np.linalg.norm(-(p.A.T @ y) + q, np.inf) / (1.0 + np.linalg.norm(q, np.inf))
    pobj, dobj = q @ x, -(p.b @ y)
    gap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
    return float(pres), float(dres), float(gap)


def solve(p: ConicProblem, settings: AdmmSettings = AdmmSettings(),
          warm: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None) -> ConicSolution:
    """Solve the continuous relaxation (binaries keep only their 0..1 rows)."""
    m, n = p.A.shape
    f = _factor(p, settings.ruiz_passes)
    D, E = f.D, f.E
    bs = D * p.b
    qs = E * (-p.c)
    beta = 1.0 / max(np.linalg.norm(bs, np.inf), 1e-6)
    gamma = 1.0 / max(np.linalg.norm(qs, np.inf), 1e-6)
    bs = bs * beta
    qs = qs * gamma

    # fixed part of the linear system
    hx, hy = qs, bs
    gx, gy = f.solve_m(hx, hy)
    hg = 1.0 + hx @ gx + hy @ gy

    if warm is not None:
        x0, y0, s0 = warm
        ux, uy = x0 / E * beta, y0 / D * gamma
        vs = s0 * D * beta
    else:
        ux, uy, vs = np.zeros(n), np.zeros(m), np.zeros(m)
    ut, vr, vk = 1.0, np.zeros(n), 0.0
    a = settings.alpha
    lay = f.layout

    best: tuple[float, np.ndarray, np.ndarray, np.ndarray, tuple] | None = None
    status = "iteration-limit"
    it = 0
    for it in range(1, settings.max_iter + 1):
        # (I + Q) u~ = u + v
        rx, ry, rt = ux + vr, uy + vs, ut + vk
        px, py = f.solve_m(rx, ry)
        tt = (rt + hx @ px + hy @ py) / hg
        tx, ty = px - tt * gx, py - tt * gy
        # relaxation
        tx = a * tx + (1 - a) * ux
        ty = a * ty + (1 - a) * uy
        tt = a * tt + (1 - a) * ut
        # projection onto R^n x K* x R+
        nx_, ny_, nt_ = tx - vr, lay.dual(ty - vs), max(tt - vk, 0.0)
        vr = vr - tx + nx_
        vs = vs - ty + ny_
        vk = vk - tt + nt_
        ux, uy, ut = nx_, ny_, nt_

        if it % settings.check_every and it != settings.max_iter:
            continue
        if ut > 1e-12:
            x = E * ux / (ut * beta)
            y = D * uy / (ut * gamma)
            s = vs / D / (ut * beta)
            pres, dres, gap = _metrics(p, x, s, y)
            score = max(pres, dres, gap)
            if best is None or score < best[0]:
                best = (score, x, y, s, (pres, dres, gap))
            if pres <= settings.tol_feas and dres <= settings.tol_feas and gap <= settings.tol_gap:
                status = "optimal"
                break
        # certificates
        yy = D * uy / gamma
        by = p.b @ yy
        if by < 0 and np.linalg.norm(p.A.T @ yy, np.inf) <= settings.tol_feas * -by \
                and np.linalg.norm(yy - lay.dual(yy), np.inf) <= settings.tol_feas * -by:
            status = "infeasible"
            break
        xx = E * ux / beta
        qx = -(p.c @ xx)
        if qx < 0:
            ss = vs / D / beta
            if np.linalg.norm(-(p.A @ xx) + ss, np.inf) <= settings.tol_feas * -qx:
                status = "unbounded"
                break

    if status in ("infeasible", "unbounded") or best is None:
        return ConicSolution(status=status if best is not None or status != "iteration-limit"
                             else "iteration-limit",
                             x=np.full(n, np.nan) if best is None else best[1],
                             objective=np.nan if status == "infeasible" else
                             (np.inf if status == "unbounded" else np.nan),
                             iterations=it)
    _, x, y, s, (pres, dres, gap) = best
    return ConicSolution(status=status, x=x, objective=float(p.c @ x), primal_res=pres,
                         dual_res=dres, gap=gap, iterations=it, y=y)
