"""Interior-point backend delegating to Clarabel."""

from __future__ import annotations

import clarabel
import numpy as np
import scipy.sparse as sp

from .problem import ConicProblem, ConicSolution, residuals

# "Almost" outcomes only meet Clarabel's reduced tolerances. They are a last
# resort: used only when no attempt ends cleanly and our own residual check
# (``ALMOST_TOL``) passes.
ALMOST_TOL = 1e-6
_STATUS = {
    "Solved": "optimal",
    "PrimalInfeasible": "infeasible",
    "DualInfeasible": "unbounded",
}


# Tried in order until one ends with a definite status. Large slack penalties
# give duals around 1e7, where the default KKT regularization (1e-8) is
# sometimes too coarse; lighter regularization in turn occasionally stalls.
_ATTEMPTS = (
    {"static_regularization_constant": 1e-10},
    {},
    {"static_regularization_constant": 1e-10, "max_step_fraction": 0.95},
    {"static_regularization_constant": 1e-10, "equilibrate_max_iter": 50},
)


def _cones(p: ConicProblem) -> list:
    cones = []
    if p.n_zero:
        cones.append(clarabel.ZeroConeT(p.n_zero))
    if p.n_nonneg:
        cones.append(clarabel.NonnegativeConeT(p.n_nonneg))
    cones += [clarabel.SecondOrderConeT(d) for d in p.soc_dims]
    cones += [clarabel.ExponentialConeT() for _ in range(p.n_exp)]
    return cones


def solve(p: ConicProblem, tol: float = 1e-8, max_iter: int = 200) -> ConicSolution:
    n = p.n_vars
    P = sp.csc_matrix((n, n))
    A = (-p.A).tocsc()
    b = p.b.astype(float)
    iters = 0
    almost = None
    for extra in _ATTEMPTS:
        s = clarabel.DefaultSettings()
        s.verbose = False
        s.tol_feas = s.tol_gap_abs = s.tol_gap_rel = tol
        s.max_iter = max_iter
        s.presolve_enable = False   # keep row indices stable for the duals
        for k, v in extra.items():
            setattr(s, k, v)
        sol = clarabel.DefaultSolver(P, -p.c, A, b, _cones(p), s).solve()
        iters += int(sol.iterations)
        name = str(sol.status).split(".")[-1]
        status = _STATUS.get(name, "iteration-limit")
        if status != "iteration-limit":
            break
        if name.startswith("Almost") and almost is None:
            almost = sol
    x = np.asarray(sol.x)
    y = np.asarray(sol.z)
    if status == "infeasible":
        return ConicSolution(status, x, np.nan, iterations=iters)
    if status == "unbounded":
        return ConicSolution(status, x, np.inf, iterations=iters)
    if status == "iteration-limit" and almost is not None:
        xa, ya = np.asarray(almost.x), np.asarray(almost.z)
        res = residuals(p, xa, ya)
        if max(res) <= ALMOST_TOL:
            return ConicSolution("optimal", xa, float(p.c @ xa), *res, iterations=iters, y=ya)
    pres, dres, gap = residuals(p, x, y)
    return ConicSolution(status, x, float(p.c @ x), pres, dres, gap, iterations=iters, y=y)
