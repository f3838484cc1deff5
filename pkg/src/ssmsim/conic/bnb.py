"""Best-first branch-and-bound over the binary variables of a conic program."""

from __future__ import annotations

import heapq
import itertools
from typing import Callable, Sequence

import numpy as np

from .problem import ConicProblem, ConicSolution

Relaxation = Callable[[ConicProblem], ConicSolution]


def _fractional(x: np.ndarray, idx: np.ndarray, tol: float) -> tuple[int, float]:
    """Most fractional binary (index into ``idx``) and its distance from 0.5."""
    vals = x[idx]
    dist = np.abs(vals - 0.5)
    i = int(np.argmin(dist))
    frac = min(vals[i], 1.0 - vals[i])
    return (i, dist[i]) if frac > tol else (-1, 0.5)


def branch_and_bound(p: ConicProblem, relax: Relaxation, tol_gap: float = 1e-6,
                     max_nodes: int = 1_000_000, int_tol: float = 1e-5,
                     hints: Sequence[dict[int, int]] = ()) -> ConicSolution:
    """Maximize over the binaries of ``p``.

    ``hints`` are complete 0/1 assignments the caller expects to be good;
    each is solved once up front as a candidate incumbent.
    """
    idx = p.binary_idx
    root = relax(p)
    if root.status == "infeasible":
        return ConicSolution("infeasible", root.x, np.nan, nodes=1)
    if root.status == "unbounded":
        return ConicSolution("unbounded", root.x, np.inf, nodes=1)
    if not root.ok:
        return ConicSolution(root.status, root.x, np.nan, nodes=1)

    best: ConicSolution | None = None
    best_fix: dict[int, int] = {}

    def consider(sol: ConicSolution, fix: dict[int, int]) -> None:
        nonlocal best, best_fix
        if sol.ok and (best is None or sol.objective > best.objective):
            best, best_fix = sol, fix

    # incumbents: round the root two ways and re-solve with every binary pinned;
    # keeping only the near-certain ones often survives coupled side constraints
    tried: list[dict[int, int]] = []
    candidates = [{int(j): int(root.x[j] >= thr) for j in idx} for thr in (0.5, 1.0 - 1e-4)]
    for fix in candidates + [{int(j): int(v) for j, v in h.items()} for h in hints]:
        if fix not in tried:
            tried.append(fix)
            consider(relax(p.with_fixings(fix)), fix)

    counter = itertools.count()
    heap: list = []
    nodes = 1 + len(tried)
    if root.ok:
        heapq.heappush(heap, (-root.objective, next(counter), {}, root))
    interrupted = -np.inf
    while heap:
        neg_bound, _, fix, sol = heapq.heappop(heap)
        bound = -neg_bound
        if best is not None and bound <= best.objective + tol_gap:
            heap.clear()
            break
        i, _ = _fractional(sol.x, idx, int_tol)
        if i < 0:
            # relaxation already integral: snap and confirm
            snap = {int(j): int(round(sol.x[j])) for j in idx}
            if len(fix) == len(idx):
                consider(sol, fix)
            else:
                nodes += 1
                consider(relax(p.with_fixings(snap)), snap)
            continue
        j = int(idx[i])
        for val in (1, 0):
            if nodes >= max_nodes:
                break
            child_fix = dict(fix)
            child_fix[j] = val
            child = relax(p.with_fixings(child_fix))
            nodes += 1
            if not child.ok:
                continue
            if best is not None and child.objective <= best.objective + tol_gap:
                continue
            heapq.heappush(heap, (-child.objective, next(counter), child_fix, child))
        if nodes >= max_nodes:
            interrupted = bound
            break

    open_bound = max([-h[0] for h in heap] + [interrupted])
    if best is None:
        status = "iteration-limit" if np.isfinite(open_bound) else "infeasible"
        return ConicSolution(status, root.x, np.nan, nodes=nodes,
                             bound=open_bound if np.isfinite(open_bound) else None)
    bound = max(open_bound, best.objective)
    gap = bound - best.objective
    status = "optimal" if gap <= tol_gap else "iteration-limit"
    x = best.x.copy()
    for j, v in best_fix.items():
        x[j] = float(v)
    return ConicSolution(status, x, best.objective, best.primal_res, best.dual_res, best.gap,
                         best.iterations, best.y, bound=bound, mip_gap=gap, nodes=nodes)
