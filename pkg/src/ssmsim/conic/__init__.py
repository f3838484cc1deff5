"""Conic programming: problem model, solvers and branch-and-bound.

Two continuous backends are available. ``"admm"`` is the built-in
operator-splitting method on the homogeneous self-dual embedding;
``"clarabel"`` calls the Clarabel interior-point solver and reaches the
tight tolerances the outer successive-approximation loop likes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from . import admm, backend_clarabel
from .bnb import branch_and_bound
from .problem import ConeError, ConicProblem, ConicSolution, ProblemBuilder, residuals

__all__ = [
    "ConeError", "ConicProblem", "ConicSolution", "ProblemBuilder", "SolverSettings",
    "residuals", "solve_continuous", "solve_mixed",
]


@dataclass(frozen=True)
class SolverSettings:
    backend: str = "admm"
    tol_feas: float = 1e-6
    tol_gap: float = 1e-6
    max_iter: int = 100_000
    max_nodes: int = 1_000_000
    mip_gap: float = 1e-6

    def __post_init__(self) -> None:
        if self.backend not in ("admm", "clarabel"):
            raise ValueError(f"unknown backend {self.backend!r}")


def solve_continuous(p: ConicProblem, settings: SolverSettings = SolverSettings()
                     ) -> ConicSolution:
    """Solve with the binaries relaxed to [0, 1]."""
    if settings.backend == "clarabel":
        return backend_clarabel.solve(p, tol=min(settings.tol_feas, settings.tol_gap))
    return admm.solve(p, admm.AdmmSettings(tol_feas=settings.tol_feas, tol_gap=settings.tol_gap,
                                           max_iter=settings.max_iter))


def solve_mixed(p: ConicProblem, settings: SolverSettings = SolverSettings(),
                hints: Sequence[dict[int, int]] = ()) -> ConicSolution:
    if len(p.binary_idx) == 0:
        return solve_continuous(p, settings)
    return branch_and_bound(p, lambda q: solve_continuous(q, settings),
                            tol_gap=settings.mip_gap, max_nodes=settings.max_nodes, hints=hints)
