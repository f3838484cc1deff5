"""Real conic programs in the form ``maximize c^T x  s.t.  A x + b in K``.

K is a product of zero, nonnegative, second-order and exponential cones,
stored in that row order. The exponential cone is
``cl{(x, y, z) : y > 0, y exp(x / y) <= z}``; a second-order block
``(t, x_1, ..., x_d)`` means ``||x|| <= t``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import scipy.sparse as sp

KINDS = ("zero", "nonneg", "soc", "exp")


class ConeError(ValueError):
    pass


@dataclass
class ConicProblem:
    c: np.ndarray                 # objective (maximize)
    A: sp.csr_matrix              # (m, n)
    b: np.ndarray                 # (m,)
    n_zero: int
    n_nonneg: int
    soc_dims: tuple[int, ...]
    n_exp: int
    binary_idx: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    bin_lower_rows: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    bin_upper_rows: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    var_names: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        m, n = self.A.shape
        if len(self.c) != n or len(self.b) != m:
            raise ConeError("dimension mismatch between c, A and b")
        if any(d < 2 for d in self.soc_dims):
            raise ConeError("second-order blocks need dimension >= 2")
        if self.n_zero + self.n_nonneg + sum(self.soc_dims) + 3 * self.n_exp != m:
            raise ConeError("cone dimensions do not add up to the row count")

    @property
    def n_vars(self) -> int:
        return self.A.shape[1]

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    def var(self, name: str) -> np.ndarray:
        return self.var_names[name]

    def with_fixings(self, fix: dict[int, int]) -> "ConicProblem":
        """Copy with binaries pinned by tightening their bound rows."""
        b = self.b.copy()
        pos = {int(j): i for i, j in enumerate(self.binary_idx)}
        for j, val in fix.items():
            i = pos[j]
            if val:
                b[self.bin_lower_rows[i]] = -1.0   # x - 1 >= 0
            else:
                b[self.bin_upper_rows[i]] = 0.0    # -x >= 0
        return ConicProblem(self.c, self.A, b, self.n_zero, self.n_nonneg, self.soc_dims,
                            self.n_exp, self.binary_idx, self.bin_lower_rows,
                            self.bin_upper_rows, self.var_names)

    def cone_slices(self) -> list[tuple[str, slice]]:
        out, i = [], 0
        if self.n_zero:
            out.append(("zero", slice(i, i + self.n_zero)))
            i += self.n_zero
        if self.n_nonneg:
            out.append(("nonneg", slice(i, i + self.n_nonneg)))
            i += self.n_nonneg
        for d in self.soc_dims:
            out.append(("soc", slice(i, i + d)))
            i += d
        for _ in range(self.n_exp):
            out.append(("exp", slice(i, i + 3)))
            i += 3
        return out

    def to_json(self) -> dict[str, Any]:
        A = self.A.tocoo()
        return {
            "n_vars": self.n_vars,
            "objective": "maximize",
            "c": self.c.tolist(),
            "A": {"shape": list(A.shape), "row": A.row.tolist(), "col": A.col.tolist(),
                  "val": A.data.tolist()},
            "b": self.b.tolist(),
            "cones": {"zero": self.n_zero, "nonneg": self.n_nonneg,
                      "soc": list(self.soc_dims), "exp": self.n_exp},
            "binary_idx": self.binary_idx.tolist(),
            "variables": {k: v.tolist() for k, v in self.var_names.items()},
        }

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json()), encoding="utf-8")


class ProblemBuilder:
    """Incremental construction of a :class:`ConicProblem`.

    Every row is an affine expression given by column indices, coefficients
    and a constant. Rows are grouped into cone blocks.
    """

    def __init__(self) -> None:
        self.n = 0
        self.names: dict[str, np.ndarray] = {}
        self.binary: list[int] = []
        self.objective: dict[int, float] = {}
        self._blocks: dict[str, list[tuple[list, list, list, np.ndarray]]] = {
            k: [] for k in KINDS}

    def var(self, name: str, size: int = 1, binary: bool = False) -> np.ndarray:
        idx = np.arange(self.n, self.n + size)
        self.n += size
        self.names[name] = idx
        if binary:
            self.binary.extend(idx.tolist())
        return idx

    def maximize(self, cols: Sequence[int] | np.ndarray, coefs) -> None:
        cols = np.atleast_1d(cols)
        coefs = np.broadcast_to(np.asarray(coefs, dtype=float), cols.shape)
        for j, v in zip(cols, coefs):
            self.objective[int(j)] = self.objective.get(int(j), 0.0) + float(v)

    def add(self, kind: str, rows: Sequence[tuple[Any, Any, float]]) -> None:
        """Append one cone block; for ``zero``/``nonneg`` each row is its own cone."""
        if kind not in KINDS:
            raise ConeError(f"unknown cone kind {kind!r}")
        if kind == "exp" and len(rows) != 3:
            raise ConeError("exponential cone blocks have dimension 3")
        if kind == "soc" and len(rows) < 2:
            raise ConeError("second-order blocks need dimension >= 2")
        ri, ci, vi, const = [], [], [], np.empty(len(rows))
        for r, (cols, coefs, c0) in enumerate(rows):
            cols = np.atleast_1d(np.asarray(cols, dtype=int))
            coefs = np.broadcast_to(np.asarray(coefs, dtype=float), cols.shape)
            ri.append(np.full(len(cols), r))
            ci.append(cols)
            vi.append(coefs)
            const[r] = c0
        self._blocks[kind].append((ri, ci, vi, const))

    def add_matrix(self, kind: str, A: np.ndarray | sp.spmatrix, cols: np.ndarray,
                   const: np.ndarray) -> None:
        """Append rows ``A @ x[cols] + const`` as one block (or many scalar rows)."""
        A = sp.coo_matrix(A)
        const = np.asarray(const, dtype=float)
        if kind == "exp" and A.shape[0] != 3:
            raise ConeError("exponential cone blocks have dimension 3")
        if kind == "soc" and A.shape[0] < 2:
            raise ConeError("second-order blocks need dimension >= 2")
        self._blocks[kind].append(([A.row], [np.asarray(cols)[A.col]], [A.data], const))

    def build(self) -> ConicProblem:
        nb = len(self.binary)
        if nb:
            bi = np.array(self.binary)
            # x >= 0 then 1 - x >= 0 for every binary
            rows = [(int(j), 1.0, 0.0) for j in bi] + [(int(j), -1.0, 1.0) for j in bi]
            self.add("nonneg", rows)
        rr, cc, vv, bb = [], [], [], []
        offset = 0
        soc_dims: list[int] = []
        counts = {k: 0 for k in KINDS}
        bin_start = None
        for kind in KINDS:
            for bi_, (ri, ci, vi, const) in enumerate(self._blocks[kind]):
                if kind == "nonneg" and nb and bi_ == len(self._blocks["nonneg"]) - 1:
                    bin_start = offset
                for r, c, v in zip(ri, ci, vi):
                    rr.append(np.asarray(r) + offset)
                    cc.append(c)
                    vv.append(v)
                bb.append(const)
                offset += len(const)
                counts[kind] += len(const)
                if kind == "soc":
                    soc_dims.append(len(const))
        A = sp.csr_matrix(
            (np.concatenate(vv) if vv else np.zeros(0),
             (np.concatenate(rr) if rr else np.zeros(0, int),
              np.concatenate(cc) if cc else np.zeros(0, int))),
            shape=(offset, self.n))
        A.sum_duplicates()
        c = np.zeros(self.n)
        for j, v in self.objective.items():
            c[j] = v
        lower = upper = np.zeros(0, dtype=int)
        if nb:
            lower = bin_start + np.arange(nb)
            upper = bin_start + nb + np.arange(nb)
        return ConicProblem(
            c=c, A=A, b=np.concatenate(bb) if bb else np.zeros(0),
            n_zero=counts["zero"], n_nonneg=counts["nonneg"], soc_dims=tuple(soc_dims),
            n_exp=counts["exp"] // 3, binary_idx=np.array(self.binary, dtype=int),
            bin_lower_rows=lower, bin_upper_rows=upper, var_names=dict(self.names))


@dataclass
class ConicSolution:
    status: str                    # optimal | infeasible | unbounded | iteration-limit
    x: np.ndarray
    objective: float
    primal_res: float = np.nan
    dual_res: float = np.nan
    gap: float = np.nan
    iterations: int = 0
    y: np.ndarray | None = None
    # mixed-integer solves
    bound: float | None = None
    mip_gap: float | None = None
    nodes: int = 0

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


def residuals(p: ConicProblem, x: np.ndarray, y: np.ndarray | None
              ) -> tuple[float, float, float]:
    """Relative primal residual, dual residual and duality gap.

    The primal residual is the distance of ``A x + b`` from K. ``y`` is the
    multiplier of the standard form ``min -c^T x, -A x + s = b, s in K``, so
    dual feasibility reads ``A^T y + c = 0`` with ``y in K*``.
    """
    from .cones import project_primal

    s = p.A @ x + p.b
    ps = project_primal(p, s)
    pres = np.linalg.norm(s - ps, np.inf) / (1.0 + max(np.linalg.norm(p.b, np.inf),
                                                       np.linalg.norm(s, np.inf)))
    if y is None:
        return float(pres), np.nan, np.nan
    # standard form: minimize q^T x, q = -c; A' = -A, b' = b; dual: A'^T y + q = 0
    aty = -(p.A.T @ y)
    dres = np.linalg.norm(aty - p.c, np.inf) / (1.0 + max(np.linalg.norm(p.c, np.inf),
                                                         np.linalg.norm(aty, np.inf)))
    pobj = -p.c @ x
    dobj = p.b @ y
    gap = abs(pobj + dobj) / (1.0 + abs(pobj) + abs(dobj))
    return float(pres), float(dres), float(gap)
