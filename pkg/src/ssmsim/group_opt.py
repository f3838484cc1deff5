"""Per-group rate optimization: convexified conic program and the SCA loop.

Inside the conic program every quantity is normalized so the numbers stay
moderate:

* channels are multiplied by ``sqrt(P / (B N0))`` and then divided by a
  per-UE scale ``rho_k``, so the SNR of UE k is ``rho_k^2 ||a_k||^2`` with
  ``a_k = h_k + sum_l H_{l,k} z_{l,k}`` and ``||a_k|| <= 1`` for ``|z| <= 1``;
* rates are in bit/s/Hz and ``r`` is the square root of the common rate;
* the harvesting rows of G are divided by their largest norm ``g_ref``, so
  ``t_{l,k,m} = |g_m^H a_k|^2`` and the received power is ``kappa sum_m t / d``
  with ``kappa = P g_ref^2``;
* consumption ``u`` is measured in units of one element's draw ``P^Rf`` and
  ``v = c_v (q2 kappa sum t + q3 d) >= 0``, summing over harvesting elements,
  with ``c_v`` chosen so that ``v <= Mbar``.

Self-sustainability ``P^Hr >= alpha Mbar P^Rf`` then reads
``u >= alpha Mbar`` together with ``u v <= Q sum t``, where
``Q = c_v q1 kappa / P^Rf``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import scipy.sparse as sp

from . import link
from .channel import ChannelSet
from .conic import ConicProblem, ProblemBuilder, SolverSettings, solve_mixed
from .model import CoverageGroup, Preset, ScenarioConfig
from .timeshare import equal_rate_split

log = logging.getLogger(__name__)

MODES = ("ssm", "ris", "sms")
PHASE_EPS = 1e-8
POWER_RTOL = 1e-6


class MissingStateError(ValueError):
    pass


# --- data --------------------------------------------------------------------

@dataclass
class GroupProblemData:
    """Channels and constants of one coverage group (physical units)."""

    group: CoverageGroup
    h: np.ndarray                 # (K_i, N)
    G: np.ndarray                 # (L_i, M, N)
    g: np.ndarray                 # (L_i, K_i, M)
    presets: list[Preset]         # one per local surface
    P: float
    B: float
    N0: float
    p_reflect: float
    q1: float
    q2: float
    q3: float
    tau_min: float

    def __post_init__(self) -> None:
        L, K = self.g.shape[:2]
        if self.h.shape[0] != K or self.G.shape[0] != L or len(self.presets) != L:
            raise ValueError("inconsistent group data shapes")
        sc = np.sqrt(self.P / (self.B * self.N0))
        norms = np.linalg.norm(self.G, axis=2)
        self.g_ref = float(norms.max()) if norms.size and norms.max() > 0 else 1.0
        self.kappa = self.P * self.g_ref ** 2
        self.m_bar = np.array([p.m_bar for p in self.presets], dtype=int)
        self.beta = np.array([p.beta for p in self.presets], dtype=float)   # (L, M)
        hn = sc * self.h
        # Hn[l, k] = sc * G_l^T diag(g_{l,k}), shape (N, M)
        Hn = sc * np.einsum("lmn,lkm->lknm", self.G, self.g)
        # per-UE bound on ||a_k|| over unit-modulus responses; a_k / rho_k has norm <= 1
        reach = np.linalg.norm(hn, axis=1)
        reach = reach + np.einsum("lkj,lj->k", np.linalg.norm(Hn, axis=2), self.beta)
        self.rho = np.where(reach > 0, reach, 1.0)
        self.hn = hn / self.rho[:, None]
        self.Hn = Hn / self.rho[None, :, None, None]
        self.Gn = self.G / self.g_ref

    @classmethod
    def from_channels(cls, cs: ChannelSet, group: CoverageGroup, presets: list[Preset],
                      cfg: ScenarioConfig) -> "GroupProblemData":
        """``presets`` is indexed by global SSM id."""
        ls, ks = list(group.ssm_ids), list(group.ue_ids)
        return cls(group=group, h=cs.h[ks], G=cs.G[ls], g=cs.g[np.ix_(ls, ks)],
                   presets=[presets[l] for l in ls], P=cfg.tx_power, B=cfg.bandwidth,
                   N0=cfg.noise_psd, p_reflect=cfg.p_reflect, q1=cfg.q1, q2=cfg.q2,
                   q3=cfg.q3, tau_min=cfg.tau_min)

    @property
    def n_ue(self) -> int:
        return self.h.shape[0]

    @property
    def n_ssm(self) -> int:
        return self.G.shape[0]

    @property
    def n_elem(self) -> int:
        return self.G.shape[1]

    @property
    def n_bs(self) -> int:
        return self.h.shape[1]

    @property
    def reachable(self) -> np.ndarray:
        """UEs with a nonzero direct or reflected channel, shape (K,)."""
        out = np.linalg.norm(self.h, axis=1) > 0
        for l, p in enumerate(self.presets):
            out |= np.linalg.norm(self.Hn[l][:, :, p.reflect_idx], axis=(1, 2)) > 0
        return out

    # physical derived quantities
    def H(self, l: int, k: int) -> np.ndarray:
        return self.G[l].T * self.g[l, k][np.newaxis, :]

    def H_stacked(self, k: int) -> np.ndarray:
        if self.n_ssm == 0:
            return np.zeros((self.n_bs, 0), dtype=complex)
        return np.hstack([self.H(l, k) for l in range(self.n_ssm)])

    def A(self, k: int) -> np.ndarray:
        Hk = self.H_stacked(k)
        return Hk.conj().T @ Hk

    def b(self, k: int) -> np.ndarray:
        return self.H_stacked(k).conj().T @ self.h[k]

    def c(self, k: int) -> float:
        return float(np.vdot(self.h[k], self.h[k]).real)

    def A_hat(self, l: int, k: int, m: int) -> np.ndarray:
        q = self.H_stacked(k).conj().T @ self.G[l, m].conj()
        return np.outer(q, q.conj())

    def b_hat(self, l: int, k: int, m: int) -> np.ndarray:
        q = self.H_stacked(k).conj().T @ self.G[l, m].conj()
        return q * np.vdot(self.G[l, m].conj(), self.h[k])

    def c_hat(self, l: int, k: int, m: int) -> float:
        return float(abs(np.vdot(self.G[l, m].conj(), self.h[k])) ** 2)

    # normalized helpers
    def effective(self, z: np.ndarray) -> np.ndarray:
        """Normalized effective channels (K, N) for responses z of shape (L, K, M).

        The SNR of UE k is ``rho_k^2 ||a_k||^2``.
        """
        return self.hn + np.einsum("lknm,lkm->kn", self.Hn, z)

    def harvest_amplitudes(self, a: np.ndarray) -> np.ndarray:
        """y[l, k, m] = g_m^H a_k with normalized rows, shape (L, K, M)."""
        return np.einsum("lmn,kn->lkm", self.Gn.conj(), a)


def big_m(data: GroupProblemData) -> np.ndarray:
    """Upper bound on ``P |g_{l,m}^H (h_k + H_k z)|^2`` over ``||z||_inf <= 1``.

    Shape (L, K, M), physical units.
    """
    L, K, M = data.n_ssm, data.n_ue, data.n_elem
    out = np.zeros((L, K, M))
    gn = np.linalg.norm(data.G, axis=2)                 # (L, M)
    for k in range(K):
        reach = np.linalg.norm(data.h[k])
        for l2 in range(L):
            reach += np.linalg.norm(data.H(l2, k), axis=0).sum()
        out[:, k, :] = data.P * (gn * reach) ** 2
    return out


# --- SCA state -----------------------------------------------------------------

@dataclass
class ScaState:
    z: np.ndarray            # (L, K, M) complex, zero outside reflecting indices
    u: np.ndarray            # (L, K)
    v: np.ndarray            # (L, K)
    c_v: np.ndarray          # (L, K)
    bigm: np.ndarray         # (L, K, M), normalized units
    penalties: tuple[float, float, float]
    limit: int
    eps: int = 0


def _random_phases(data: GroupProblemData, rng: np.random.Generator, shared: bool) -> np.ndarray:
    L, K, M = data.n_ssm, data.n_ue, data.n_elem
    if shared:
        ph = rng.uniform(0.0, 2 * np.pi, size=(L, 1, M)).repeat(K, axis=1)
    else:
        ph = rng.uniform(0.0, 2 * np.pi, size=(L, K, M))
    return np.exp(1j * ph) * data.beta[:, None, :]


def aligned_phases(data: GroupProblemData, k: int, iters: int = 50) -> np.ndarray:
    """Reflecting phases (L, M) that locally maximize ||a_k||, by alternating
    each element's phase onto the current effective channel.

    Surfaces without harvesting elements can never be associated and keep z = 0.
    """
    powered = np.array([len(p.harvest_idx) > 0 for p in data.presets])
    mask = (data.beta == 1) & powered[:, None]                         # (L, M)
    Hk = data.Hn[:, k]                                                 # (L, N, M)
    if not mask.any():
        return np.zeros(mask.shape, complex)
    # start from the principal direction of the stacked cascaded channel
    Hs = np.hstack([Hk[l][:, mask[l]] for l in range(data.n_ssm)])
    _, _, vh = np.linalg.svd(Hs, full_matrices=False)
    z = np.zeros(mask.shape, complex)
    z[mask] = np.exp(1j * np.angle(vh[0].conj()))
    for _ in range(iters):
        a = data.hn[k] + np.einsum("lnm,lm->n", Hk, z)
        for l in range(data.n_ssm):
            for m in np.flatnonzero(mask[l]):
                rest = a - Hk[l][:, m] * z[l, m]
                c = np.vdot(Hk[l][:, m], rest)
                z[l, m] = np.exp(1j * np.angle(c)) if abs(c) > 0 else 1.0
                a = rest + Hk[l][:, m] * z[l, m]
    return z


def _harvest_state(data: GroupProblemData, z: np.ndarray, c_v: np.ndarray):
    """(T, d, v) of the exact physics at z, all normalized."""
    a = data.effective(z)
    y = data.harvest_amplitudes(a)
    T = np.sum((1 - data.beta[:, None, :]) * np.abs(y) ** 2, axis=2)       # (L, K)
    d = np.broadcast_to(np.sum(np.abs(a) ** 2, axis=1)[None, :], T.shape)
    v = c_v * (data.q2 * data.kappa * T + data.q3 * d)
    return T, d, v


def v_scale(data: GroupProblemData) -> np.ndarray:
    """c_v such that v <= Mbar whenever ||a|| <= 1 (always true after normalization)."""
    T_ref = np.sum((1 - data.beta) * np.linalg.norm(data.Gn, axis=2) ** 2, axis=1)   # (L,)
    den = data.q2 * data.kappa * T_ref + data.q3
    return np.repeat((data.m_bar / den)[:, None], data.n_ue, axis=1)


def init_state(data: GroupProblemData, cfg: ScenarioConfig, mode: str,
               rng: np.random.Generator, aligned: bool = False) -> ScaState:
    """Initial iterate at random phases, or at per-UE aligned phases."""
    if aligned and mode != "sms":
        z0 = np.stack([aligned_phases(data, k) for k in range(data.n_ue)], axis=1)
    else:
        z0 = _random_phases(data, rng, shared=(mode == "sms"))
    c_v = v_scale(data)
    _, _, v0 = _harvest_state(data, z0, c_v)
    # consumption of the reflecting area when associated
    u0 = np.repeat(data.m_bar[:, None].astype(float), data.n_ue, axis=1)
    scale = data.B * data.N0 * data.g_ref ** 2 * data.rho[None, :, None] ** 2
    return ScaState(z=z0, u=u0, v=v0, c_v=c_v, bigm=big_m(data) / scale,
                    penalties=tuple(cfg.penalties), limit=cfg.sca_rounds)


# --- cut helpers (shared by the builder and the tests) -------------------------

def gamma_cut(a0: np.ndarray, a: np.ndarray) -> float:
    """First-order minorant of ||a||^2 at a0."""
    return float(-np.vdot(a0, a0).real + 2 * np.vdot(a0, a).real)


def harvest_cut(y0: complex, y: complex) -> float:
    """First-order minorant of |y|^2 at y0."""
    return float(-abs(y0) ** 2 + 2 * (np.conj(y0) * y).real)


def ccp_cut(u0: float, v0: float, u: float, v: float) -> float:
    """First-order minorant of u^2 + v^2 at (u0, v0)."""
    return 2 * u0 * u - u0 ** 2 + 2 * v0 * v - v0 ** 2


# --- conic program ---------------------------------------------------------------

@dataclass
class P41Layout:
    mode: str
    zre: dict[tuple[int, int], np.ndarray]     # (l, k) -> columns of Re z on reflecting idx
    zim: dict[tuple[int, int], np.ndarray]
    alpha: np.ndarray | None                   # (L, K) columns
    tau: np.ndarray
    e: np.ndarray
    f: np.ndarray
    u: np.ndarray | None
    t: np.ndarray | None                       # (L, K, M)
    d: np.ndarray | None
    v: np.ndarray | None
    s: np.ndarray
    s1: np.ndarray | None                      # (L, K, M)
    s2: np.ndarray | None                      # (L, K)
    r: int
    gate: np.ndarray | None = None             # CCP relaxation constant per (l, k)


class _Rows:
    """COO accumulator for one block of affine rows over all n columns."""

    def __init__(self, nrows: int) -> None:
        self.nrows = nrows
        self.r: list[np.ndarray] = []
        self.c: list[np.ndarray] = []
        self.v: list[np.ndarray] = []
        self.const = np.zeros(nrows)

    def put(self, rows, cols, vals) -> None:
        rows, cols, vals = np.broadcast_arrays(np.asarray(rows), np.asarray(cols),
                                               np.asarray(vals, dtype=float))
        self.r.append(rows.ravel())
        self.c.append(cols.ravel())
        self.v.append(vals.ravel())

    def put_dense(self, row0: int, cols: np.ndarray, mat: np.ndarray) -> None:
        """Rows row0.. receive ``mat @ x[cols]``."""
        nr, nc = mat.shape
        rr = np.repeat(np.arange(row0, row0 + nr), nc)
        cc = np.tile(cols, nr)
        self.put(rr, cc, mat.ravel())

    def emit(self, b: ProblemBuilder, kind: str, n: int) -> None:
        if self.r:
            A = sp.coo_matrix((np.concatenate(self.v), (np.concatenate(self.r),
                                                        np.concatenate(self.c))),
                              shape=(self.nrows, n))
        else:
            A = sp.coo_matrix((self.nrows, n))
        b.add_matrix(kind, A, np.arange(n), self.const)


def _embed(Hc: np.ndarray) -> np.ndarray:
    """Real (2N, 2M) matrix mapping [Re z; Im z] to [Re Hc z; Im Hc z]."""
    return np.block([[Hc.real, -Hc.imag], [Hc.imag, Hc.real]])


def _cplx(v: np.ndarray) -> np.ndarray:
    return np.concatenate([v.real, v.imag])


def build_p41(data: GroupProblemData, state: ScaState | None, mode: str = "ssm"
              ) -> tuple[ConicProblem, P41Layout]:
    """Convexified group problem around the iterate held in ``state``."""
    if state is None:
        raise MissingStateError("build_p41 needs the previous iterate")
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    L, K, M, N = data.n_ssm, data.n_ue, data.n_elem, data.n_bs
    refl = [p.reflect_idx for p in data.presets]
    ssm = mode == "ssm"
    b = ProblemBuilder()

    # variables, in a fixed order
    zre: dict[tuple[int, int], np.ndarray] = {}
    zim: dict[tuple[int, int], np.ndarray] = {}
    for l in range(L):
        if mode == "sms":
            cols = b.var(f"z_{l}", 2 * len(refl[l]))
            for k in range(K):
                zre[l, k], zim[l, k] = cols[: len(refl[l])], cols[len(refl[l]):]
        else:
            for k in range(K):
                cols = b.var(f"z_{l}_{k}", 2 * len(refl[l]))
                zre[l, k], zim[l, k] = cols[: len(refl[l])], cols[len(refl[l]):]
    alpha = b.var("alpha", L * K, binary=True).reshape(L, K) if ssm else None
    tau = b.var("tau", K)
    e = b.var("e", K)
    f = b.var("f", K)
    u = b.var("u", L * K).reshape(L, K) if ssm else None
    t = b.var("t", L * K * M).reshape(L, K, M) if ssm else None
    d = b.var("d", K) if ssm else None
    v = b.var("v", L * K).reshape(L, K) if ssm else None
    s = b.var("s", K)
    s1 = b.var("s1", L * K * M).reshape(L, K, M) if ssm else None
    s2 = b.var("s2", L * K).reshape(L, K) if ssm else None
    r = int(b.var("r")[0])
    n = b.n

    om, om1, om2 = state.penalties
    b.maximize([r], 1.0)
    b.maximize(s, -om)
    if ssm:
        b.maximize(s1.ravel(), -om1)
        b.maximize(s2.ravel(), -om2)

    z0 = state.z
    a0 = data.effective(z0)                                    # (K, N)

    # affine map of the effective channel: const + sum of blocks
    def a_blocks(k: int) -> list[tuple[np.ndarray, np.ndarray]]:
        out = []
        for l in range(L):
            if len(refl[l]) == 0:
                continue
            Ar = _embed(data.Hn[l, k][:, refl[l]])
            out.append((np.concatenate([zre[l, k], zim[l, k]]), Ar))
        return out

    blocks = [a_blocks(k) for k in range(K)]

    # (a) time budget and floor
    rows = _Rows(1 + K)
    rows.put(0, tau, -1.0)
    rows.const[0] = 1.0
    rows.put(1 + np.arange(K), tau, 1.0)
    rows.const[1:] = -data.tau_min
    rows.emit(b, "nonneg", n)

    # (b) |z_m| <= alpha (or <= 1 without association variables)
    done_shared = set()
    for l in range(L):
        for k in range(K):
            if mode == "sms":
                if l in done_shared:
                    continue
                done_shared.add(l)
            mb = len(refl[l])
            for i in range(mb):
                rows = _Rows(3)
                if ssm:
                    rows.put(0, alpha[l, k], 1.0)
                else:
                    rows.const[0] = 1.0
                rows.put(1, zre[l, k][i], 1.0)
                rows.put(2, zim[l, k][i], 1.0)
                rows.emit(b, "soc", n)

    for k in range(K):
        # (c) e >= 2^f
        rows = _Rows(3)
        rows.put(0, f[k], np.log(2.0))
        rows.const[0] = -2.0 * np.log(data.rho[k])     # e holds 2^f / rho^2
        rows.const[1] = 1.0
        rows.put(2, e[k], 1.0)
        rows.emit(b, "exp", n)
        # (d) r^2 <= tau f
        rows = _Rows(4)
        rows.put([0, 0], [f[k], tau[k]], [1.0, 1.0])
        rows.put(1, r, np.sqrt(2.0))
        rows.put(2, f[k], 1.0)
        rows.put(3, tau[k], 1.0)
        rows.emit(b, "soc", n)

    # (e) e - 1 <= linearized ||a||^2 + s
    rows = _Rows(K)
    for k in range(K):
        g0 = 2.0 * _cplx(a0[k])
        rows.const[k] = (g0 @ _cplx(data.hn[k]) - np.vdot(a0[k], a0[k]).real
                         + data.rho[k] ** -2)
        for cols, Ar in blocks[k]:
            rows.put_dense(k, cols, (g0 @ Ar)[None, :])
        rows.put(k, s[k], 1.0)
        rows.put(k, e[k], -1.0)
    rows.emit(b, "nonneg", n)

    layout = P41Layout(mode=mode, zre=zre, zim=zim, alpha=alpha, tau=tau, e=e, f=f, u=u,
                       t=t, d=d, v=v, s=s, s1=s1, s2=s2, r=r)
    if not ssm:
        b.add_matrix("nonneg", sp.identity(K), s, np.zeros(K))
        return b.build(), layout

    beta = data.beta
    kap, q1, q2, q3 = data.kappa, data.q1, data.q2, data.q3
    Q = state.c_v * q1 * kap / data.p_reflect                       # (L, K)
    y0 = data.harvest_amplitudes(a0)                                 # (L, K, M)

    # (f) u >= alpha Mbar
    rows = _Rows(L * K)
    ix = np.arange(L * K).reshape(L, K)
    rows.put(ix, u, 1.0)
    rows.put(ix, alpha, -data.m_bar[:, None] * np.ones((1, K)))
    rows.emit(b, "nonneg", n)

    # (g) t <= linearized |g^H a|^2 + s'
    rows = _Rows(L * K * M)
    ix = np.arange(L * K * M).reshape(L, K, M)
    for l in range(L):
        for k in range(K):
            w = y0[l, k][:, None] * data.Gn[l]                      # (M, N): rows y0_m g_m
            W = 2.0 * np.hstack([w.real, w.imag])                   # (M, 2N)
            rows.const[ix[l, k]] = W @ _cplx(data.hn[k]) - np.abs(y0[l, k]) ** 2
            for cols, Ar in blocks[k]:
                rows.put_dense(int(ix[l, k, 0]), cols, W @ Ar)
    rows.put(ix, s1, 1.0)
    rows.put(ix, t, -1.0)
    rows.emit(b, "nonneg", n)

    # (h) ||a||^2 <= d
    for k in range(K):
        rows = _Rows(2 * N + 2)
        rows.put([0, 2 * N + 1], d[k], 1.0)
        rows.const[0], rows.const[2 * N + 1] = 1.0, -1.0
        rows.const[1:2 * N + 1] = 2.0 * _cplx(data.hn[k])
        for cols, Ar in blocks[k]:
            rows.put_dense(1, cols, 2.0 * Ar)
        rows.emit(b, "soc", n)

    # (i) big-M: t <= C (1 - beta)
    rows = _Rows(L * K * M)
    rows.put(ix, t, -1.0)
    rows.const[:] = (state.bigm * (1 - beta[:, None, :])).ravel()
    rows.emit(b, "nonneg", n)

    # (j) v = c_v (q2 kappa sum t + q3 d)
    rows = _Rows(L * K)
    lk = np.arange(L * K).reshape(L, K)
    rows.put(lk, v, 1.0)
    # only harvesting elements feed v and the cone below; the big-M rows cap the
    # reflecting t at 0 but their cuts may push them lower, which is not power
    harv = (1 - beta)[:, None, :] * np.ones((1, K, 1))                 # (L, K, M)
    rows.put(lk[:, :, None], t, -(state.c_v * q2 * kap)[:, :, None] * harv)
    rows.put(lk, np.broadcast_to(d[None, :], (L, K)), -state.c_v * q3)
    rows.emit(b, "zero", n)
    # v >= 0: the cuts let t go negative, and a negative v would satisfy the
    # harvest cone with no received power at all
    b.add_matrix("nonneg", sp.identity(L * K), v.ravel(), np.zeros(L * K))

    # (k) (u + v)^2 <= 2 Q sum t + lin(u^2 + v^2) + s'' + gate (1 - alpha)
    gate = _ccp_gate(data, state, y0, Q)
    layout.gate = gate
    u0, v0 = state.u, state.v
    for l in range(L):
        for k in range(K):
            rows = _Rows(3)
            wc = -u0[l, k] ** 2 - v0[l, k] ** 2 + gate[l, k]
            cols = np.concatenate([t[l, k], [u[l, k], v[l, k], s2[l, k], alpha[l, k]]])
            vals = np.concatenate([2 * Q[l, k] * harv[l, k],
                                   [2 * u0[l, k], 2 * v0[l, k], 1.0, -gate[l, k]]])
            rows.put(0, cols, vals)
            rows.put(2, cols, vals)
            rows.const[0] = wc + 1.0
            rows.const[2] = wc - 1.0
            rows.put([1, 1], [u[l, k], v[l, k]], [2.0, 2.0])
            rows.emit(b, "soc", n)

    # (l) slacks
    sl = np.concatenate([s, s1.ravel(), s2.ravel()])
    b.add_matrix("nonneg", sp.identity(len(sl)), sl, np.zeros(len(sl)))
    return b.build(), layout


def _ccp_gate(data: GroupProblemData, state: ScaState, y0: np.ndarray, Q: np.ndarray
              ) -> np.ndarray:
    """Constant making the convexified harvest cone vacuous when alpha = 0.

    With alpha = 0 we take u = 0, each t at a lower bound of its cut over
    all feasible z, and pick d so that v is as close to v0 as allowed; the
    gate covers whatever the cone then still lacks.
    """
    L, K, M = data.n_ssm, data.n_ue, data.n_elem
    gate = np.zeros((L, K))
    for k in range(K):
        # |g_m^H a(z)| <= |g_m^H h| + sum over reflecting columns, |z| <= 1
        Y = np.abs(data.Gn.conj() @ data.hn[k])                       # (L, M)
        reach = np.linalg.norm(data.hn[k])
        for l2, p in enumerate(data.presets):
            Hc = data.Hn[l2, k][:, p.reflect_idx]
            Y = Y + np.abs(np.einsum("lmn,nj->lmj", data.Gn.conj(), Hc)).sum(axis=2)
            reach += np.linalg.norm(Hc, axis=0).sum()
        ay = np.abs(y0[:, k, :])
        T_lo = np.sum((1 - data.beta) * (-ay ** 2 - 2 * ay * Y), axis=1)   # (L,)
        c_v = state.c_v[:, k]
        v_star = np.maximum(c_v * (data.q2 * data.kappa * T_lo + data.q3 * reach ** 2),
                            state.v[:, k])
        need = (v_star - state.v[:, k]) ** 2 + state.u[:, k] ** 2 - 2 * Q[:, k] * T_lo
        gate[:, k] = np.maximum(need, 0.0) + 1.0
    return gate


# --- solution -------------------------------------------------------------------

@dataclass
class GroupSolution:
    group: int
    mode: str
    ue_ids: list[int]
    ssm_ids: list[int]
    alpha: np.ndarray                 # (L, K) int
    phi: np.ndarray                   # (L, K, M) complex, zero where not associated
    tau: np.ndarray                   # (K,)
    rate: np.ndarray                  # (K,) bit/s
    snr: np.ndarray                   # (K,)
    p_rc: np.ndarray                  # (L, K) W, with the extracted precoders
    p_hr: np.ndarray                  # (L, K) W
    m_bar: np.ndarray                 # (L,)
    slacks: dict[str, float]
    objective_trace: list[float]
    rate_bound_trace: list[float]
    slack_trace: list[float]
    mip_status: list[str]
    repaired: list[tuple[int, int]] = field(default_factory=list)
    servable: bool = True
    precoder_norm_error: float = 0.0
    reachable: np.ndarray | None = None   # (K,) bool; None means every UE

    @property
    def min_rate(self) -> float:
        """Minimum over reachable UEs; a reachable UE left without rate gives 0."""
        live = np.ones(len(self.rate), bool) if self.reachable is None else self.reachable
        return float(self.rate[live].min()) if live.any() else 0.0

    def feasibility(self, p_reflect: float, tau_min: float) -> dict[str, bool]:
        need = self.m_bar[:, None] * p_reflect
        # RIS and SMS surfaces are externally powered
        ok_power = self.mode != "ssm" or bool(
            np.all((self.alpha == 0) | (self.p_hr >= need * (1 - POWER_RTOL))))
        return {
            "time_budget": bool(self.tau.sum() <= 1 + 1e-9),
            "tau_min": bool(np.all(self.tau >= tau_min - 1e-9)),
            "unit_modulus": bool(np.all(np.abs(np.abs(self.phi[self.phi != 0]) - 1) <= 1e-12)),
            "binary_alpha": bool(np.all(np.isin(self.alpha, (0, 1)))),
            "self_sustainable": ok_power,
            "mrt_norm": bool(self.precoder_norm_error <= 1e-12),
        }

    def to_dict(self) -> dict[str, Any]:
        return {
            "group": self.group, "mode": self.mode, "ue_ids": self.ue_ids,
            "ssm_ids": self.ssm_ids, "alpha": self.alpha.tolist(),
            "tau": self.tau.tolist(), "rate": self.rate.tolist(), "snr": self.snr.tolist(),
            "p_received": self.p_rc.tolist(), "p_harvested": self.p_hr.tolist(),
            "m_bar": self.m_bar.tolist(), "min_rate": self.min_rate,
            "slacks": self.slacks, "objective_trace": self.objective_trace,
            "rate_bound_trace": self.rate_bound_trace, "slack_trace": self.slack_trace,
            "mip_status": self.mip_status, "repaired": [list(x) for x in self.repaired],
            "servable": self.servable,
            "reachable": None if self.reachable is None else self.reachable.tolist(),
            "phases": np.angle(self.phi).tolist(),
        }


def evaluate(data: GroupProblemData, alpha: np.ndarray, phi: np.ndarray):
    """Exact link budget of every UE: (snr, p_rc, p_hr, precoder norm error).

    ``phi`` has shape (L, K, M); pairs with alpha = 0 do not contribute.
    """
    L, K = data.n_ssm, data.n_ue
    snr = np.zeros(K)
    p_rc = np.zeros((L, K))
    err = 0.0
    for k in range(K):
        contrib = [(data.H(l, k), phi[l, k]) for l in range(L) if alpha[l, k]]
        snr[k] = link.snr(data.h[k], contrib, data.P, data.B, data.N0)
        try:
            w = link.mrt_precoder(data.h[k], contrib)
        except link.UnreachableError:
            continue
        err = max(err, abs(np.linalg.norm(w) - 1.0))
        for l in range(L):
            p_rc[l, k] = link.received_power(data.G[l], data.presets[l].beta, w, data.P)
    p_hr = link.harvested_power(p_rc, data.q1, data.q2, data.q3)
    return snr, p_rc, np.asarray(p_hr).reshape(L, K), err


def extract_phases(data: GroupProblemData, z: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """Unit-modulus responses from solver output; phase 0 where |z| vanishes."""
    mag = np.abs(z)
    unit = np.where(mag > PHASE_EPS, z / np.where(mag > PHASE_EPS, mag, 1.0), 1.0)
    return unit * data.beta[:, None, :] * (alpha[:, :, None] > 0)


def finalize(data: GroupProblemData, z: np.ndarray, alpha: np.ndarray, mode: str
             ) -> tuple[np.ndarray, np.ndarray, tuple, list[tuple[int, int]]]:
    """Extract phases, then drop associations that fail the exact power check."""
    alpha = alpha.copy().astype(int)
    repaired: list[tuple[int, int]] = []
    need = data.m_bar[:, None] * data.p_reflect
    while True:
        phi = extract_phases(data, z, alpha)
        ev = evaluate(data, alpha, phi)
        if mode != "ssm":
            return alpha, phi, ev, repaired
        p_hr = ev[2]
        bad = (alpha == 1) & (p_hr < need * (1 - POWER_RTOL))
        if not bad.any():
            return alpha, phi, ev, repaired
        ratio = np.where(bad, p_hr / np.maximum(need, 1e-300), np.inf)
        l, k = np.unravel_index(int(np.argmin(ratio)), ratio.shape)
        alpha[l, k] = 0
        repaired.append((int(l), int(k)))


def _settings(cfg: ScenarioConfig) -> SolverSettings:
    tol = cfg.solver_tol if cfg.solver_backend == "clarabel" else max(cfg.solver_tol, 1e-6)
    return SolverSettings(backend=cfg.solver_backend, tol_feas=tol, tol_gap=tol,
                          max_nodes=cfg.bnb_max_nodes)


def _read_z(x: np.ndarray, lay: P41Layout, data: GroupProblemData) -> np.ndarray:
    z = np.zeros((data.n_ssm, data.n_ue, data.n_elem), dtype=complex)
    for (l, k), re in lay.zre.items():
        z[l, k, data.presets[l].reflect_idx] = x[re] + 1j * x[lay.zim[l, k]]
    return z


def _single_start(data: GroupProblemData, cfg: ScenarioConfig, mode: str,
                  rng: np.random.Generator, aligned: bool = False) -> GroupSolution:
    L, K = data.n_ssm, data.n_ue
    state = init_state(data, cfg, mode, rng, aligned)
    settings = _settings(cfg)
    obj_tr, rate_tr, slack_tr, mip = [], [], [], []
    alpha = np.ones((L, K), dtype=int)
    solved = False
    last_slacks = {"s": np.nan, "s1": np.nan, "s2": np.nan}
    for state.eps in range(1, state.limit + 1):
        p, lay = build_p41(data, state, mode)
        hints = []
        if mode == "ssm":
            # previous association (feasible with zero slack, since every cut
            # is exact at its expansion point), nobody served, and the pairs
            # that are self-sustainable at the expansion point
            T, _, v = _harvest_state(data, state.z, state.c_v)
            Q = state.c_v * data.q1 * data.kappa / data.p_reflect
            ok = (data.m_bar[:, None] * v <= Q * T).astype(int)
            for cand in (alpha if solved else None, np.zeros((L, K), int), ok):
                if cand is not None:
                    hints.append(dict(zip(lay.alpha.ravel().tolist(), cand.ravel().tolist())))
        sol = solve_mixed(p, settings, hints)
        mip.append(sol.status)
        # a node-budget stop still carries a solved incumbent (mip_gap is set)
        usable = sol.ok or (sol.status == "iteration-limit" and sol.mip_gap is not None)
        if not usable or sol.x is None or not np.all(np.isfinite(sol.x)) \
                or not np.isfinite(sol.objective):
            log.warning("group %d iteration %d: solver status %s", data.group.index,
                        state.eps, sol.status)
            continue
        solved = True
        x = sol.x
        state.z = _read_z(x, lay, data)
        if mode == "ssm":
            alpha = np.rint(x[lay.alpha]).astype(int)
            # a UE left with no channel at all gives cuts with zero gradient
            # and could never be picked up again; expand it at aligned phases
            for k in np.flatnonzero(np.linalg.norm(data.effective(state.z), axis=1) == 0):
                state.z[:, k] = aligned_phases(data, k)
            # unserved pairs leave u, v undetermined; expand those at the
            # consumption of the reflecting area and the exact physics instead
            _, _, v_phys = _harvest_state(data, state.z, state.c_v)
            off = alpha == 0
            state.u = np.where(off, data.m_bar[:, None].astype(float), x[lay.u])
            state.v = np.where(off, v_phys, x[lay.v])
            last_slacks = {"s": float(x[lay.s].sum()), "s1": float(x[lay.s1].sum()),
                           "s2": float(x[lay.s2].sum())}
        else:
            last_slacks = {"s": float(x[lay.s].sum()), "s1": 0.0, "s2": 0.0}
        obj_tr.append(float(sol.objective))
        rate_tr.append(float(x[lay.r] ** 2))
        slack_tr.append(float(sum(last_slacks.values())))
    if not solved:
        alpha = np.zeros((L, K), dtype=int) if mode == "ssm" else alpha
    alpha, phi, (snr, p_rc, p_hr, err), repaired = finalize(data, state.z, alpha, mode)
    c = np.log2(1.0 + snr)
    tau = equal_rate_split(c, data.tau_min)
    return GroupSolution(
        group=data.group.index, mode=mode, ue_ids=list(data.group.ue_ids),
        ssm_ids=list(data.group.ssm_ids), alpha=alpha, phi=phi, tau=tau,
        rate=tau * data.B * c, snr=snr, p_rc=p_rc, p_hr=p_hr, m_bar=data.m_bar,
        slacks=last_slacks, objective_trace=obj_tr, rate_bound_trace=rate_tr,
        slack_trace=slack_tr, mip_status=mip, repaired=repaired, servable=solved,
        precoder_norm_error=err, reachable=data.reachable)


def run_algorithm1(data: GroupProblemData, cfg: ScenarioConfig, mode: str = "ssm",
                   seed: int = 0) -> GroupSolution:
    """SCA over the convexified problem, then exact extraction and repair.

    The first start expands around per-UE aligned phases (random phases in
    SMS mode, where one response serves every UE); with ``cfg.sca_starts > 1``
    further random starts follow and the best exact minimum rate is returned.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    seeds = np.random.SeedSequence([seed, data.group.index]).spawn(cfg.sca_starts)
    best = None
    for i, ss in enumerate(seeds):
        sol = _single_start(data, cfg, mode, np.random.default_rng(ss), aligned=i == 0)
        if best is None or sol.min_rate > best.min_rate:
            best = sol
    return best
