"""Closed-form link quantities: MRT, SNR, rate, received and harvested power."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .model import Preset


class UnreachableError(ValueError):
    """The effective channel of a UE is identically zero."""


@dataclass(frozen=True)
class SurfaceResponse:
    """phi = diag(varphi) beta for one surface serving one UE."""

    varphi: np.ndarray
    beta: np.ndarray

    @property
    def phi(self) -> np.ndarray:
        return self.varphi * self.beta


@dataclass(frozen=True)
class LinkBudget:
    snr: float
    rate: float
    p_received: dict[int, float]
    p_harvested: dict[int, float]
    eta: float | None
    snr_ub: float
    snr_bs: float


def effective_channel(h: np.ndarray, contributions: Iterable[tuple[np.ndarray, np.ndarray]]
                      ) -> np.ndarray:
    a = np.array(h, dtype=complex, copy=True)
    for H, phi in contributions:
        a += H @ phi
    return a


def mrt_precoder(h: np.ndarray, contributions: Sequence[tuple[np.ndarray, np.ndarray]] = ()
                 ) -> np.ndarray:
    a = effective_channel(h, contributions)
    nrm = np.linalg.norm(a)
    if nrm == 0.0:
        raise UnreachableError("effective channel is zero")
    return a.conj() / nrm


def snr(h: np.ndarray, contributions: Sequence[tuple[np.ndarray, np.ndarray]],
        P: float, B: float, N0: float) -> float:
    a = effective_channel(h, contributions)
    return float(np.vdot(a, a).real * P / (B * N0))


def rate(tau: float, B: float, gamma: float) -> float:
    return tau * B * np.log2(1.0 + gamma)


def received_power(G: np.ndarray, beta: np.ndarray, w: np.ndarray, P: float) -> float:
    """Power collected by the harvesting elements (beta_m = 0) of one surface."""
    y = G @ w
    return float(np.sum((1 - np.asarray(beta)) * np.abs(y) ** 2) * P)


def harvested_power(p_rc, q1: float, q2: float, q3: float):
    """Rectifier output q1 p / (q2 p + q3); accepts scalars or arrays."""
    p = np.asarray(p_rc, dtype=float)
    if np.any(p < 0):
        raise ValueError("received power must be non-negative")
    out = q1 * p / (q2 * p + q3)
    return float(out) if out.ndim == 0 else out


def snr_direct(h: np.ndarray, P: float, B: float, N0: float) -> float:
    return float(np.vdot(h, h).real * P / (B * N0))


def contribution_eta(h: np.ndarray, gamma: float, P: float, B: float, N0: float) -> float:
    """Direct-only SNR over assisted SNR; 0 when there is no direct link."""
    if gamma <= 0.0:
        raise ValueError("eta is undefined for a UE with zero SNR")
    if not np.any(h):
        return 0.0
    return snr_direct(h, P, B, N0) / gamma


def snr_upper_bound(h: np.ndarray, H_stacked: np.ndarray, P: float, B: float, N0: float
                    ) -> float:
    """(||h|| + ||H||_F)^2 P / (B N0).

    ``||H phi||`` can reach ``||H||_F sqrt(n)`` for ``n`` reflecting elements,
    so this only bounds the SNR for certain when at most one element reflects.
    """
    H = np.asarray(H_stacked)
    frob = np.linalg.norm(H) if H.size else 0.0
    return float((np.linalg.norm(h) + frob) ** 2 * P / (B * N0))
