"""Deterministic line-of-sight channel synthesis and the channel file format.

The synthesizer stands in for a ray tracer: every scalar coefficient between
two elements is a single free-space path weighted by the element patterns.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import Geometry, ScenarioConfig

MAGIC = "SSMCH1"
COSINE_DIRECTIVITY = 4.0


class ChannelFormatError(ValueError):
    pass


@dataclass(frozen=True)
class ChannelSet:
    """Direct, BS-to-SSM and SSM-to-UE channels.

    ``h[k]`` has shape (N,), ``G[l]`` shape (M, N) with row m the channel from
    the BS to element m, and ``g[l, k]`` shape (M,).
    """

    h: np.ndarray   # (K, N)
    G: np.ndarray   # (L, M, N)
    g: np.ndarray   # (L, K, M)

    def __post_init__(self) -> None:
        K, N = self.h.shape
        L, M, N2 = self.G.shape
        if N2 != N or self.g.shape != (L, K, M):
            raise ValueError(
                f"inconsistent shapes h{self.h.shape} G{self.G.shape} g{self.g.shape}")

    @property
    def n_bs(self) -> int:
        return self.h.shape[1]

    @property
    def n_elem(self) -> int:
        return self.G.shape[1]

    @property
    def n_ssm(self) -> int:
        return self.G.shape[0]

    @property
    def n_ue(self) -> int:
        return self.h.shape[0]

    def cascaded(self, l: int, k: int) -> np.ndarray:
        """H_{l,k} = G_l^T diag(g_{l,k}), shape (N, M)."""
        return cascade(self.G[l], self.g[l, k])


def cascade(G: np.ndarray, g: np.ndarray) -> np.ndarray:
    G = np.asarray(G)
    g = np.asarray(g)
    if G.ndim != 2 or g.ndim != 1 or G.shape[0] != g.shape[0]:
        raise ValueError(f"cannot cascade G{G.shape} with g{g.shape}")
    return G.T * g[np.newaxis, :]


def cosine_gain(normal: np.ndarray, direction: np.ndarray) -> np.ndarray:
    """Power pattern 4 cos(theta) on the reflective half-space, 0 behind."""
    c = direction @ normal
    return np.where(c > 0.0, COSINE_DIRECTIVITY * c, 0.0)


def pair_coefficients(pa: np.ndarray, pb: np.ndarray, wavelength: float,
                      normal_a: np.ndarray | None = None,
                      normal_b: np.ndarray | None = None) -> np.ndarray:
    """Free-space coefficients between element sets, shape (len(pa), len(pb)).

    A ``None`` normal means an isotropic element.
    """
    diff = pb[np.newaxis, :, :] - pa[:, np.newaxis, :]
    d = np.linalg.norm(diff, axis=-1)
    if np.any(d == 0.0):
        raise ValueError("coincident element positions")
    unit = diff / d[..., np.newaxis]
    amp = wavelength / (4.0 * np.pi * d)
    gain = np.ones_like(d)
    if normal_a is not None:
        gain = gain * cosine_gain(normal_a, unit)
    if normal_b is not None:
        gain = gain * cosine_gain(normal_b, -unit)
    return np.sqrt(gain) * amp * np.exp(-2j * np.pi * d / wavelength)


def synthesize(geom: Geometry, cfg: ScenarioConfig) -> ChannelSet:
    lam = cfg.wavelength
    K, L = geom.n_ue, geom.n_ssm
    N, M = len(geom.bs_positions), geom.ssm_positions.shape[1]

    h = pair_coefficients(geom.ue_positions, geom.bs_positions, lam)
    h[geom.direct_blocked] = 0.0

    G = np.empty((L, M, N), dtype=complex)
    g = np.empty((L, K, M), dtype=complex)
    for l in range(L):
        n = geom.ssm_normals[l]
        G[l] = pair_coefficients(geom.ssm_positions[l], geom.bs_positions, lam, normal_a=n)
        g[l] = pair_coefficients(geom.ue_positions, geom.ssm_positions[l], lam, normal_b=n)
        if cfg.ssm_ue_cutoff:
            far = np.abs(geom.ue_row - geom.ssm_row[l]) > cfg.blockage_row_radius
            g[l, far] = 0.0
    return ChannelSet(h=h, G=G, g=g)


# --- file format ---------------------------------------------------------

def _paths(path: str | Path) -> tuple[Path, Path]:
    path = Path(path)
    if path.suffix != ".json":
        path = path.with_suffix(".json")
    return path, path.with_suffix(".bin")


def export(cs: ChannelSet, path: str | Path) -> Path:
    """Write ``<stem>.json`` (manifest) and ``<stem>.bin`` (payload)."""
    manifest_path, blob_path = _paths(path)
    manifest = {
        "magic": MAGIC,
        "N": cs.n_bs, "M": cs.n_elem, "L": cs.n_ssm, "K": cs.n_ue,
        "layout": "row-major",
        "scalar": "f64-re-im-interleaved",
        "order": ["h", "G", "g"],
        "blob": blob_path.name,
    }
    parts = [np.ascontiguousarray(a, dtype="<c16").ravel() for a in (cs.h, cs.G, cs.g)]
    payload = np.concatenate(parts) if parts else np.empty(0, dtype="<c16")
    blob_path.write_bytes(payload.view("<f8").tobytes())
    manifest_path.write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    return manifest_path


def load(path: str | Path) -> ChannelSet:
    manifest_path, _ = _paths(path)
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ChannelFormatError(f"{manifest_path}: malformed manifest") from exc
    if manifest.get("magic") != MAGIC:
        raise ChannelFormatError(f"{manifest_path}: bad magic {manifest.get('magic')!r}")
    if manifest.get("layout") != "row-major" or manifest.get("scalar") != "f64-re-im-interleaved":
        raise ChannelFormatError("unsupported layout or scalar encoding")
    try:
        N, M, L, K = (int(manifest[x]) for x in "NMLK")
    except (KeyError, ValueError) as exc:
        raise ChannelFormatError("manifest lacks integer N, M, L, K") from exc
    blob_path = manifest_path.parent / manifest.get("blob", manifest_path.with_suffix(".bin").name)
    raw = blob_path.read_bytes()
    sizes = [K * N, L * M * N, L * K * M]
    expected = 16 * sum(sizes)
    if len(raw) != expected:
        raise ChannelFormatError(
            f"payload holds {len(raw)} bytes, manifest (N={N}, M={M}, L={L}, K={K}) "
            f"requires {expected}")
    data = np.frombuffer(raw, dtype="<f8").view("<c16").astype(complex)
    h, G, g = np.split(data, np.cumsum(sizes)[:2])
    return ChannelSet(h=h.reshape(K, N), G=G.reshape(L, M, N), g=g.reshape(L, K, M))


# ``import`` is a keyword; expose the reader under both names.
import_ = load
