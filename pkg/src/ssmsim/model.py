"""Scenario configuration, cabin geometry, presets and coverage groups."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0


class ConfigError(ValueError):
    """Raised for invalid scenario configurations."""


def is_square(n: int) -> bool:
    return n >= 0 and math.isqrt(n) ** 2 == n


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0) * 1e-3


def watt_to_dbm(watt: float) -> float:
    return 10.0 * math.log10(watt / 1e-3)


@dataclass(frozen=True)
class ScenarioConfig:
    """All physical and algorithmic constants of one simulation run.

    Powers are in watts, frequencies in Hz and array pitches in wavelengths.
    The defaults describe the 31-row aircraft cabin.
    """

    carrier_freq: float = 28e9
    bandwidth: float = 1e9
    noise_psd: float = dbm_to_watt(-174.0)
    tx_power: float = 1.0
    n_bs: int = 64
    n_elem: int = 1024
    bs_spacing: float = 0.5
    ms_spacing: float = 0.25
    p_reflect: float = 2e-6
    q1: float = 0.3904
    q2: float = 0.8260
    q3: float = 0.6823
    tau_min: float = 1e-3
    sca_rounds: int = 5
    penalties: tuple[float, float, float] = (100.0, 1e7, 1e7)
    rows: int = 31
    seats_per_row: int = 6
    ssm_rows_per_group: int = 2
    candidate_sizes: tuple[int, ...] = (16, 64, 81, 121, 144, 169, 225, 256)
    blockage_row_radius: int = 3
    mc_draws: int = 10
    preset_rounds: int = 2
    seed: int = 0
    # cabin layout (meters)
    seat_pitch: float = 0.8
    seat_width: float = 0.5
    aisle_width: float = 0.5
    ceiling_height: float = 2.2
    seat_height: float = 1.2
    bs_height: float | None = None
    ssm_height: float = 2.0
    ssm_ue_cutoff: bool = False
    direct_blocked_overrides: dict[int, bool] = field(default_factory=dict)
    # solver knobs
    solver_backend: str = "clarabel"
    solver_tol: float = 1e-8
    bnb_max_nodes: int = 2000
    sca_starts: int = 1

    def __post_init__(self) -> None:
        self.validate()

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_freq

    @property
    def noise_power(self) -> float:
        return self.bandwidth * self.noise_psd

    @property
    def snr_scale(self) -> float:
        """P / (B N0): SNR per unit squared channel gain."""
        return self.tx_power / self.noise_power

    @property
    def bs_row(self) -> int:
        return (self.rows + 1) // 2

    def validate(self) -> None:
        if self.rows < 1:
            raise ConfigError("rows must be >= 1")
        if self.seats_per_row < 2 or self.seats_per_row % 2:
            raise ConfigError("seats_per_row must be a positive even number")
        for name in ("n_bs", "n_elem"):
            v = getattr(self, name)
            if v < 1 or not is_square(v):
                raise ConfigError(f"{name}={v} is not a positive perfect square")
        if not 0.0 < self.tau_min < 1.0:
            raise ConfigError("tau_min must lie in (0, 1)")
        for name in ("bandwidth", "noise_psd", "p_reflect", "q1", "q2", "q3",
                     "carrier_freq"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0")
        if self.tx_power < 0:
            raise ConfigError("tx_power must be >= 0")
        if not self.candidate_sizes:
            raise ConfigError("candidate_sizes is empty")
        for s in self.candidate_sizes:
            if not is_square(s) or s < 1 or s > self.n_elem:
                raise ConfigError(f"candidate size {s} is not a perfect square <= n_elem")
        if list(self.candidate_sizes) != sorted(set(self.candidate_sizes)):
            raise ConfigError("candidate_sizes must be strictly increasing")
        if self.sca_rounds < 1 or self.mc_draws < 1 or self.ssm_rows_per_group < 1:
            raise ConfigError("sca_rounds, mc_draws and ssm_rows_per_group must be >= 1")
        if len(self.penalties) != 3 or min(self.penalties) <= 0:
            raise ConfigError("penalties must be three positive numbers")
        if self.solver_backend not in ("clarabel", "admm"):
            raise ConfigError(f"unknown solver_backend {self.solver_backend!r}")

    def replace(self, **changes: Any) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    # --- serialization -------------------------------------------------
    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["penalties"] = list(self.penalties)
        d["candidate_sizes"] = list(self.candidate_sizes)
        d["direct_blocked_overrides"] = {str(k): v for k, v in
                                         self.direct_blocked_overrides.items()}
        return d

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ScenarioConfig":
        data = dict(data)
        if "tx_power_dbm" in data:
            if "tx_power" in data:
                raise ConfigError("give either tx_power or tx_power_dbm, not both")
            data["tx_power"] = dbm_to_watt(float(data.pop("tx_power_dbm")))
        if "noise_psd_dbm_hz" in data:
            data["noise_psd"] = dbm_to_watt(float(data.pop("noise_psd_dbm_hz")))
        if data.pop("preset", None) == "small":
            data = {**_SMALL, **data}
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "penalties" in data:
            data["penalties"] = tuple(float(x) for x in data["penalties"])
        if "candidate_sizes" in data:
            data["candidate_sizes"] = tuple(int(x) for x in data["candidate_sizes"])
        if "direct_blocked_overrides" in data:
            data["direct_blocked_overrides"] = {
                int(k): bool(v) for k, v in data["direct_blocked_overrides"].items()}
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path: str | Path) -> "ScenarioConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: malformed JSON ({exc})") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return cls.from_dict(data)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2), encoding="utf-8")

    @classmethod
    def small(cls, **changes: Any) -> "ScenarioConfig":
        """Five-row cabin with reduced arrays, used for tests and quick runs."""
        return cls(**{**_SMALL, **changes})


_SMALL: dict[str, Any] = dict(
    rows=5,
    n_bs=16,
    n_elem=64,
    candidate_sizes=(4, 9, 16, 25, 36),
    blockage_row_radius=1,
    tau_min=0.01,
    sca_rounds=20,
    bnb_max_nodes=8,
)


@dataclass(frozen=True)
class Geometry:
    """Element positions of the BS, every SSM and every UE."""

    bs_positions: np.ndarray          # (N, 3)
    ssm_positions: np.ndarray         # (L, M, 3)
    ssm_normals: np.ndarray           # (L, 3), unit, reflective side
    ssm_centers: np.ndarray           # (L, 3)
    ue_positions: np.ndarray          # (K, 3)
    ue_row: np.ndarray                # (K,) 1-based row index
    ssm_row: np.ndarray               # (L,)
    direct_blocked: np.ndarray        # (K,) bool
    bs_row: int

    @property
    def n_ue(self) -> int:
        return len(self.ue_positions)

    @property
    def n_ssm(self) -> int:
        return len(self.ssm_centers)

    def bs_distance(self) -> np.ndarray:
        """Distance from each SSM center to the BS array center (d_l)."""
        return np.linalg.norm(self.ssm_centers - self.bs_positions.mean(axis=0), axis=1)

    def to_dict(self) -> dict[str, Any]:
        return {
            "bs_row": self.bs_row,
            "bs_center": self.bs_positions.mean(axis=0).tolist(),
            "ue_positions": self.ue_positions.tolist(),
            "ue_row": self.ue_row.tolist(),
            "direct_blocked": self.direct_blocked.tolist(),
            "ssm_centers": self.ssm_centers.tolist(),
            "ssm_normals": self.ssm_normals.tolist(),
            "ssm_row": self.ssm_row.tolist(),
            "ssm_bs_distance": self.bs_distance().tolist(),
        }


def outward(row: int, bs_row: int) -> int:
    """Direction (+1/-1 in row index) pointing away from the BS."""
    return -1 if row <= bs_row else 1


def _planar_grid(n: int, pitch: float, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """n x n grid centered at the origin; index = row * side + col, row along v."""
    side = math.isqrt(n)
    offs = (np.arange(side) - (side - 1) / 2.0) * pitch
    rows, cols = np.meshgrid(offs, offs, indexing="ij")
    return rows.reshape(-1, 1) * v + cols.reshape(-1, 1) * u


def build_geometry(cfg: ScenarioConfig) -> Geometry:
    """Place BS, SSMs and UEs in the cabin.

    Rows run along +x with ``seat_pitch`` spacing. The BS array hangs below the
    ceiling above the middle row, parallel to the floor. Two SSMs per row are
    mounted above the middle seat of each side, on the row edge away from the
    BS, with the reflective side facing the BS.
    """
    if cfg.rows < 1:
        raise ConfigError("rows must be >= 1")
    lam = cfg.wavelength
    bs_row = cfg.bs_row
    row_x = (np.arange(1, cfg.rows + 1) - 1) * cfg.seat_pitch
    bs_z = cfg.bs_height if cfg.bs_height is not None else cfg.ceiling_height - 0.05

    ex, ey, ez = np.eye(3)
    bs_center = np.array([row_x[bs_row - 1], 0.0, bs_z])
    bs_positions = bs_center + _planar_grid(cfg.n_bs, cfg.bs_spacing * lam, ex, ey)

    per_side = cfg.seats_per_row // 2
    side_y = cfg.aisle_width / 2 + cfg.seat_width / 2 + np.arange(per_side) * cfg.seat_width
    seat_y = np.concatenate([-side_y[::-1], side_y])
    middle_y = side_y[(per_side - 1) // 2]

    ue_pos, ue_row = [], []
    for r in range(1, cfg.rows + 1):
        for y in seat_y:
            ue_pos.append((row_x[r - 1], y, cfg.seat_height))
            ue_row.append(r)
    ue_row_arr = np.array(ue_row, dtype=int)

    centers, normals, elems, ssm_row = [], [], [], []
    for r in range(1, cfg.rows + 1):
        o = outward(r, bs_row)
        normal = -o * ex
        x = row_x[r - 1] + o * cfg.seat_pitch / 2
        for y in (-middle_y, middle_y):
            c = np.array([x, y, cfg.ssm_height])
            # columns run along the viewer's right when facing the reflective side
            right = np.cross(-normal, ez)
            elems.append(c + _planar_grid(cfg.n_elem, cfg.ms_spacing * lam, right, ez))
            centers.append(c)
            normals.append(normal)
            ssm_row.append(r)

    blocked = np.abs(ue_row_arr - bs_row) > cfg.blockage_row_radius
    for k, v in cfg.direct_blocked_overrides.items():
        if not 0 <= k < len(blocked):
            raise ConfigError(f"direct_blocked_overrides: no UE {k}")
        blocked[k] = v

    return Geometry(
        bs_positions=bs_positions,
        ssm_positions=np.array(elems),
        ssm_normals=np.array(normals),
        ssm_centers=np.array(centers),
        ue_positions=np.array(ue_pos, dtype=float),
        ue_row=ue_row_arr,
        ssm_row=np.array(ssm_row, dtype=int),
        direct_blocked=blocked,
        bs_row=bs_row,
    )


@dataclass(frozen=True)
class Preset:
    """Working-mode pattern of one SSM: 1 = reflecting, 0 = harvesting."""

    beta: np.ndarray
    m_bar: int

    @property
    def n_elem(self) -> int:
        return len(self.beta)

    @property
    def reflect_idx(self) -> np.ndarray:
        return np.flatnonzero(self.beta)

    @property
    def harvest_idx(self) -> np.ndarray:
        return np.flatnonzero(self.beta == 0)


def build_preset(M: int, m_bar: int) -> Preset:
    """Square reflecting block of ``m_bar`` elements at the lower-left corner.

    Element index ``m = row * sqrt(M) + col`` with row 0 at the bottom and col 0
    at the left edge as seen from the reflective side.
    """
    if not (is_square(M) and is_square(m_bar)) or M < 1:
        raise ConfigError(f"M={M} and m_bar={m_bar} must be perfect squares")
    if m_bar > M:
        raise ConfigError(f"m_bar={m_bar} exceeds M={M}")
    side, s = math.isqrt(M), math.isqrt(m_bar)
    grid = np.zeros((side, side), dtype=np.int8)
    grid[:s, :s] = 1
    beta = grid.reshape(-1)
    beta.setflags(write=False)
    return Preset(beta=beta, m_bar=m_bar)


@dataclass(frozen=True)
class CoverageGroup:
    index: int
    ue_ids: tuple[int, ...]
    ssm_ids: tuple[int, ...]

    @property
    def n_ue(self) -> int:
        return len(self.ue_ids)

    @property
    def n_ssm(self) -> int:
        return len(self.ssm_ids)

    def to_dict(self) -> dict[str, Any]:
        return {"index": self.index, "ue_ids": list(self.ue_ids),
                "ssm_ids": list(self.ssm_ids)}


def form_coverage_groups(geom: Geometry, cfg: ScenarioConfig) -> list[CoverageGroup]:
    """One group per UE row: that row's UEs plus the SSMs of the nearest rows
    whose reflective side faces it (the row itself, then outward from the BS).
    Rows beyond the cabin edge are skipped."""
    groups = []
    for r in range(1, cfg.rows + 1):
        o = outward(r, geom.bs_row)
        ssm_rows = [r + j * o for j in range(cfg.ssm_rows_per_group)]
        ssm_rows = [x for x in ssm_rows if 1 <= x <= cfg.rows]
        ssm_ids = tuple(int(l) for l in np.flatnonzero(np.isin(geom.ssm_row, ssm_rows)))
        ue_ids = tuple(int(k) for k in np.flatnonzero(geom.ue_row == r))
        groups.append(CoverageGroup(index=r, ue_ids=ue_ids, ssm_ids=ssm_ids))
    return groups


def groups_of_ssm(groups: list[CoverageGroup], n_ssm: int) -> list[list[CoverageGroup]]:
    out: list[list[CoverageGroup]] = [[] for _ in range(n_ssm)]
    for g in groups:
        for l in g.ssm_ids:
            out[l].append(g)
    return out
