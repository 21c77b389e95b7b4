"""System configuration, channel synthesis and the canonical five-factor form.

Shapes follow the uplink model: ``G1`` is ``L x M1`` (surface 1 to BS),
``G2`` is ``L x M2``, ``B`` is ``M2 x M1`` (surface 1 to surface 2), and
``R1``/``R2`` hold one user per column (``M_i x K``).
"""

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Tuple

import numpy as np

from .numkit import kron, vec

Point = Tuple[float, float]

GAUGES = ("sum", "typical_user")


def dbm_to_watt(dbm: float) -> float:
    return 10 ** ((dbm - 30) / 10)


def db_to_linear(db: float) -> float:
    return 10 ** (db / 10)


@dataclass(frozen=True)
class PathLossExponents:
    r1_bs: float = 4.0
    r2_bs: float = 2.0
    r1_r2: float = 2.0
    u_r1: float = 2.0
    u_r2: float = 4.0


@dataclass(frozen=True)
class SystemConfig:
    """Scenario parameters; defaults reproduce the reference deployment."""

    K: int = 8
    L: int = 8
    M1: int = 4
    M2: int = 4
    p_dbm: float = 30.0
    noise_psd_dbm_hz: float = -169.0
    bandwidth_hz: float = 1e6
    beta0_db: float = -20.0
    bs: Point = (0.0, 0.0)
    ris1: Point = (15.0, 5.0)
    ris2: Point = (5.0, 5.0)
    user_center: Point = (20.0, 0.0)
    user_radius: float = 3.0
    alphas: PathLossExponents = field(default_factory=PathLossExponents)
    seed: int = 0

    def __post_init__(self):
        for name in ("K", "L", "M1", "M2"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.bandwidth_hz <= 0:
            raise ValueError("bandwidth_hz must be positive")
        if self.user_radius < 0:
            raise ValueError("user_radius must be non-negative")

    @property
    def power(self) -> float:
        """Per-user transmit power in W."""
        return dbm_to_watt(self.p_dbm)

    @property
    def sigma2(self) -> float:
        """Noise power over the band in W."""
        return dbm_to_watt(self.noise_psd_dbm_hz + 10 * np.log10(self.bandwidth_hz))

    @property
    def beta0(self) -> float:
        return db_to_linear(self.beta0_db)

    def path_loss(self, a: Point, b: Point, alpha: float) -> float:
        d = float(np.hypot(a[0] - b[0], a[1] - b[1]))
        return self.beta0 * d ** (-alpha)

    def replace(self, **changes) -> "SystemConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SystemConfig":
        data = dict(data)
        unknown = set(data) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "alphas" in data:
            data["alphas"] = PathLossExponents(**data["alphas"])
        for key in ("bs", "ris1", "ris2", "user_center"):
            if key in data:
                data[key] = tuple(float(v) for v in data[key])
        return cls(**data)


def load_config(path) -> SystemConfig:
    """Read a JSON config; missing keys keep their defaults."""
    return SystemConfig.from_dict(json.loads(Path(path).read_text()))


def save_config(cfg: SystemConfig, path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2) + "\n")


@dataclass(frozen=True)
class ChannelSet:
    G1: np.ndarray
    G2: np.ndarray
    B: np.ndarray
    R1: np.ndarray
    R2: np.ndarray
    user_positions: np.ndarray = None

    @property
    def dims(self):
        """``(K, L, M1, M2)``"""
        return self.R1.shape[1], self.G1.shape[0], self.G1.shape[1], self.G2.shape[1]


def _cn(rng, shape, var):
    return np.sqrt(np.asarray(var) / 2) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def sample_user_positions(cfg: SystemConfig, rng: np.random.Generator) -> np.ndarray:
    """Uniform draws over the user disk, one row per user."""
    rad = cfg.user_radius * np.sqrt(rng.random(cfg.K))
    ang = 2 * np.pi * rng.random(cfg.K)
    cx, cy = cfg.user_center
    return np.column_stack([cx + rad * np.cos(ang), cy + rad * np.sin(ang)])


def generate_channels(cfg: SystemConfig, rng: np.random.Generator, max_tries: int = 100) -> ChannelSet:
    """Draw i.i.d. Rayleigh channels scaled by the distance path losses.

    The draw is repeated when a gauge scalar ``sum_k r_{i,k,1}`` vanishes
    (a probability-zero event).
    """
    a = cfg.alphas
    K, L, M1, M2 = cfg.K, cfg.L, cfg.M1, cfg.M2
    for _ in range(max_tries):
        users = sample_user_positions(cfg, rng)
        beta_u1 = np.array([cfg.path_loss(u, cfg.ris1, a.u_r1) for u in users])
        beta_u2 = np.array([cfg.path_loss(u, cfg.ris2, a.u_r2) for u in users])
        G1 = _cn(rng, (L, M1), cfg.path_loss(cfg.ris1, cfg.bs, a.r1_bs))
        G2 = _cn(rng, (L, M2), cfg.path_loss(cfg.ris2, cfg.bs, a.r2_bs))
        B = _cn(rng, (M2, M1), cfg.path_loss(cfg.ris1, cfg.ris2, a.r1_r2))
        R1 = _cn(rng, (M1, K), beta_u1[None, :])
        R2 = _cn(rng, (M2, K), beta_u2[None, :])
        if all(abs(R[0].sum()) > 1e-14 * np.linalg.norm(R) and abs(R[0, 0]) > 0 for R in (R1, R2)):
            return ChannelSet(G1, G2, B, R1, R2, users)
    raise RuntimeError("could not draw channels with non-zero gauge scalars")


@dataclass(frozen=True)
class CascadedChannels:
    """Per-user cascaded channels stacked on axis 0.

    ``J1[k]`` is ``L x M1**2``, ``J2[k]`` is ``L x M2**2`` and ``J12[k]`` is
    ``L x (M1**2 * M2**2)``.
    """

    J1: np.ndarray
    J2: np.ndarray
    J12: np.ndarray

    def per_user(self) -> np.ndarray:
        """``[J1_k, J2_k, J12_k]`` concatenated column-wise, shape ``(K, L, N)``."""
        return np.concatenate([self.J1, self.J2, self.J12], axis=2)


def cascaded_single(ch: ChannelSet, i: int, k: int) -> np.ndarray:
    """``r_{i,k}^T kron G_i`` (users and surfaces indexed from 0)."""
    G, R = (ch.G1, ch.R1) if i == 1 else (ch.G2, ch.R2)
    return kron(R[:, k][None, :], G)


def cascaded_double(ch: ChannelSet, k: int) -> np.ndarray:
    """``vec(B)^T kron r_{1,k}^T kron G2``."""
    return kron(kron(vec(ch.B).T, ch.R1[:, k][None, :]), ch.G2)


def cascaded_channels(ch: ChannelSet) -> CascadedChannels:
    K = ch.R1.shape[1]
    return CascadedChannels(
        np.stack([cascaded_single(ch, 1, k) for k in range(K)]),
        np.stack([cascaded_single(ch, 2, k) for k in range(K)]),
        np.stack([cascaded_double(ch, k) for k in range(K)]),
    )


@dataclass(frozen=True)
class CanonicalFactors:
    """Low-dimensional description of every cascaded channel.

    ``rbar1``/``rbar2`` are ``vec(R_i) / c_i`` with the first entry dropped;
    under the ``"sum"`` gauge that entry is ``1 - sum_{k>1} rbar_{i,k,1}``,
    under ``"typical_user"`` it is 1.
    """

    Qbar1: np.ndarray
    Qbar2: np.ndarray
    Bbar: np.ndarray
    rbar1: np.ndarray
    rbar2: np.ndarray
    c1: complex = None
    c2: complex = None
    gauge: str = "sum"

    def rbar_matrix(self, i: int) -> np.ndarray:
        """Full ``M_i x K`` coefficient matrix with the reference entry restored."""
        rbar, M = (self.rbar1, self.Qbar1.shape[1]) if i == 1 else (self.rbar2, self.Qbar2.shape[1])
        return unflatten_rbar(rbar, M, self.gauge)


def reference_entry(rbar: np.ndarray, M: int, gauge: str = "sum") -> complex:
    """``rbar_{i,1,1}``: forced to make the first-element column sum to one, or 1."""
    if gauge == "typical_user":
        return 1.0 + 0j
    if gauge != "sum":
        raise ValueError(f"unknown gauge {gauge!r}")
    rest = np.asarray(rbar).ravel()
    # entries rbar_{i,k,1} for k >= 2 sit at flat positions k*M - 1
    return 1.0 - rest[M - 1::M].sum()


def unflatten_rbar(rbar, M: int, gauge: str = "sum") -> np.ndarray:
    rbar = np.asarray(rbar, dtype=complex).ravel()
    full = np.concatenate([[reference_entry(rbar, M, gauge)], rbar])
    return full.reshape(M, -1, order="F")


def gauge_scalars(ch: ChannelSet, gauge: str = "sum") -> Tuple[complex, complex]:
    if gauge == "sum":
        return ch.R1[0].sum(), ch.R2[0].sum()
    if gauge == "typical_user":
        return ch.R1[0, 0], ch.R2[0, 0]
    raise ValueError(f"unknown gauge {gauge!r}")


def canonical_factors(ch: ChannelSet, gauge: str = "sum") -> CanonicalFactors:
    c1, c2 = gauge_scalars(ch, gauge)
    if c1 == 0 or c2 == 0:
        raise ZeroDivisionError("degenerate draw: gauge scalar is zero")
    return CanonicalFactors(
        Qbar1=c1 * ch.G1,
        Qbar2=c2 * ch.G2,
        Bbar=(c1 / c2) * ch.B,
        rbar1=vec(ch.R1 / c1).ravel()[1:],
        rbar2=vec(ch.R2 / c2).ravel()[1:],
        c1=c1,
        c2=c2,
        gauge=gauge,
    )


def reconstruct(f: CanonicalFactors, cfg: SystemConfig = None) -> CascadedChannels:
    """Rebuild all cascaded channels from the five factors."""
    Rb1, Rb2 = f.rbar_matrix(1), f.rbar_matrix(2)
    K = Rb1.shape[1]
    dims = (K, f.Qbar1.shape[0], Rb1.shape[0], Rb2.shape[0])
    if cfg is not None and dims != (cfg.K, cfg.L, cfg.M1, cfg.M2):
        raise ValueError("factor dimensions do not match the configuration")
    bt = vec(f.Bbar).T
    J1 = np.stack([kron(Rb1[:, k][None, :], f.Qbar1) for k in range(K)])
    J2 = np.stack([kron(Rb2[:, k][None, :], f.Qbar2) for k in range(K)])
    J12 = np.stack([kron(kron(bt, Rb1[:, k][None, :]), f.Qbar2) for k in range(K)])
    return CascadedChannels(J1, J2, J12)


def _check_unitary(phi: np.ndarray, tol: float = 1e-8):
    n = phi.shape[0]
    if np.linalg.norm(phi.conj().T @ phi - np.eye(n)) > tol * np.sqrt(n):
        raise ValueError("scattering matrix is not unitary")


def received_signal(ch: ChannelSet, frame, power: float, sigma2: float = 0.0, rng=None) -> np.ndarray:
    """BS observation for one pilot frame, shape ``(L,)``.

    ``frame`` provides ``x`` (length ``K``), ``Phi1`` and ``Phi2``. With
    ``sigma2 == 0`` the output is the noiseless channel response.
    """
    _check_unitary(frame.Phi1)
    _check_unitary(frame.Phi2)
    x = np.asarray(frame.x, dtype=complex)
    eff1 = (ch.G1 + ch.G2 @ frame.Phi2 @ ch.B) @ frame.Phi1
    y = np.sqrt(power) * (eff1 @ (ch.R1 @ x) + ch.G2 @ frame.Phi2 @ (ch.R2 @ x))
    if sigma2 > 0:
        y = y + _cn(rng, y.shape, sigma2)
    return y
