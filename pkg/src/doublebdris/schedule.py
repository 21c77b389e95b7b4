"""Pilot and scattering-matrix schedules for the five estimation phases.

Every phase plan is a flat list of :class:`PilotFrame` objects in transmission
order. Phases I and III use four equal parts, phases II and IV two, phase V
one. Index sets inside :class:`GroupedDesign` are 0-based.
"""

from dataclasses import dataclass, field, replace
from math import ceil, gcd
from typing import List, NamedTuple, Optional, Tuple

import numpy as np

from .numkit import RANK_RTOL, haar_unitary, numerical_rank, orthonormal_completion, svd
from .scenario import SystemConfig


class ScheduleError(ValueError):
    """A requested phase length is too short for the design."""


@dataclass(frozen=True)
class PilotFrame:
    t: int
    x: np.ndarray
    Phi1: np.ndarray
    Phi2: np.ndarray


@dataclass(frozen=True)
class GroupedDesign:
    """Assignment of ``N`` unknown blocks (users or elements) to time slots.

    Each block carries ``M`` unknowns and a time slot resolves ``q`` of them,
    so ``ceil(N * M / q)`` slots suffice. Blocks are split into groups of
    ``base_count``; within group ``n`` block ``j`` is active in the slots
    ``support_sets[n][j]`` (positions inside the group's slot range).
    """

    N: int
    M: int
    q: int
    tau: int
    base_count: int
    tau0: int
    eta: int
    group_sizes: Tuple[int, ...]
    index_sets: Tuple[Tuple[int, ...], ...]
    time_sizes: Tuple[int, ...]
    time_sets: Tuple[Tuple[int, ...], ...]
    support_sets: Tuple[Tuple[Tuple[int, ...], ...], ...]

    def slots(self):
        """Yield ``(t, n, r)``: slot, group and position inside the group."""
        for n, times in enumerate(self.time_sets):
            for r, t in enumerate(times):
                yield t, n, r

    def incidence(self) -> np.ndarray:
        """Boolean ``tau x N`` matrix, True where block ``j`` is active at slot ``t``."""
        act = np.zeros((self.tau, self.N), dtype=bool)
        for t, n, r in self.slots():
            for j, blk in enumerate(self.index_sets[n]):
                if r in self.support_sets[n][j]:
                    act[t, blk] = True
        return act


def minimum_slots(N: int, M: int, q: int) -> int:
    return ceil(N * M / q)


def grouped_design(N: int, M: int, q: int, tau: Optional[int] = None) -> GroupedDesign:
    if not 1 <= q <= M:
        raise ValueError(f"rank q={q} must lie in [1, {M}]")
    need = minimum_slots(N, M, q)
    tau = need if tau is None else tau
    if tau < need:
        raise ScheduleError(f"{tau} slots < required {need}")
    base = q // gcd(M, q)
    tau0 = M * base // q
    eta = N // base
    sizes = [base] * eta + [N - eta * base]
    idx = [tuple(range(n * base, n * base + s)) for n, s in enumerate(sizes)]
    tsizes = [tau0] * eta + [tau - eta * tau0]
    tsets = [tuple(range(n * tau0, n * tau0 + s)) for n, s in enumerate(tsizes)]

    def support(j):
        # 1-based j; the first block starts at slot 1, later ones share a
        # boundary slot with their predecessor
        lo = 1 if j == 1 else ceil((j - 1) * M / q)
        hi = ceil(j * M / q)
        return tuple(range(lo - 1, hi))

    supports = tuple(tuple(support(j) for j in range(1, s + 1)) for s in sizes)
    return GroupedDesign(N, M, q, tau, base, tau0, eta, tuple(sizes), tuple(idx),
                         tuple(tsizes), tuple(tsets), supports)


def row_rotation(P: np.ndarray, r: int, q: int) -> np.ndarray:
    """``P`` with its rows cycled up by ``r * q`` (slot ``r`` is 0-based)."""
    return np.roll(P, -(r * q) % P.shape[0], axis=0)


def c_theta(power: float, theta: float) -> complex:
    return np.sqrt(power) * (1 - np.exp(1j * theta))


@dataclass(frozen=True)
class PhasePlan:
    phase: int
    frames: Tuple[PilotFrame, ...]
    power: float
    theta: float = np.pi
    phi: Optional[float] = None
    parts: int = 1
    meta: dict = field(default_factory=dict)

    @property
    def c_theta(self) -> complex:
        return c_theta(self.power, self.theta)

    @property
    def part_length(self) -> int:
        return len(self.frames) // self.parts

    def part(self, i: int) -> Tuple[PilotFrame, ...]:
        n = self.part_length
        return self.frames[i * n:(i + 1) * n]


def _number(frames):
    return tuple(replace(fr, t=i) for i, fr in enumerate(frames))


def _unit_scalars(n, rng, randomize):
    if randomize:
        return np.exp(2j * np.pi * rng.random(n))
    return np.ones(n, dtype=complex)


def _reference_pilots(K, scalar, gauge):
    x = np.full(K, scalar, dtype=complex)
    if gauge == "typical_user":
        x[1:] = 0
    elif gauge != "sum":
        raise ValueError(f"unknown gauge {gauge!r}")
    return x


def _perturb_first_column(phi, theta):
    out = phi.copy()
    out[:, 0] *= np.exp(1j * theta)
    return out


def _check_theta(theta):
    if not 0 < theta < 2 * np.pi:
        raise ValueError("theta must lie in (0, 2*pi)")


def plan_phase1(cfg: SystemConfig, theta: float, tau11: int, rng: np.random.Generator,
                gauge: str = "sum", randomize_pilots: bool = False) -> PhasePlan:
    """Schedule isolating the surface-2 reference channel.

    Surface 1 toggles sign between parts 1/2 (and 3/4) so every path through
    it cancels in the part average; surface 2 cycles the columns of a fixed
    unitary and perturbs column 1 by ``exp(j theta)`` in parts 3-4.
    """
    _check_theta(theta)
    if tau11 < cfg.M2:
        raise ScheduleError(f"phase I needs tau11 >= M2 = {cfg.M2}")
    D = haar_unitary(cfg.M1, rng)
    P = haar_unitary(cfg.M2, rng)
    xs = _unit_scalars(tau11, rng, randomize_pilots)
    base = []
    for t in range(tau11):
        phi2 = np.roll(P, -t, axis=1) if t < cfg.M2 else haar_unitary(cfg.M2, rng)
        base.append((_reference_pilots(cfg.K, xs[t], gauge), phi2))
    frames = [PilotFrame(0, x, D, phi2) for x, phi2 in base]
    frames += [PilotFrame(0, x, -D, phi2) for x, phi2 in base]
    frames += [PilotFrame(0, x, D, _perturb_first_column(phi2, theta)) for x, phi2 in base]
    frames += [PilotFrame(0, x, -D, _perturb_first_column(phi2, theta)) for x, phi2 in base]
    return PhasePlan(1, _number(frames), cfg.power, theta, parts=4,
                     meta={"tau_part": tau11, "gauge": gauge, "D": D, "P": P})


def plan_phase3(cfg: SystemConfig, theta: float, tau31: int, rng: np.random.Generator,
                gauge: str = "sum", randomize_pilots: bool = False) -> PhasePlan:
    """Mirror of phase I isolating the surface-1 reference channel."""
    _check_theta(theta)
    if tau31 < cfg.M1:
        raise ScheduleError(f"phase III needs tau31 >= M1 = {cfg.M1}")
    D = haar_unitary(cfg.M1, rng)
    P = haar_unitary(cfg.M2, rng)
    xs = _unit_scalars(tau31, rng, randomize_pilots)
    base = []
    for t in range(tau31):
        phi1 = np.roll(D, -t, axis=1) if t < cfg.M1 else haar_unitary(cfg.M1, rng)
        base.append((_reference_pilots(cfg.K, xs[t], gauge), phi1))
    frames = [PilotFrame(0, x, phi1, P) for x, phi1 in base]
    frames += [PilotFrame(0, x, phi1, -P) for x, phi1 in base]
    frames += [PilotFrame(0, x, _perturb_first_column(phi1, theta), P) for x, phi1 in base]
    frames += [PilotFrame(0, x, _perturb_first_column(phi1, theta), -P) for x, phi1 in base]
    return PhasePlan(3, _number(frames), cfg.power, theta, parts=4,
                     meta={"tau_part": tau31, "gauge": gauge, "D": D, "P": P})


def plan_phase2(cfg: SystemConfig, Qbar2_hat: np.ndarray, tau21: int, rng: np.random.Generator,
                rtol: float = RANK_RTOL, randomize_pilots: bool = False) -> PhasePlan:
    """Grouped user schedule for the surface-2 user coefficients."""
    q2 = numerical_rank(Qbar2_hat, rtol)
    if q2 == 0:
        raise ScheduleError("estimated surface-2 reference channel has rank 0")
    need = minimum_slots(cfg.K, cfg.M2, q2)
    if tau21 < need:
        raise ScheduleError(f"phase II needs tau21 >= {need}, got {tau21}")
    design = grouped_design(cfg.K, cfg.M2, q2)
    V = svd(Qbar2_hat).V
    D = haar_unitary(cfg.M1, rng)
    P = haar_unitary(cfg.M2, rng)
    act = design.incidence()
    cs = _unit_scalars(need, rng, randomize_pilots)
    base = []
    for t, n, r in design.slots():
        base.append((np.where(act[t], cs[t], 0).astype(complex), V @ row_rotation(P, r, q2)))
    for _ in range(tau21 - need):
        base.append((_unit_scalars(cfg.K, rng, True), haar_unitary(cfg.M2, rng)))
    frames = [PilotFrame(0, x, D, phi2) for x, phi2 in base]
    frames += [PilotFrame(0, x, -D, phi2) for x, phi2 in base]
    return PhasePlan(2, _number(frames), cfg.power, parts=2,
                     meta={"tau_part": tau21, "q2": q2, "designed": need, "design": design,
                           "D": D, "P": P})


def plan_phase4(cfg: SystemConfig, Qbar2_hat: np.ndarray, tau41: int, rng: np.random.Generator,
                theta: float = np.pi, gauge: str = "sum", rtol: float = RANK_RTOL,
                randomize_pilots: bool = False) -> PhasePlan:
    """Grouped element schedule for the inter-surface channel.

    The first column of ``Phi1`` plays the role that user pilots play in
    phase II: it switches on a group of surface-1 elements per slot.
    """
    _check_theta(theta)
    q2 = numerical_rank(Qbar2_hat, rtol)
    if q2 == 0:
        raise ScheduleError("estimated surface-2 reference channel has rank 0")
    need = minimum_slots(cfg.M1, cfg.M2, q2)
    if tau41 < need:
        raise ScheduleError(f"phase IV needs tau41 >= {need}, got {tau41}")
    design = grouped_design(cfg.M1, cfg.M2, q2)
    V = svd(Qbar2_hat).V
    P = haar_unitary(cfg.M2, rng)
    act = design.incidence()
    xs = _unit_scalars(tau41, rng, randomize_pilots)
    base = []
    for t, n, r in design.slots():
        col = act[t] / np.sqrt(act[t].sum())
        base.append((orthonormal_completion(col), V @ row_rotation(P, r, q2)))
    for _ in range(tau41 - need):
        base.append((haar_unitary(cfg.M1, rng), haar_unitary(cfg.M2, rng)))
    xs = [_reference_pilots(cfg.K, s, gauge) for s in xs]
    frames = [PilotFrame(0, x, phi1, phi2) for x, (phi1, phi2) in zip(xs, base)]
    frames += [PilotFrame(0, x, _perturb_first_column(phi1, theta), phi2)
               for x, (phi1, phi2) in zip(xs, base)]
    return PhasePlan(4, _number(frames), cfg.power, theta, parts=2,
                     meta={"tau_part": tau41, "q2": q2, "designed": need, "design": design,
                           "gauge": gauge, "P": P})


class Phi2Design(NamedTuple):
    Phi2: np.ndarray
    f: int
    phi: float
    eigenvalues: np.ndarray


def _normalized(a):
    n = np.linalg.norm(a, 2) if a.size else 0.0
    return a / n if n > 0 else a


def stacked_ranks(Qbar1, Qbar2, Bbar, rtol: float = RANK_RTOL) -> Tuple[int, int, int]:
    """``(rank Q1, rank [Q1, Q2], rank [Q1; B])`` with blocks scaled to unit norm.

    Rescaling a block leaves these ranks unchanged but keeps the relative
    threshold meaningful when the blocks live on very different scales.
    """
    q1n, q2n, bn = _normalized(Qbar1), _normalized(Qbar2), _normalized(Bbar)
    return (numerical_rank(Qbar1, rtol),
            numerical_rank(np.hstack([q1n, q2n]), rtol),
            numerical_rank(np.vstack([q1n, bn]), rtol))


def max_rank_f(Qbar1, Qbar2, Bbar, rtol: float = RANK_RTOL) -> int:
    _, r12, r1b = stacked_ranks(Qbar1, Qbar2, Bbar, rtol)
    return min(r12, r1b)


def design_phi2_max_rank(Qbar1, Qbar2, Bbar, rtol: float = RANK_RTOL, grid: int = 360,
                         unit_band: float = 1e-6) -> Phi2Design:
    """Surface-2 scattering matrix maximizing ``rank(Q1 + Q2 Phi2 B)``.

    ``Phi2 = exp(j phi) V2 U_B^H`` aligns the right singular vectors of the
    part of ``Q2`` outside ``Col(Q1)`` with the left singular vectors of the
    part of ``B`` outside ``Row(Q1)``. The phase ``phi`` is picked on a grid to
    keep ``I + exp(j phi) Ft`` as far from singular as possible.
    """
    Qbar1, Qbar2, Bbar = (np.asarray(m, dtype=complex) for m in (Qbar1, Qbar2, Bbar))
    q1, r12, r1b = stacked_ranks(Qbar1, Qbar2, Bbar, rtol)
    c = min(r12, r1b) - q1
    s1 = svd(Qbar1)
    U11, U12 = s1.U[:, :q1], s1.U[:, q1:]
    V11, V12 = s1.V[:, :q1], s1.V[:, q1:]
    V_q2t = svd(U12.conj().T @ Qbar2).V
    U_bt = svd(Bbar @ V12).U
    M2 = Qbar2.shape[1]
    mask = np.ones(M2)
    mask[:c] = 0
    Ft = ((U11.conj().T @ Qbar2 @ V_q2t) * mask) @ U_bt.conj().T @ Bbar @ V11
    Ft = Ft / s1.singular_values[:q1, None]
    lam = np.linalg.eigvals(Ft) if q1 else np.zeros(0, dtype=complex)
    phis = 2 * np.pi * np.arange(grid) / grid
    if lam.size:
        margin = np.abs(1 + np.exp(1j * phis)[:, None] * lam[None, :]).min(axis=1)
        phi = float(phis[np.argmax(margin)])
        forbidden = np.mod(np.angle(-1 / lam[np.abs(np.abs(lam) - 1) <= unit_band]), 2 * np.pi)
        assert not np.any(np.isclose(forbidden, phi, atol=1e-12)), "phase grid hit a singular angle"
    else:
        phi = 0.0
    Phi2 = np.exp(1j * phi) * V_q2t @ U_bt.conj().T
    return Phi2Design(Phi2, q1 + c, phi, lam)


def rank_f_bounds(q1: int, q2: int, b: int, L: int, M1: int) -> Tuple[int, int]:
    """Range of the maximal rank over all channel realizations with given ranks."""
    m = min(q2, b)
    return max(q1, m), min(q1 + m, L, M1)


def plan_phase5(cfg: SystemConfig, Qbar1_hat, Qbar2_hat, Bbar_hat, tau5: int,
                rng: np.random.Generator, rtol: float = RANK_RTOL,
                randomize_pilots: bool = False) -> PhasePlan:
    """Fixed designed ``Phi2``; grouped user schedule over ``Phi1 = V_F D_t``."""
    des = design_phi2_max_rank(Qbar1_hat, Qbar2_hat, Bbar_hat, rtol)
    f = des.f
    if f == 0:
        raise ScheduleError("aggregated surface-1 channel has rank 0")
    need = minimum_slots(cfg.K, cfg.M1, f)
    if tau5 < need:
        raise ScheduleError(f"phase V needs tau5 >= {need}, got {tau5}")
    F = Qbar1_hat + Qbar2_hat @ des.Phi2 @ Bbar_hat
    V = svd(F).V
    design = grouped_design(cfg.K, cfg.M1, f)
    D = haar_unitary(cfg.M1, rng)
    act = design.incidence()
    cs = _unit_scalars(need, rng, randomize_pilots)
    frames: List[PilotFrame] = []
    for t, n, r in design.slots():
        x = np.where(act[t], cs[t], 0).astype(complex)
        frames.append(PilotFrame(0, x, V @ row_rotation(D, r, f), des.Phi2))
    for _ in range(tau5 - need):
        frames.append(PilotFrame(0, _unit_scalars(cfg.K, rng, True), haar_unitary(cfg.M1, rng), des.Phi2))
    return PhasePlan(5, _number(frames), cfg.power, phi=des.phi, parts=1,
                     meta={"tau_part": tau5, "f": f, "designed": need, "design": design,
                           "eigenvalues": des.eigenvalues, "D": D})


@dataclass(frozen=True)
class PhaseLengths:
    """Per-part lengths ``(tau11, tau21, tau31, tau41, tau5)``."""

    tau11: int
    tau21: int
    tau31: int
    tau41: int
    tau5: int

    @property
    def total(self) -> int:
        return 4 * self.tau11 + 2 * self.tau21 + 4 * self.tau31 + 2 * self.tau41 + self.tau5


def minimum_lengths(K: int, M1: int, M2: int, q2: int, f: int) -> PhaseLengths:
    return PhaseLengths(M2, ceil(K * M2 / q2), M1, ceil(M1 * M2 / q2), ceil(K * M1 / f))


def nominal_ranks(L: int, M1: int, M2: int) -> Tuple[int, int]:
    """``(q2, f)`` for rich-scattering channels: limited only by dimensions."""
    return min(L, M2), min(L, M1)


def allocate_lengths(T: int, K: int, L: int, M1: int, M2: int,
                     q2: Optional[int] = None, f: Optional[int] = None) -> PhaseLengths:
    """Split a total pilot budget ``T`` across the five phases.

    Every phase is stretched by the common factor ``T / T_min`` (rounded
    down); leftover slots go to phase V, which has no part structure.
    """
    nq2, nf = nominal_ranks(L, M1, M2)
    base = minimum_lengths(K, M1, M2, q2 or nq2, f or nf)
    if T < base.total:
        raise ScheduleError(f"pilot budget {T} below the minimum {base.total}")
    s = T / base.total
    tau11, tau21, tau31, tau41 = (max(v, int(s * v)) for v in (base.tau11, base.tau21, base.tau31, base.tau41))
    used = 4 * tau11 + 2 * tau21 + 4 * tau31 + 2 * tau41
    return PhaseLengths(tau11, tau21, tau31, tau41, T - used)


def overhead(K: int, L: int, M1: int, M2: int, q2: int, f: int) -> int:
    """Total pilots for noiseless recovery with the five-phase protocol."""
    return minimum_lengths(K, M1, M2, q2, f).total


def overhead_baselines(K: int, L: int, M1: int, M2: int, q1: int, q2: int) -> dict:
    """Pilot counts of the comparison schemes."""
    return {
        "naive": K * (M1 ** 2 + M2 ** 2 + M1 ** 2 * M2 ** 2),
        "double_diag": M1 + M2 + ceil((K - 1) * M1 / q1) + ceil((K - 1) * M2 / q2) + ceil(M1 * M2 / q2),
        "single_bdris": 2 * M1 + ceil(M1 * (K - 1) / q1),
        "single_diag": M1 + ceil(M1 * (K - 1) / q1),
    }
