"""Five-phase channel estimation and the full least-squares benchmark.

Each phase has three steps. Plan the frames, observe them through
:func:`doublebdris.scenario.received_signal`, then combine the raw
observations into an effective signal that is linear in one factor.
"""

from dataclasses import asdict, dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from . import schedule
from .metrics import nmse
from .numkit import (
    RANK_RTOL,
    SingularSystemError,
    haar_unitary,
    ls_solve,
    min_norm_lstsq,
    numerical_rank,
    unvec,
    vec,
)
from .scenario import (
    CanonicalFactors,
    CascadedChannels,
    ChannelSet,
    SystemConfig,
    cascaded_channels,
    generate_channels,
    received_signal,
    reconstruct,
)
from .schedule import PhaseLengths, PhasePlan

MODES = ("noiseless", "noisy")

#: default ceiling on ``K * L * (M1^2 + M2^2 + M1^2 M2^2)`` for the benchmark
BENCHMARK_MAX_UNKNOWNS = 200_000


@dataclass(frozen=True)
class PhaseObservations:
    phase: int
    raw: np.ndarray  # (frames, L)

    def __post_init__(self):
        if np.ndim(self.raw) != 2:
            raise ValueError("raw observations must be a (frames, L) array")


@dataclass
class EstimationResult:
    factors_hat: Optional[CanonicalFactors]
    J_hat: CascadedChannels
    q2_detected: Optional[int]
    f_detected: Optional[int]
    nmse: float
    per_phase_residuals: Dict[int, float] = field(default_factory=dict)
    lengths: Optional[PhaseLengths] = None
    pilot_count: int = 0


def observe(ch: ChannelSet, plan: PhasePlan, sigma2: float = 0.0, rng=None) -> PhaseObservations:
    y = np.stack([received_signal(ch, fr, plan.power, sigma2, rng) for fr in plan.frames])
    return PhaseObservations(plan.phase, y)


def _check(obs: PhaseObservations, plan: PhasePlan):
    if obs.phase != plan.phase:
        raise ValueError(f"phase-{obs.phase} observations given to a phase-{plan.phase} plan")
    if obs.raw.shape[0] != len(plan.frames):
        raise ValueError(f"{obs.raw.shape[0]} observations for {len(plan.frames)} frames")


def _relative_residual(a, x, y) -> float:
    ny = np.linalg.norm(y)
    return float(np.linalg.norm(y - a @ x) / ny) if ny > 0 else 0.0


def _four_part_combination(obs, plan):
    y = obs.raw.reshape(4, plan.part_length, -1)
    return ((y[0] + y[1]) / 2 - (y[2] + y[3]) / 2).T


def design_A1(plan: PhasePlan) -> np.ndarray:
    """``M2 x tau11``: column ``t`` is ``x_t`` times the first column of ``Phi2``."""
    return np.stack([fr.x[0] * fr.Phi2[:, 0] for fr in plan.part(0)], axis=1)


def design_A3(plan: PhasePlan) -> np.ndarray:
    return np.stack([fr.x[0] * fr.Phi1[:, 0] for fr in plan.part(0)], axis=1)


def design_A2(plan: PhasePlan, Qbar2_hat) -> np.ndarray:
    """Stacked ``x^T kron (Q2 Phi2)`` blocks, ``L*tau21 x K*M2``."""
    return np.vstack([np.kron(fr.x[None, :], Qbar2_hat @ fr.Phi2) for fr in plan.part(0)])


def design_A4(plan: PhasePlan, Qbar2_hat) -> np.ndarray:
    rows = [np.kron((fr.x[0] * fr.Phi1[:, 0])[None, :], Qbar2_hat @ fr.Phi2) for fr in plan.part(0)]
    return np.vstack(rows)


def design_A5(plan: PhasePlan, Qbar1_hat, Qbar2_hat, Bbar_hat) -> np.ndarray:
    rows = []
    for fr in plan.frames:
        F = Qbar1_hat + Qbar2_hat @ fr.Phi2 @ Bbar_hat
        rows.append(np.kron(fr.x[None, :], F @ fr.Phi1))
    return np.vstack(rows)


def combine_phase1(obs: PhaseObservations, plan: PhasePlan) -> Tuple[np.ndarray, np.ndarray]:
    """Effective signal ``Ybar1`` (``L x tau11``) and its design ``A1``.

    Noiselessly ``Ybar1 == c_theta * Qbar2 @ A1``.
    """
    _check(obs, plan)
    return _four_part_combination(obs, plan), design_A1(plan)


def combine_phase3(obs: PhaseObservations, plan: PhasePlan) -> Tuple[np.ndarray, np.ndarray]:
    _check(obs, plan)
    return _four_part_combination(obs, plan), design_A3(plan)


def estimate_Q2(Ybar1, A1, c_theta) -> np.ndarray:
    return ls_solve(A1, Ybar1, side="right") / c_theta


def estimate_Q1(obs3: PhaseObservations, plan3: PhasePlan) -> np.ndarray:
    Ybar3, A3 = combine_phase3(obs3, plan3)
    return ls_solve(A3, Ybar3, side="right") / plan3.c_theta


def combine_phase2(obs: PhaseObservations, plan: PhasePlan) -> np.ndarray:
    """Part average: the surface-1 paths cancel because ``Phi1`` flips sign."""
    _check(obs, plan)
    y = obs.raw.reshape(2, plan.part_length, -1)
    return ((y[0] + y[1]) / 2).ravel()


def _drop_reference(full):
    return full[1:]


def solve_phase2(obs2, plan2, Qbar2_hat):
    A2 = design_A2(plan2, Qbar2_hat)
    y = combine_phase2(obs2, plan2) / np.sqrt(plan2.power)
    full = ls_solve(A2, y)
    return full, _relative_residual(A2, full, y)


def estimate_r2(obs2: PhaseObservations, plan2: PhasePlan, Qbar2_hat) -> np.ndarray:
    """Surface-2 user coefficients without the reference entry, length ``K*M2 - 1``."""
    return _drop_reference(solve_phase2(obs2, plan2, Qbar2_hat)[0])


def combine_phase4(obs, plan, Qbar1_hat) -> np.ndarray:
    _check(obs, plan)
    y = obs.raw.reshape(2, plan.part_length, -1)
    known = np.stack([plan.c_theta * fr.x[0] * (Qbar1_hat @ fr.Phi1[:, 0]) for fr in plan.part(0)])
    return (y[0] - y[1] - known).ravel()


def solve_phase4(obs4, plan4, Qbar1_hat, Qbar2_hat):
    A4 = design_A4(plan4, Qbar2_hat)
    y = combine_phase4(obs4, plan4, Qbar1_hat) / plan4.c_theta
    b = ls_solve(A4, y)
    return b, _relative_residual(A4, b, y)


def estimate_B(obs4: PhaseObservations, plan4: PhasePlan, Qbar1_hat, Qbar2_hat) -> np.ndarray:
    b, _ = solve_phase4(obs4, plan4, Qbar1_hat, Qbar2_hat)
    return unvec(b, Qbar2_hat.shape[1], Qbar1_hat.shape[1])


def combine_phase5(obs, plan, factors_partial: CanonicalFactors) -> np.ndarray:
    """Phase-V signal minus the estimated surface-2 single-reflection part."""
    _check(obs, plan)
    Rb2 = factors_partial.rbar_matrix(2)
    q2 = factors_partial.Qbar2
    known = np.stack([np.sqrt(plan.power) * (q2 @ fr.Phi2 @ Rb2 @ fr.x) for fr in plan.frames])
    return (obs.raw - known).ravel()


def solve_phase5(obs5, plan5, factors_partial: CanonicalFactors):
    fp = factors_partial
    A5 = design_A5(plan5, fp.Qbar1, fp.Qbar2, fp.Bbar)
    y = combine_phase5(obs5, plan5, fp) / np.sqrt(plan5.power)
    full = ls_solve(A5, y)
    return full, _relative_residual(A5, full, y)


def estimate_r1(obs5: PhaseObservations, plan5: PhasePlan, factors_partial: CanonicalFactors) -> np.ndarray:
    """Surface-1 user coefficients; ``factors_partial.rbar1`` is ignored."""
    return _drop_reference(solve_phase5(obs5, plan5, factors_partial)[0])


def _resolve_lengths(lengths) -> dict:
    if lengths is None:
        return {}
    if isinstance(lengths, PhaseLengths):
        return asdict(lengths)
    unknown = set(lengths) - set(PhaseLengths.__dataclass_fields__)
    if unknown:
        raise ValueError(f"unknown phase lengths {sorted(unknown)}")
    return dict(lengths)


def run_pipeline(cfg: SystemConfig, mode: str = "noiseless", lengths=None,
                 reference_mode: str = "sum", rng: Optional[np.random.Generator] = None,
                 channels: Optional[ChannelSet] = None, theta: float = np.pi,
                 rtol: float = RANK_RTOL, randomize_pilots: bool = False) -> EstimationResult:
    """Estimate every cascaded channel with the five-phase protocol.

    Parameters
    ----------
    mode
        ``"noiseless"`` or ``"noisy"`` (noise power from ``cfg``).
    lengths
        :class:`PhaseLengths` or a partial mapping of per-part lengths;
        missing phases use their minimum for the detected ranks.
    reference_mode
        ``"sum"`` lets all users pilot the reference phases; ``"typical_user"``
        keeps users 2..K silent there.
    channels
        Ground truth to use; drawn from ``rng`` when omitted.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    ch = generate_channels(cfg, rng) if channels is None else channels
    if ch.dims != (cfg.K, cfg.L, cfg.M1, cfg.M2):
        raise ValueError("channel dimensions do not match the configuration")
    sigma2 = cfg.sigma2 if mode == "noisy" else 0.0
    taus = _resolve_lengths(lengths)
    res = {}
    kw = dict(randomize_pilots=randomize_pilots)

    plan1 = schedule.plan_phase1(cfg, theta, taus.get("tau11", cfg.M2), rng, gauge=reference_mode, **kw)
    Ybar1, A1 = combine_phase1(observe(ch, plan1, sigma2, rng), plan1)
    Q2 = estimate_Q2(Ybar1, A1, plan1.c_theta)
    res[1] = _relative_residual(Q2 * plan1.c_theta, A1, Ybar1)

    q2 = numerical_rank(Q2, rtol)
    if q2 == 0:
        raise SingularSystemError("estimated surface-2 reference channel has rank 0")
    tau21 = taus.get("tau21", schedule.minimum_slots(cfg.K, cfg.M2, q2))
    plan2 = schedule.plan_phase2(cfg, Q2, tau21, rng, rtol=rtol, **kw)
    r2_full, res[2] = solve_phase2(observe(ch, plan2, sigma2, rng), plan2, Q2)

    plan3 = schedule.plan_phase3(cfg, theta, taus.get("tau31", cfg.M1), rng, gauge=reference_mode, **kw)
    obs3 = observe(ch, plan3, sigma2, rng)
    Q1 = estimate_Q1(obs3, plan3)
    Ybar3, A3 = combine_phase3(obs3, plan3)
    res[3] = _relative_residual(Q1 * plan3.c_theta, A3, Ybar3)

    tau41 = taus.get("tau41", schedule.minimum_slots(cfg.M1, cfg.M2, q2))
    plan4 = schedule.plan_phase4(cfg, Q2, tau41, rng, theta, gauge=reference_mode, rtol=rtol, **kw)
    b, res[4] = solve_phase4(observe(ch, plan4, sigma2, rng), plan4, Q1, Q2)
    B = unvec(b, cfg.M2, cfg.M1)

    partial = CanonicalFactors(Q1, Q2, B, np.zeros(cfg.K * cfg.M1 - 1, dtype=complex),
                               _drop_reference(r2_full), gauge=reference_mode)
    f = schedule.design_phi2_max_rank(Q1, Q2, B, rtol).f
    if f == 0:
        raise SingularSystemError("aggregated surface-1 channel has rank 0")
    tau5 = taus.get("tau5", schedule.minimum_slots(cfg.K, cfg.M1, f))
    plan5 = schedule.plan_phase5(cfg, Q1, Q2, B, tau5, rng, rtol=rtol, **kw)
    r1_full, res[5] = solve_phase5(observe(ch, plan5, sigma2, rng), plan5, partial)

    factors = CanonicalFactors(Q1, Q2, B, _drop_reference(r1_full), partial.rbar2, gauge=reference_mode)
    J_hat = reconstruct(factors, cfg)
    used = PhaseLengths(plan1.part_length, plan2.part_length, plan3.part_length,
                        plan4.part_length, plan5.part_length)
    return EstimationResult(factors, J_hat, q2, f, nmse(cascaded_channels(ch), J_hat), res,
                            used, used.total)


def benchmark_features(x, Phi1, Phi2, power: float) -> np.ndarray:
    """Regressor of one frame for the unstructured model, length ``K*N``."""
    g = np.concatenate([vec(Phi1).ravel(), vec(Phi2).ravel(), vec(np.kron(Phi1.T, Phi2)).ravel()])
    return np.sqrt(power) * np.kron(np.asarray(x, dtype=complex), g)


def benchmark_full_ls(cfg: SystemConfig, T: int, rng: Optional[np.random.Generator] = None,
                      channels: Optional[ChannelSet] = None, mode: str = "noisy",
                      max_unknowns: int = BENCHMARK_MAX_UNKNOWNS) -> EstimationResult:
    """Treat every cascaded-channel coefficient as a free unknown.

    Haar scattering matrices and random-phase pilots drive ``T`` frames; the
    stacked system is solved by minimum-norm least squares, so ``T`` below
    the unknown count per antenna returns a projection rather than an error.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if T < 1:
        raise ValueError("T must be positive")
    K, L, M1, M2 = cfg.K, cfg.L, cfg.M1, cfg.M2
    N = M1 ** 2 + M2 ** 2 + M1 ** 2 * M2 ** 2
    if K * L * N > max_unknowns:
        raise MemoryError(f"{K * L * N} unknowns exceed the cap of {max_unknowns}")
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    ch = generate_channels(cfg, rng) if channels is None else channels
    sigma2 = cfg.sigma2 if mode == "noisy" else 0.0
    X = np.empty((T, K * N), dtype=complex)
    Y = np.empty((T, L), dtype=complex)
    for t in range(T):
        fr = schedule.PilotFrame(t, np.exp(2j * np.pi * rng.random(K)),
                                 haar_unitary(M1, rng), haar_unitary(M2, rng))
        X[t] = benchmark_features(fr.x, fr.Phi1, fr.Phi2, cfg.power)
        Y[t] = received_signal(ch, fr, cfg.power, sigma2, rng)
    Jt = min_norm_lstsq(X, Y)  # (K*N, L)
    J = Jt.T.reshape(L, K, N).transpose(1, 0, 2)
    J_hat = CascadedChannels(J[:, :, :M1 ** 2], J[:, :, M1 ** 2:M1 ** 2 + M2 ** 2],
                             J[:, :, M1 ** 2 + M2 ** 2:])
    res = {0: _relative_residual(X, Jt, Y)}
    return EstimationResult(None, J_hat, None, None, nmse(cascaded_channels(ch), J_hat), res, None, T)
