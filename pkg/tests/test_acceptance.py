"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line that is echoed in the terminal summary.
"""

import time

import numpy as np
import pytest

from doublebdris import estimator as est
from doublebdris.bench import SweepSpec, cli, monte_carlo
from doublebdris.numkit import haar_unitary, numerical_rank
from doublebdris.scenario import SystemConfig, canonical_factors, generate_channels
from doublebdris.schedule import (
    design_phi2_max_rank,
    minimum_lengths,
    overhead,
    overhead_baselines,
    plan_phase1,
    plan_phase2,
    plan_phase3,
    plan_phase4,
    plan_phase5,
    rank_f_bounds,
)

from conftest import crandn, low_rank


def _instances(n=200, seed=2024):
    """Mix of full-rank and rank-deficient ``(Q1, Q2, B)`` triples."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        L, M1, M2 = rng.integers(2, 9), rng.integers(2, 7), rng.integers(2, 6)
        kind = i % 4
        q1 = min(L, M1) if kind == 0 else rng.integers(0, min(L, M1) + 1)
        b = min(M2, M1) if kind in (0, 1) else rng.integers(0, min(M2, M1) + 1)
        q2 = min(L, M2) if kind != 3 else rng.integers(0, min(L, M2) + 1)
        out.append((low_rank(rng, L, M1, q1), low_rank(rng, L, M2, q2), low_rank(rng, M2, M1, b)))
    return out


INSTANCES = _instances()


def test_c1_overhead_golden_numbers(acceptance):
    t0 = time.perf_counter()
    for _ in range(1000):
        got = (overhead(8, 8, 4, 4, 4, 4), overhead_baselines(8, 8, 4, 4, 4, 4)["naive"],
               overhead(20, 4, 4, 4, 4, 4), overhead_baselines(20, 4, 4, 4, 4, 4)["naive"])
    per_call = (time.perf_counter() - t0) / 1000
    ok = got == (64, 2304, 100, 5760) and per_call < 1e-3
    acceptance("1 overhead golden numbers", ok, f"{got}, {per_call * 1e6:.1f} us")
    assert ok


def test_c2_noiseless_perfect_recovery(acceptance):
    t0 = time.perf_counter()
    worst = 0.0
    for dims in [(2, 4, 2, 2), (4, 8, 4, 4), (3, 6, 4, 3)]:
        cfg = SystemConfig(**dict(zip("K L M1 M2".split(), dims)))
        for seed in range(20):
            worst = max(worst, est.run_pipeline(cfg, "noiseless", rng=np.random.default_rng(seed)).nmse)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-8 and elapsed <= 10
    acceptance("2 noiseless perfect recovery", ok, f"worst nmse {worst:.2e}, {elapsed:.1f} s")
    assert ok


def test_c3_designed_rank(acceptance):
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    mismatches = 0
    for Q1, Q2, B in INSTANCES:
        des = design_phi2_max_rank(Q1, Q2, B)
        rank_f = numerical_rank(Q1 + Q2 @ des.Phi2 @ B)
        formula = min(numerical_rank(np.hstack([Q1, Q2])), numerical_rank(np.vstack([Q1, B])))
        M2 = Q2.shape[1]
        best_random = max(numerical_rank(Q1 + Q2 @ haar_unitary(M2, rng) @ B) for _ in range(500))
        mismatches += not (rank_f == formula == des.f and rank_f >= best_random)
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and elapsed <= 60
    acceptance("3 designed scattering matrix attains max rank", ok,
               f"{mismatches} mismatches / {len(INSTANCES)}, {elapsed:.1f} s")
    assert ok


def test_c4_rank_sandwich(acceptance):
    bad = 0
    for Q1, Q2, B in INSTANCES:
        f = design_phi2_max_rank(Q1, Q2, B).f
        lo, hi = rank_f_bounds(numerical_rank(Q1), numerical_rank(Q2), numerical_rank(B), *Q1.shape)
        bad += not lo <= f <= hi
    rng = np.random.default_rng(11)
    extremal_bad = 0
    for _ in range(50):
        L, M1, M2 = rng.integers(3, 9), rng.integers(3, 7), rng.integers(2, 6)
        q1 = rng.integers(1, min(L, M1) + 1)
        Q1 = low_rank(rng, L, M1, q1)
        # surface-2 columns inside Col(Q1)
        Q2, B = Q1 @ crandn(rng, M1, M2), crandn(rng, M2, M1)
        # inter-surface rows inside Row(Q1)
        Q2b, Bb = crandn(rng, L, M2), crandn(rng, M2, L) @ Q1
        for q2m, bm in ((Q2, B), (Q2b, Bb)):
            f = design_phi2_max_rank(Q1, q2m, bm).f
            lo, _ = rank_f_bounds(numerical_rank(Q1), numerical_rank(q2m), numerical_rank(bm), L, M1)
            extremal_bad += f != lo
    ok = bad == 0 and extremal_bad == 0
    acceptance("4 rank bounds sandwich and extremal cases", ok,
               f"{bad} outside bounds, {extremal_bad} extremal misses")
    assert ok


def test_c5_block_rank_identity(acceptance):
    rng = np.random.default_rng(5)
    bad = 0
    for Q1, Q2, B in INSTANCES[:100]:
        phi = haar_unitary(Q2.shape[1], rng)
        S = np.block([[Q1, Q2], [B, -phi.conj().T]])
        bad += numerical_rank(S, 1e-8) - Q2.shape[1] != numerical_rank(Q1 + Q2 @ phi @ B, 1e-8)
    acceptance("5 block rank identity", bad == 0, f"{bad} / 100 violations")
    assert bad == 0


def _design_ranks(cfg, seed):
    rng = np.random.default_rng(seed)
    f = canonical_factors(generate_channels(cfg, rng))
    q2 = numerical_rank(f.Qbar2)
    fr = design_phi2_max_rank(f.Qbar1, f.Qbar2, f.Bbar).f
    ln = minimum_lengths(cfg.K, cfg.M1, cfg.M2, q2, fr)
    p1 = plan_phase1(cfg, np.pi, ln.tau11, rng)
    p2 = plan_phase2(cfg, f.Qbar2, ln.tau21, rng)
    p3 = plan_phase3(cfg, np.pi, ln.tau31, rng)
    p4 = plan_phase4(cfg, f.Qbar2, ln.tau41, rng)
    p5 = plan_phase5(cfg, f.Qbar1, f.Qbar2, f.Bbar, ln.tau5, rng)
    mats = (est.design_A1(p1), est.design_A2(p2, f.Qbar2), est.design_A3(p3),
            est.design_A4(p4, f.Qbar2), est.design_A5(p5, f.Qbar1, f.Qbar2, f.Bbar))
    want = (cfg.M2, cfg.K * cfg.M2, cfg.M1, cfg.M1 * cfg.M2, cfg.K * cfg.M1)
    return [numerical_rank(m, 1e-8) for m in mats], list(want)


def test_c6_design_matrix_ranks(acceptance):
    bad = []
    for dims in [(8, 8, 4, 4), (3, 6, 4, 3), (5, 2, 3, 4)]:
        cfg = SystemConfig(**dict(zip("K L M1 M2".split(), dims)))
        for seed in range(50):
            got, want = _design_ranks(cfg, seed)
            if got != want:
                bad.append((dims, seed, got, want))
    acceptance("6 design matrices full rank at minimum lengths", not bad, f"{len(bad)} / 150 failures")
    assert not bad


@pytest.fixture(scope="module")
def power_sweep():
    t0 = time.perf_counter()
    rows = monte_carlo(SweepSpec(base=SystemConfig(K=8, L=8, M1=4, M2=4), axis="p_dbm",
                                 values=(10, 20, 30, 40, 50), trials=200, T=64))
    return {(r.axis_value, r.scheme): r for r in rows}, time.perf_counter() - t0


def test_c7_power_trend(acceptance, power_sweep):
    rows, elapsed = power_sweep
    lo, hi = rows[10, "proposed_sum"].mean_nmse, rows[50, "proposed_sum"].mean_nmse
    sum20, typ20 = rows[20, "proposed_sum"].mean_nmse, rows[20, "proposed_typical_user"].mean_nmse
    bench = [rows[p, "benchmark"].mean_nmse for p in (10, 20, 30, 40, 50)]
    failures = sum(r.failures for r in rows.values())
    ok = hi * 100 <= lo and sum20 <= typ20 and min(bench) >= 0.5 and elapsed <= 300 and failures == 0
    acceptance("7 noisy power trend", ok,
               f"p10 {lo:.3e} / p50 {hi:.3e} = {lo / hi:.0f}x; p20 sum {sum20:.3e} vs typical {typ20:.3e}; "
               f"benchmark min {min(bench):.3f}; {elapsed:.0f} s")
    assert ok


def test_c8_pilot_length_trend(acceptance):
    base = SystemConfig(K=4, L=8, M1=4, M2=4, p_dbm=30)
    r100, r300 = monte_carlo(SweepSpec(base=base, axis="T", values=(100, 300), trials=200,
                                       schemes=("proposed_sum",)))
    a, b = np.array(r100.samples), np.array(r300.samples)
    # trials share channel draws across T, so the paired difference carries the error bar
    d = a - b
    se_paired = d.std(ddof=1) / np.sqrt(d.size)
    gap = a.mean() - b.mean()
    ok = r100.failures == r300.failures == 0 and gap > 3 * se_paired
    acceptance("8 pilot-length trend (3 SE margin)", ok,
               f"T=100 {a.mean():.3e}, T=300 {b.mean():.3e}, gap {gap:.3e} = {gap / se_paired:.2f} paired SE "
               f"({gap / np.hypot(r100.std_error, r300.std_error):.2f} unpaired SE)")
    assert ok


def test_c9_determinism(acceptance, tmp_path):
    outs = []
    for name in ("a.csv", "b.csv"):
        path = tmp_path / name
        assert cli(["--seed", "17", "--trials", "5", "sweep", "--out", str(path)]) == 0
        outs.append(path.read_bytes())
    ok = outs[0] == outs[1] and len(outs[0].splitlines()) == 1 + 5 * 3
    acceptance("9 byte-identical sweep CSV", ok, f"{len(outs[0])} bytes")
    assert ok
