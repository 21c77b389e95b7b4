"""Monte-Carlo sweeps, CSV output and the ``doublebdris`` command line.

Trial ``i`` of a sweep with seed ``s`` draws its channels from the stream
``SeedSequence([s, i, 0])`` and its pilots and noise from ``[s, i, 1]`` (the
benchmark uses ``[s, i, 2]``). Every axis value and scheme therefore sees
the same channel realizations, which keeps comparisons along a sweep paired.
"""

import argparse
import csv
import io
import json
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import schedule
from .estimator import BENCHMARK_MAX_UNKNOWNS, benchmark_full_ls, run_pipeline
from .metrics import nmse
from .scenario import SystemConfig, generate_channels

__all__ = ["SweepSpec", "SweepRow", "monte_carlo", "nmse", "write_csv", "cli", "main"]

AXES = ("p_dbm", "T", "K", "M2")
SCHEMES = ("proposed_sum", "proposed_typical_user", "benchmark")
CSV_COLUMNS = ("axis", "value", "scheme", "mean_nmse", "trials", "seed")


@dataclass(frozen=True)
class SweepSpec:
    """One Monte-Carlo experiment.

    ``T`` fixes the total pilot budget when the axis is not ``"T"``; ``None``
    runs each scheme at the proposed protocol's minimum length.
    """

    base: SystemConfig = field(default_factory=SystemConfig)
    axis: str = "p_dbm"
    values: tuple = (10, 20, 30, 40, 50)
    trials: int = 200
    schemes: tuple = ("proposed_sum", "proposed_typical_user", "benchmark")
    out_path: Optional[str] = None
    seed: int = 0
    T: Optional[int] = 64
    mode: str = "noisy"
    max_unknowns: int = BENCHMARK_MAX_UNKNOWNS

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValueError(f"axis must be one of {AXES}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        vals = tuple(self.values)
        if not vals or list(vals) != sorted(vals):
            raise ValueError("values must be nonempty and sorted")
        object.__setattr__(self, "values", vals)
        bad = set(self.schemes) - set(SCHEMES)
        if bad or not self.schemes:
            raise ValueError(f"unknown schemes {sorted(bad)}")
        object.__setattr__(self, "schemes", tuple(self.schemes))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["base"] = self.base.to_dict()
        d["values"] = list(self.values)
        d["schemes"] = list(self.schemes)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "SweepSpec":
        data = dict(data)
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown sweep keys {sorted(unknown)}")
        if "base" in data:
            data["base"] = SystemConfig.from_dict(data["base"])
        for key in ("values", "schemes"):
            if key in data:
                data[key] = tuple(data[key])
        return cls(**data)


def load_sweep_spec(path) -> SweepSpec:
    return SweepSpec.from_dict(json.loads(Path(path).read_text()))


def save_sweep_spec(spec: SweepSpec, path) -> None:
    Path(path).write_text(json.dumps(spec.to_dict(), indent=2) + "\n")


@dataclass(frozen=True)
class SweepRow:
    axis: str
    axis_value: float
    scheme: str
    mean_nmse: float
    trial_count: int
    seed: int
    failures: int = 0
    std_error: float = float("nan")
    samples: tuple = ()


def trial_rng(seed: int, trial: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, trial, stream]))


def _point(spec: SweepSpec, value):
    """Config and pilot budget for one axis value."""
    cfg, T = spec.base, spec.T
    if spec.axis == "T":
        T = int(value)
    elif spec.axis == "p_dbm":
        cfg = cfg.replace(p_dbm=float(value))
    else:
        cfg = cfg.replace(**{spec.axis: int(value)})
    return cfg, T


def _proposed_lengths(cfg, T):
    if T is None:
        return None
    return schedule.allocate_lengths(T, cfg.K, cfg.L, cfg.M1, cfg.M2)


def run_trial(spec: SweepSpec, cfg: SystemConfig, T: Optional[int], scheme: str, trial: int) -> float:
    ch = generate_channels(cfg, trial_rng(spec.seed, trial, 0))
    if scheme == "benchmark":
        if T is None:
            q2, f = schedule.nominal_ranks(cfg.L, cfg.M1, cfg.M2)
            T = schedule.overhead(cfg.K, cfg.L, cfg.M1, cfg.M2, q2, f)
        res = benchmark_full_ls(cfg, T, trial_rng(spec.seed, trial, 2), channels=ch,
                                mode=spec.mode, max_unknowns=spec.max_unknowns)
    else:
        gauge = "sum" if scheme == "proposed_sum" else "typical_user"
        res = run_pipeline(cfg, spec.mode, _proposed_lengths(cfg, T), gauge,
                           trial_rng(spec.seed, trial, 1), channels=ch)
    return res.nmse


def monte_carlo(spec: SweepSpec) -> List[SweepRow]:
    """Mean NMSE per (axis value, scheme), rows in axis order.

    Failed trials (rank deficiency, too short a budget, memory cap) are
    counted in ``SweepRow.failures`` and left out of the mean.
    """
    rows = []
    for value in spec.values:
        cfg, T = _point(spec, value)
        for scheme in spec.schemes:
            vals, failures = [], 0
            for i in range(spec.trials):
                try:
                    vals.append(run_trial(spec, cfg, T, scheme, i))
                except (np.linalg.LinAlgError, ValueError, MemoryError, ZeroDivisionError):
                    failures += 1
            v = np.asarray(vals)
            mean = float(v.mean()) if v.size else float("nan")
            se = float(v.std(ddof=1) / np.sqrt(v.size)) if v.size > 1 else float("nan")
            rows.append(SweepRow(spec.axis, value, scheme, mean, v.size, spec.seed, failures, se, tuple(vals)))
    return rows


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def rows_to_csv(rows: Sequence[SweepRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([r.axis, _fmt(r.axis_value), r.scheme, _fmt(r.mean_nmse), r.trial_count, r.seed])
    return buf.getvalue()


def write_csv(rows: Sequence[SweepRow], path) -> None:
    Path(path).write_bytes(rows_to_csv(rows).encode())


# command line -------------------------------------------------------------

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _global_flags(p, suppress):
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", default=d, help="JSON system config or sweep spec")
    p.add_argument("--seed", type=int, default=d)
    p.add_argument("--trials", type=int, default=d)
    p.add_argument("--out", default=d, help="output path")


def _dim_flags(p):
    for name in ("K", "L", "M1", "M2"):
        p.add_argument(f"--{name}", type=int)
    p.add_argument("--p-dbm", type=float, dest="p_dbm")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="doublebdris", description="Cascaded BD-RIS channel estimation toolkit")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("overhead", help="pilot overhead of the proposed and baseline schemes (CSV)")
    _global_flags(p, suppress=True)
    _dim_flags(p)
    for name in ("q1", "q2", "f"):
        p.add_argument(f"--{name}", type=int, help="rank override (default: dimension-limited)")

    p = sub.add_parser("simulate", help="run the estimator and print NMSE")
    _global_flags(p, suppress=True)
    _dim_flags(p)
    p.add_argument("--noiseless", action="store_true")
    p.add_argument("--typical-user", action="store_true", help="single-user reference phases")
    p.add_argument("--T", type=int, help="total pilot budget (default: minimum)")
    p.add_argument("--benchmark", action="store_true", help="run the unstructured LS benchmark")

    p = sub.add_parser("sweep", help="Monte-Carlo sweep to CSV")
    _global_flags(p, suppress=True)

    p = sub.add_parser("selftest", help="quick internal consistency checks")
    _global_flags(p, suppress=True)
    return parser


def _read_config(path):
    """``(SystemConfig, SweepSpec or None)`` from a JSON file."""
    if path is None:
        return SystemConfig(), None
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    try:
        if "base" in data or "axis" in data:
            spec = SweepSpec.from_dict(data)
            return spec.base, spec
        return SystemConfig.from_dict(data), None
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid config {path}: {exc}") from exc


def _apply_overrides(cfg, args):
    changes = {k: getattr(args, k) for k in ("K", "L", "M1", "M2", "p_dbm") if getattr(args, k, None) is not None}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    try:
        return cfg.replace(**changes) if changes else cfg
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _emit(text, out):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _cmd_overhead(args, cfg):
    nq2, nf = schedule.nominal_ranks(cfg.L, cfg.M1, cfg.M2)
    q1 = args.q1 or min(cfg.L, cfg.M1)
    q2, f = args.q2 or nq2, args.f or nf
    total = schedule.overhead(cfg.K, cfg.L, cfg.M1, cfg.M2, q2, f)
    table = {"proposed": total, **schedule.overhead_baselines(cfg.K, cfg.L, cfg.M1, cfg.M2, q1, q2)}
    lines = ["scheme,pilots"] + [f"{k},{v}" for k, v in table.items()]
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def _cmd_simulate(args, cfg):
    mode = "noiseless" if args.noiseless else "noisy"
    trials = args.trials or 1
    vals = []
    for i in range(trials):
        ch = generate_channels(cfg, trial_rng(cfg.seed, i, 0))
        if args.benchmark:
            T = args.T or schedule.overhead(cfg.K, cfg.L, cfg.M1, cfg.M2, *schedule.nominal_ranks(cfg.L, cfg.M1, cfg.M2))
            res = benchmark_full_ls(cfg, T, trial_rng(cfg.seed, i, 2), channels=ch, mode=mode)
        else:
            lengths = _proposed_lengths(cfg, args.T)
            gauge = "typical_user" if args.typical_user else "sum"
            res = run_pipeline(cfg, mode, lengths, gauge, trial_rng(cfg.seed, i, 1), channels=ch)
        vals.append(res.nmse)
        if trials == 1:
            print(f"pilots {res.pilot_count}")
            if res.q2_detected is not None:
                print(f"ranks q2={res.q2_detected} f={res.f_detected}")
            for phase, r in sorted(res.per_phase_residuals.items()):
                print(f"residual phase {phase}: {r:.3e}")
    print(f"nmse {np.mean(vals):.6e}" + (f" (mean of {trials} trials)" if trials > 1 else ""))
    return EXIT_OK


def _cmd_sweep(args, spec):
    if spec is None:
        spec = SweepSpec()
    changes = {k: getattr(args, k) for k in ("seed", "trials") if getattr(args, k, None) is not None}
    if getattr(args, "out", None):
        changes["out_path"] = args.out
    try:
        spec = replace(spec, **changes)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    rows = monte_carlo(spec)
    text = rows_to_csv(rows)
    if spec.out_path:
        write_csv(rows, spec.out_path)
    else:
        sys.stdout.write(text)
    for r in rows:
        if r.failures:
            print(f"{r.scheme} at {r.axis}={r.axis_value}: {r.failures} failed trials", file=sys.stderr)
    return EXIT_OK


def selftest(seed: int = 0) -> List[str]:
    """Run fast invariant checks; returns the names of failed checks."""
    failed = []
    if schedule.overhead(8, 8, 4, 4, 4, 4) != 64 or schedule.overhead(20, 4, 4, 4, 4, 4) != 100:
        failed.append("overhead")
    rng = np.random.default_rng(seed)
    for dims in [(2, 4, 2, 2), (4, 8, 4, 4), (3, 6, 4, 3)]:
        cfg = SystemConfig(**dict(zip(("K", "L", "M1", "M2"), dims)))
        for gauge in ("sum", "typical_user"):
            if run_pipeline(cfg, "noiseless", reference_mode=gauge, rng=rng).nmse > 1e-8:
                failed.append(f"noiseless recovery {dims} {gauge}")
    for _ in range(20):
        q1 = rng.integers(0, 5)
        Q1 = (rng.standard_normal((6, q1)) + 1j * rng.standard_normal((6, q1))) @ \
            (rng.standard_normal((q1, 5)) + 1j * rng.standard_normal((q1, 5)))
        Q2 = rng.standard_normal((6, 4)) + 1j * rng.standard_normal((6, 4))
        B = rng.standard_normal((4, 5)) + 1j * rng.standard_normal((4, 5))
        des = schedule.design_phi2_max_rank(Q1, Q2, B)
        if schedule.numerical_rank(Q1 + Q2 @ des.Phi2 @ B) != des.f:
            failed.append("rank design")
            break
    return failed


def _cmd_selftest(args):
    failed = selftest(args.seed or 0)
    for name in failed:
        print(f"FAIL {name}")
    print("selftest " + ("failed" if failed else "passed"))
    return EXIT_NUMERIC if failed else EXIT_OK


def cli(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point; returns the process exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.trials is not None and args.trials < 1:
            raise UsageError("--trials must be >= 1")
        cfg, spec = _read_config(args.config)
        if args.command == "sweep":
            return _cmd_sweep(args, spec)
        if args.command == "selftest":
            return _cmd_selftest(args)
        cfg = _apply_overrides(cfg, args)
        if args.command == "overhead":
            return _cmd_overhead(args, cfg)
        return _cmd_simulate(args, cfg)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except (np.linalg.LinAlgError, ZeroDivisionError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except schedule.ScheduleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(cli())
