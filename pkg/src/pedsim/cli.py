"""Command line front-end: ``pedsim run`` and ``pedsim sweep``.

Exit codes: 0 success, 1 unreadable or malformed scenario, 2 semantic
validation error, 3 inconsistency detected while simulating.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .engine import ConsistencyError
from .metrics import fd_rows, write_fd_csv
from .runner import run_scenario
from .scenario import (
    ScenarioSyntaxError,
    ScenarioValidationError,
    load_scenario,
    validate_slope_pairs,
)

log = logging.getLogger("pedsim")

EXIT_OK, EXIT_PARSE, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2, 3


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def resolve_scenario_path(name: str) -> Path:
    """A file path, or the name of a scenario shipped with the package."""
    path = Path(name)
    if path.is_file():
        return path
    shipped = Path(__file__).parent / "scenarios" / (path.stem + ".scn")
    if path.parent == Path(".") and shipped.is_file():
        return shipped
    raise CliError(f"scenario not found: {name}", EXIT_PARSE)


def load_checked(name: str):
    path = resolve_scenario_path(name)
    try:
        spec = load_scenario(path)
    except ScenarioSyntaxError as exc:
        raise CliError(f"{path}: {exc}", EXIT_PARSE) from None
    except ScenarioValidationError as exc:
        raise CliError(f"{path}: {exc}", EXIT_VALIDATION) from None
    except (OSError, UnicodeDecodeError) as exc:
        raise CliError(f"{path}: {exc}", EXIT_PARSE) from None
    try:
        violations = validate_slope_pairs(spec)
    except ScenarioValidationError as exc:
        raise CliError(f"{path}: {exc}", EXIT_VALIDATION) from None
    if violations:
        raise CliError(f"{path}: " + "; ".join(violations), EXIT_VALIDATION)
    return spec


def _on_off(text: str) -> bool:
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected on or off")
    return text == "on"


def _fraction(text: str) -> float:
    v = float(text)
    if not 0.0 <= v < 1.0:
        raise argparse.ArgumentTypeError("warm-up fraction must be in [0, 1)")
    return v


def parse_ladder(text: str, cast=float) -> list:
    """``10,20,40`` or an inclusive range ``lo:hi:step``."""
    text = text.strip()
    if ":" in text:
        lo, hi, step = (float(p) for p in text.split(":"))
        if step <= 0:
            raise argparse.ArgumentTypeError("ladder step must be positive")
        out, k = [], 0
        while lo + k * step <= hi + 1e-9:
            out.append(cast(round(lo + k * step, 9)))
            k += 1
        return out
    return [cast(p) for p in text.split(",") if p.strip()]


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scenario", required=True, help="scenario file or shipped scenario name")
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--seed", type=int, default=None, help="defaults to the scenario seed")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--trajectories", type=_on_off, default=False, metavar="on|off")
    p.add_argument("--warmup-frac", type=_fraction, default=0.1)
    p.add_argument("--check", action="store_true", help="verify occupancy after every step")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pedsim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate one scenario")
    _common(run)
    run.add_argument("--agents", type=int, default=None, help="override block start populations")
    run.add_argument("--inflow", type=float, default=None, help="override frequency starts (persons/s)")

    sweep = sub.add_parser("sweep", help="run a population or inflow ladder")
    _common(sweep)
    ladder = sweep.add_mutually_exclusive_group(required=True)
    ladder.add_argument("--agents", dest="agents_ladder", type=lambda s: parse_ladder(s, int),
                        help="agent counts, e.g. 10,20,40 or 10:200:10")
    ladder.add_argument("--inflow", dest="inflow_ladder", type=parse_ladder,
                        help="inflow rates in persons/s, e.g. 0.5,2.0")
    return parser


def _run_one(spec, args, out_dir: Path, agents=None, inflow=None):
    try:
        result = run_scenario(
            spec, args["steps"], args["seed"], out_dir=out_dir, agents=agents, inflow=inflow,
            trajectories=args["trajectories"], warmup_frac=args["warmup_frac"], check=args["check"],
        )
    except ConsistencyError as exc:
        raise CliError(f"runtime inconsistency: {exc}", EXIT_RUNTIME) from None
    return result.summary(), list(result.metrics.fd)


def cmd_run(args) -> int:
    spec = load_checked(args.scenario)
    opts = vars(args)
    summary, _ = _run_one(spec, opts, Path(args.out_dir), args.agents, args.inflow)
    print(summary)
    return EXIT_OK


def _rung_label(k: int, kind: str, value) -> str:
    return f"rung{k:02d}_{kind}_{value:g}"


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("PEDSIM_THREADS", os.cpu_count() or 1)))
    except ValueError:
        return 1


def cmd_sweep(args) -> int:
    spec = load_checked(args.scenario)
    opts = {k: v for k, v in vars(args).items() if k in ("steps", "seed", "trajectories", "warmup_frac", "check")}
    if args.agents_ladder is not None:
        kind, values = "agents", args.agents_ladder
    else:
        kind, values = "inflow", args.inflow_ladder
    if not values:
        raise CliError("empty ladder", EXIT_VALIDATION)
    out = Path(args.out_dir)
    jobs = []
    for k, v in enumerate(values):
        kw = {"agents": v} if kind == "agents" else {"inflow": v}
        jobs.append((_rung_label(k, kind, v), kw))

    workers = min(_threads(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_one, spec, opts, out / label, **kw) for label, kw in jobs]
            results = [f.result() for f in futures]
    else:
        results = [_run_one(spec, opts, out / label, **kw) for label, kw in jobs]

    pooled = []
    for (label, _), (summary, fd) in zip(jobs, results):
        print(f"{label}: {summary}")
        pooled.extend(fd)
    write_fd_csv(out / "fd.csv", fd_rows(pooled))
    print(f"sweep: {len(jobs)} rungs, {len(pooled)} fundamental-diagram samples -> {out / 'fd.csv'}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.steps < 0:
            raise CliError("--steps must be >= 0", EXIT_VALIDATION)
        return cmd_run(args) if args.command == "run" else cmd_sweep(args)
    except CliError as exc:
        print(f"pedsim: error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
