"""Run a scenario for a number of steps and collect metrics and outputs."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass
from pathlib import Path

from .engine import World
from .metrics import (
    MetricsAccumulator,
    fd_rows,
    per_class_speeds,
    write_classes_csv,
    write_fd_csv,
    write_pgm,
)
from .scenario import ScenarioSpec

TRAJECTORY_HEADER = ["step", "pedestrian", "x", "y", "action", "speed_d", "area"]


@dataclass
class RunResult:
    world: World
    metrics: MetricsAccumulator
    steps: int
    wall_clock: float

    @property
    def steps_per_second(self) -> float:
        return self.steps / self.wall_clock if self.wall_clock > 0 else float("inf")

    def summary(self) -> str:
        w = self.world
        return (f"steps={self.steps} generated={w.generated} absorbed={w.absorbed} "
                f"active={len(w.peds)} wall_clock={self.wall_clock:.2f}s "
                f"steps_per_second={self.steps_per_second:.1f}")


def population_override(spec: ScenarioSpec, agents: int | None = None,
                        inflow: float | None = None) -> dict:
    """Per-start overrides: ``agents`` split over block starts in proportion to
    their declared counts, ``inflow`` (persons/s) applied to every frequency start."""
    out = {}
    if agents is not None:
        blocks = {sid: int(s.generation.value) for sid, s in spec.starts.items()
                  if s.generation.mode == "block"}
        total = sum(blocks.values())
        left = agents
        for k, (sid, n) in enumerate(sorted(blocks.items())):
            share = left if k == len(blocks) - 1 else (round(agents * n / total) if total else agents // len(blocks))
            out[sid] = share
            left -= share
    if inflow is not None:
        for sid, s in spec.starts.items():
            if s.generation.mode == "frequency":
                out[sid] = inflow
    return out


def _trajectory_rows(world: World):
    for pid in sorted(world.peds):
        ped = world.peds[pid]
        yield (world.step_count, pid, ped.x, ped.y, ped.last_action,
               repr(float(ped.speed_d)), "" if ped.current_area is None else ped.current_area)


def run_scenario(spec: ScenarioSpec, steps: int, seed: int | None = None, *,
                 out_dir=None, agents: int | None = None, inflow: float | None = None,
                 trajectories: bool = False, warmup_frac: float = 0.1,
                 check: bool = False, callback=None) -> RunResult:
    """Simulate ``steps`` steps; metrics are recorded after the warm-up."""
    world = World(spec, seed, check=check, population=population_override(spec, agents, inflow))
    metrics = MetricsAccumulator.for_world(world)
    warmup = int(steps * warmup_frac)
    out = Path(out_dir) if out_dir is not None else None
    traj_fh = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        if trajectories:
            traj_fh = open(out / "trajectories.csv", "w", newline="")
            traj = csv.writer(traj_fh)
            traj.writerow(TRAJECTORY_HEADER)
            traj.writerows(_trajectory_rows(world))
    t0 = time.perf_counter()
    try:
        for k in range(steps):
            world.step()
            if traj_fh is not None:
                traj.writerows(_trajectory_rows(world))
            if k >= warmup:
                metrics.record(world)
            if callback is not None:
                callback(world)
    finally:
        if traj_fh is not None:
            traj_fh.close()
    result = RunResult(world, metrics, steps, time.perf_counter() - t0)
    if out is not None:
        write_outputs(result, out)
    return result


def write_outputs(result: RunResult, out: Path) -> None:
    m = result.metrics
    write_fd_csv(out / "fd.csv", fd_rows(m.fd))
    write_classes_csv(out / "classes.csv", per_class_speeds(m.classes))
    write_pgm(out / "cmd.pgm", m.cmd.values())
