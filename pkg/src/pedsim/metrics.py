"""Density/speed sampling, per-class speed tables and cumulative mean density."""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .scenario import CELL_SIDE


@dataclass(frozen=True)
class MeasurementArea:
    x0: int
    y0: int
    x1: int
    y1: int
    cells: int  # walkable cells inside the rectangle

    @property
    def area(self) -> float:
        return self.cells * CELL_SIDE**2

    def contains(self, x: int, y: int) -> bool:
        return self.x0 <= x <= self.x1 and self.y0 <= y <= self.y1

    @classmethod
    def for_spec(cls, spec) -> "MeasurementArea":
        if spec.measure.area is not None:
            x0, y0, x1, y1 = spec.measure.area
        else:
            walk = spec.walkable_cells()
            x0, x1 = min(x for x, _ in walk), max(x for x, _ in walk)
            y0, y1 = min(y for _, y in walk), max(y for _, y in walk)
        cells = sum(1 for x in range(x0, x1 + 1) for y in range(y0, y1 + 1) if spec.walkable((x, y)))
        if cells == 0:
            raise ValueError("measurement area holds no walkable cell")
        return cls(x0, y0, x1, y1, cells)


def ped_speed(world, ped, window: int) -> float | None:
    """Mean speed (m/s) from the displacement over the last ``window`` steps."""
    hist = ped.history
    if len(hist) < window + 1:
        return None
    (xa, ya), (xb, yb) = hist[-window - 1], hist[-1]
    return math.hypot(xb - xa, yb - ya) * CELL_SIDE / (window * world.step_duration)


def sample_fundamental(world, area: MeasurementArea, window: int = 10):
    """(density persons/m^2, mean speed m/s, speeds by pedestrian) or None if empty."""
    inside = [p for p in world.peds.values() if area.contains(p.x, p.y)]
    if not inside:
        return None
    density = len(inside) / area.area
    speeds = {}
    for p in inside:
        v = ped_speed(world, p, window)
        if v is not None:
            speeds[p.id] = v
    if not speeds:
        return None
    return density, sum(speeds.values()) / len(speeds), speeds


@dataclass
class CmdGrid:
    """Running sum of perceived density per cell and number of visits."""

    total: np.ndarray
    count: np.ndarray

    @classmethod
    def empty(cls, width: int, height: int) -> "CmdGrid":
        return cls(np.zeros((height, width)), np.zeros((height, width), dtype=np.int64))

    def values(self) -> np.ndarray:
        out = np.full(self.total.shape, np.nan)
        seen = self.count > 0
        out[seen] = self.total[seen] / self.count[seen]
        return out


def update_cmd(cmd: CmdGrid, world) -> CmdGrid:
    """Add each pedestrian's perceived density (own share removed, persons/m^2)."""
    dens = world.density
    for ped in world.peds.values():
        x, y = ped.position
        cmd.total[y, x] += (dens[y, x] - 1.0) / 4.0
        cmd.count[y, x] += 1
    return cmd


def per_class_speeds(samples, bin_width: float = 0.5):
    """Mean and sd of observed speed per (desired-speed class, density bin).

    ``samples`` holds (speed class m/s, observed speed m/s, density /m^2).
    Rows are (class, bin lower edge, mean, sd, n).
    """
    groups = defaultdict(list)
    for cls, speed, density in samples:
        groups[float(cls), math.floor(density / bin_width) * bin_width].append(speed)
    rows = []
    for (cls, lo), vals in sorted(groups.items()):
        arr = np.asarray(vals)
        rows.append((cls, lo, float(arr.mean()), float(arr.std(ddof=1)) if len(arr) > 1 else 0.0, len(arr)))
    return rows


def class_means(samples) -> dict[float, float]:
    groups = defaultdict(list)
    for cls, speed, _ in samples:
        groups[float(cls)].append(speed)
    return {c: float(np.mean(v)) for c, v in sorted(groups.items())}


def fd_rows(fd_samples, bin_width: float = 0.25):
    """Bin (density, speed) samples; rows are (mean density, mean speed, n)."""
    groups = defaultdict(list)
    for density, speed in fd_samples:
        groups[math.floor(density / bin_width + 1e-9)].append((density, speed))
    rows = []
    for _, pairs in sorted(groups.items()):
        d = np.asarray(pairs)
        rows.append((float(d[:, 0].mean()), float(d[:, 1].mean()), len(pairs)))
    return rows


@dataclass
class MetricsAccumulator:
    area: MeasurementArea
    window: int
    cmd: CmdGrid
    fd: list = field(default_factory=list)
    classes: list = field(default_factory=list)
    stairs: list = field(default_factory=list)  # observed speed inside slope areas

    @classmethod
    def for_world(cls, world) -> "MetricsAccumulator":
        spec = world.spec
        return cls(MeasurementArea.for_spec(spec), spec.measure.window, CmdGrid.empty(world.W, world.H))

    def record(self, world) -> None:
        update_cmd(self.cmd, world)
        sample = sample_fundamental(world, self.area, self.window)
        if sample is None:
            return
        density, mean_speed, speeds = sample
        self.fd.append((density, mean_speed))
        for pid, v in speeds.items():
            ped = world.peds[pid]
            self.classes.append((ped.speed_class, v, density))
            if ped.current_area is not None:
                self.stairs.append((ped.speed_class, v, density))


def write_fd_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["density", "mean_speed", "n_samples"])
        for density, speed, n in rows:
            w.writerow([f"{density:.6f}", f"{speed:.6f}", n])


def write_classes_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["class", "density_bin", "mean", "sd", "n"])
        for cls, lo, mean, sd, n in rows:
            w.writerow([f"{cls:.3f}", f"{lo:.2f}", f"{mean:.6f}", f"{sd:.6f}", n])


def write_pgm(path, values: np.ndarray) -> float:
    """16-bit binary PGM; NaN/inf cells are written as 0 (masked).

    Defined values map to ``1 + round(value * scale)``. The scale is written
    to a ``.scale.txt`` sidecar and returned.
    """
    path = Path(path)
    finite = np.isfinite(values)
    vmax = float(values[finite].max()) if finite.any() else 0.0
    scale = 65534.0 / vmax if vmax > 0 else 1.0
    pix = np.zeros(values.shape, dtype=">u2")
    pix[finite] = 1 + np.round(np.clip(values[finite], 0, None) * scale).astype(np.int64)
    h, w = values.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
        fh.write(pix.tobytes())
    sidecar = path.with_suffix(".scale.txt")
    sidecar.write_text(
        f"file = {path.name}\nscale = {scale!r}\noffset = 1\nmasked = 0\n"
        f"value = (pixel - offset) / scale\n",
        encoding="utf-8",
    )
    return scale


def read_pgm(path) -> tuple[np.ndarray, float]:
    """Inverse of write_pgm: values (NaN where masked) and the scale."""
    path = Path(path)
    data = path.read_bytes()
    parts = data.split(b"\n", 3)
    assert parts[0] == b"P5"
    w, h = map(int, parts[1].split())
    pix = np.frombuffer(parts[3], dtype=">u2").reshape(h, w).astype(float)
    meta = dict(
        line.split(" = ", 1)
        for line in path.with_suffix(".scale.txt").read_text().splitlines()
        if " = " in line
    )
    scale = float(meta["scale"])
    out = np.where(pix == 0, np.nan, (pix - 1) / scale)
    return out, scale
