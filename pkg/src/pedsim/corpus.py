"""Builders for the benchmark scenarios shipped in ``pedsim/scenarios``.

Each builder returns scenario text; ``write_corpus`` regenerates the files.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from .scenario import ScenarioSpec, parse_scenario

MIXED_SPEEDS = "1.2:1/4, 1.4:1/2, 1.6:1/4"
UNIFORM_SPEEDS = "1.2:1/3, 1.4:1/3, 1.6:1/3"
STAIR_FACTOR = "2.33"


def _rows(grid) -> str:
    return "\n".join("".join(row) for row in grid)


def _blank(width: int, height: int) -> list[list[str]]:
    return [["." for _ in range(width)] for _ in range(height)]


def _walls(grid, rows=(0, -1)) -> None:
    for y in rows:
        grid[y] = ["#"] * len(grid[y])


def _start(n, generation, speeds, dest, group="none", extra="") -> str:
    text = (f"\n[start.{n}]\ngeneration = {generation}\nspeeds = {speeds}\n"
            f"destination = {dest}\ngroup = {group}\n")
    return text + extra


def corridor_periodic(length: int = 50, width: int = 6, agents: int = 60,
                      bidirectional: bool = False, speeds: str = MIXED_SPEEDS,
                      params: str = "") -> str:
    """Closed-loop corridor for fundamental diagrams; density stays at agents/area."""
    grid = _blank(length, width + 2)
    _walls(grid)
    for y in range(1, width + 1):
        for x in range(length):
            if x == length - 1:
                grid[y][x] = "D1"
            elif x == 0 and bidirectional:
                grid[y][x] = "D2"
            elif bidirectional and (x + y) % 2:
                grid[y][x] = "S2"
            else:
                grid[y][x] = "S1"
    text = "[map]\n" + _rows(grid) + "\n\n[params]\nboundary_mode = periodic-x\n" + params
    if bidirectional:
        text += _start(1, f"block({agents - agents // 2})", speeds, 1)
        text += _start(2, f"block({agents // 2})", speeds, 2)
    else:
        text += _start(1, f"block({agents})", speeds, 1)
    text += f"\n[measure]\narea = 0,1,{length - 1},{width}\nwindow = 10\n"
    return text


def corridor_open(length: int = 60, width: int = 6, inflow: str = "0.5",
                  speeds: str = MIXED_SPEEDS, measure_from: int = 10, params: str = "") -> str:
    """Open corridor, west to east, fed at a constant rate."""
    grid = _blank(length, width + 2)
    _walls(grid)
    for y in range(1, width + 1):
        grid[y][0] = "S1"
        grid[y][length - 1] = "D1"
    text = "[map]\n" + _rows(grid) + "\n\n[params]\n" + params
    text += _start(1, f"frequency({inflow})", speeds, 1)
    text += f"\n[measure]\narea = {measure_from},1,{length - 1 - measure_from},{width}\nwindow = 10\n"
    return text


def corridor_group(length: int = 60, width: int = 6, counterflow: str = "0.6",
                   params: str = "") -> str:
    """A simple group of four (one slow member) against an opposing stream."""
    grid = _blank(length, width + 2)
    _walls(grid)
    for y in range(1, width + 1):
        grid[y][0] = "D2"
        grid[y][length - 1] = "D1"
        for x in (2, 3):
            grid[y][x] = "S1"
        grid[y][length - 3] = "S2"
    text = "[map]\n" + _rows(grid) + "\n\n[params]\n" + params
    text += _start(1, "block(4)", "1.4:1", 1, "simple(4)", "group_speeds = 1.0, 1.4, 1.4, 1.4\n")
    text += _start(2, f"frequency({counterflow})", MIXED_SPEEDS, 2)
    text += f"\n[measure]\narea = 5,1,{length - 6},{width}\nwindow = 10\n"
    return text


def stair_corridor(length: int = 70, width: int = 6, stair_from: int = 20, stair_to: int = 50,
                   inflow: str = "0.5", factor: str = STAIR_FACTOR, speeds: str = MIXED_SPEEDS,
                   params: str = "") -> str:
    """Corridor with a stair section; speeds drop by ``factor`` between the markers."""
    grid = _blank(length, width + 2)
    _walls(grid)
    for y in range(1, width + 1):
        grid[y][0] = "S1"
        grid[y][length - 1] = "D1"
        grid[y][stair_from] = "A1a"
        grid[y][stair_to] = "A1b"
    text = "[map]\n" + _rows(grid) + "\n\n[params]\n" + params
    text += _start(1, f"frequency({inflow})", speeds, 1)
    text += (f"\n[slope.1]\nk_enter_a = 1/{factor}\nk_exit_a = {factor}\n"
             f"k_enter_b = 1/{factor}\nk_exit_b = {factor}\n")
    text += f"\n[measure]\narea = {stair_from + 4},1,{stair_to - 4},{width}\nwindow = 10\n"
    return text


# T-junction geometry: two branches of BRANCH cells meet a stem of STEM cells.
T_BRANCH, T_WIDTH, T_STEM = 25, 6, 25


def t_junction(inflow: str = "1.0", params: str = "") -> str:
    """Left and right branches merge into a southbound stem."""
    width = 2 * T_BRANCH + T_WIDTH
    height = 1 + T_WIDTH + T_STEM
    grid = [["#"] * width for _ in range(height)]
    for y in range(1, T_WIDTH + 1):
        for x in range(width):
            grid[y][x] = "."
        grid[y][0] = "S1"
        grid[y][width - 1] = "S2"
    for y in range(T_WIDTH + 1, height):
        for x in range(T_BRANCH, T_BRANCH + T_WIDTH):
            grid[y][x] = "D1" if y == height - 1 else "."
    text = "[map]\n" + _rows(grid) + "\n\n[params]\n" + params
    text += _start(1, f"frequency({inflow})", MIXED_SPEEDS, 1)
    text += _start(2, f"frequency({inflow})", MIXED_SPEEDS, 1)
    return text


def t_junction_regions() -> dict[str, list[tuple[int, int]]]:
    """Cells of the merge corners and of the two branch entries."""
    width = 2 * T_BRANCH + T_WIDTH
    x0, x1 = T_BRANCH, T_BRANCH + T_WIDTH - 1
    ys = range(T_WIDTH - 2, T_WIDTH + 3)
    merge = [(x, y) for y in ys for x in list(range(x0 - 1, x0 + 2)) + list(range(x1 - 1, x1 + 2))
             if y <= T_WIDTH or x0 <= x <= x1]
    entry = [(x, y) for y in range(1, T_WIDTH + 1) for x in (2, 3, 4, width - 5, width - 4, width - 3)]
    return {"merge": merge, "entry": entry}


CORPUS = {
    "corridor_uni": lambda: corridor_periodic(agents=60),
    "corridor_bi": lambda: corridor_periodic(agents=60, bidirectional=True),
    "corridor_group": corridor_group,
    "stair_corridor": stair_corridor,
    "t_junction": lambda: t_junction(inflow="1.0"),
}


def write_corpus(directory) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    out = []
    for name, build in CORPUS.items():
        path = directory / f"{name}.scn"
        path.write_text(build(), encoding="utf-8")
        out.append(path)
    return out


def shipped(name: str) -> ScenarioSpec:
    text = resources.files("pedsim").joinpath("scenarios", f"{name}.scn").read_text(encoding="utf-8")
    return parse_scenario(text, name=name)
