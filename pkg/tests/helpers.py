"""Small scenario builders shared by the tests."""

from __future__ import annotations

from fractions import Fraction

from pedsim.engine import World
from pedsim.scenario import parse_scenario


def scenario_text(rows, params: str = "", sections: str = "") -> str:
    body = "\n".join(rows)
    return f"[map]\n{body}\n\n[params]\n{params}\n{sections}"


def spec_from_rows(rows, params: str = "", sections: str = ""):
    return parse_scenario(scenario_text(rows, params, sections))


def corridor_rows(length: int, width: int = 1, dest: str = "D1") -> list[str]:
    """Walled corridor running west to east with the destination column at the east end."""
    wall = "#" * length
    inner = "." * (length - 1)
    return [wall] + [inner + dest for _ in range(width)] + [wall]


def lone_world(rows, position, speed="1.6", params: str = "", dest: int = 1, seed: int = 0):
    spec = spec_from_rows(rows, params)
    world = World(spec, seed, generate=False)
    ped = world.add_pedestrian(position, dest, Fraction(speed))
    world.refresh_density()
    return world, ped


def start_section(n: int, generation: str, speeds: str, dest: int = 1, group: str = "none",
                  extra: str = "") -> str:
    return (f"\n[start.{n}]\ngeneration = {generation}\nspeeds = {speeds}\n"
            f"destination = {dest}\ngroup = {group}\n{extra}")
