"""Perception, utility components, group balancing and stochastic action choice."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction

from .urn import UrnState

SQRT2 = math.sqrt(2.0)

ACTIONS = ("NW", "N", "NE", "W", "X", "E", "SW", "S", "SE")
VECTORS = {
    "NW": (-1, -1), "N": (0, -1), "NE": (1, -1),
    "W": (-1, 0), "X": (0, 0), "E": (1, 0),
    "SW": (-1, 1), "S": (0, 1), "SE": (1, 1),
}
DIAGONAL = frozenset(a for a, (dx, dy) in VECTORS.items() if dx and dy)


def _direction_bonus(old: str, new: str) -> float:
    if old == "X" or new == "X":
        return 0.0
    if old == new:
        return 1.0
    a, b = VECTORS[old], VECTORS[new]
    cos = (a[0] * b[0] + a[1] * b[1]) / (math.hypot(*a) * math.hypot(*b))
    return 0.5 if abs(cos - math.cos(math.pi / 4)) < 1e-9 else 0.0


DIRECTION_BONUS = {(o, n): _direction_bonus(o, n) for o in ACTIONS for n in ACTIONS}


@dataclass
class Pedestrian:
    id: int
    position: tuple[int, int]
    dest: int
    speed_d: Fraction
    urn: UrnState
    old_dir: str = "X"
    diag_penalty: float = 0.0
    current_area: int | None = None
    group_id: int | None = None
    parent_group_id: int | None = None
    speed_class: Fraction | None = None
    wraps: int = 0  # periodic-x seam crossings, east positive
    moves: int = 0  # successful activations, X included
    distance: float = 0.0  # cells walked
    last_action: str = "X"
    born: int = 0
    history: deque = field(default_factory=deque, repr=False)

    def __post_init__(self):
        if self.speed_class is None:
            self.speed_class = self.speed_d

    @property
    def x(self) -> int:
        return self.position[0]

    @property
    def y(self) -> int:
        return self.position[1]


@dataclass
class Group:
    id: int
    subgroups: list = field(default_factory=list)
    members: list = field(default_factory=list)

    def __post_init__(self):
        if self.subgroups and self.members:
            raise ValueError("a structured group holds no direct members")

    @property
    def simple(self) -> bool:
        return not self.subgroups

    def all_members(self) -> list[int]:
        if self.simple:
            return list(self.members)
        out = []
        for sub in self.subgroups:
            out.extend(sub.all_members())
        return out


# --- utility components ----------------------------------------------------

def _clamp(v: float, lo: float = -1.0, hi: float = 1.0) -> float:
    return lo if v < lo else hi if v > hi else v


def comp_goal(path_here: float, path_there: float) -> float:
    """Attraction toward the destination, in [-1, 1]."""
    return _clamp((path_here - path_there) / SQRT2)


def comp_obstacle(obstacle_value: float, span: float = 2.0) -> float:
    return -max(0.0, 1.0 - obstacle_value / span)


def comp_social(density_value: float, own: float, rho_sat: float = 4.0) -> float:
    """Repulsion from the density others create at a cell (own share removed)."""
    return -min(1.0, max(0.0, density_value - own) / rho_sat)


def comp_cohesion(here, there, members) -> float:
    """Attraction toward the mean position of perceived members, in [-1, 1]."""
    if not members:
        return 0.0
    d_here = sum(math.hypot(mx - here[0], my - here[1]) for mx, my in members)
    d_there = sum(math.hypot(mx - there[0], my - there[1]) for mx, my in members)
    return _clamp((d_here - d_there) / len(members) / SQRT2)


def comp_direction(action: str, old_dir: str) -> float:
    return DIRECTION_BONUS[old_dir, action]


def comp_overlap(occupants: int, density_here: float, threshold: float = 4.0) -> tuple[float, bool]:
    """(Ov value, feasible) for a non-X candidate holding ``occupants`` pedestrians."""
    if occupants == 0:
        return 0.0, True
    if occupants == 1 and density_here >= threshold:
        return -1.0, True
    return 0.0, False


def utility(action: str, components: dict, weights: dict) -> float:
    """Weighted sum of components, divided by sqrt(2) for diagonal steps."""
    total = sum(weights[k] * components.get(k, 0.0) for k in weights)
    return total / SQRT2 if action in DIAGONAL else total


# --- group dispersion ------------------------------------------------------

def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points) -> list:
    """Monotone chain; counter-clockwise hull without collinear points."""
    pts = sorted(set(map(tuple, points)))
    if len(pts) <= 2:
        return pts
    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


def convex_hull_area(points) -> float:
    hull = convex_hull(points)
    if len(hull) < 3:
        return 0.0
    s = 0.0
    for i, (x1, y1) in enumerate(hull):
        x2, y2 = hull[(i + 1) % len(hull)]
        s += x1 * y2 - x2 * y1
    return abs(s) / 2.0


def dispersion(positions_m) -> float:
    """Hull area per member, m^2 per person."""
    if not positions_m:
        return 0.0
    return convex_hull_area(positions_m) / len(positions_m)


def balance_weights(disp: float, kappa_c: float, kappa_g: float, kappa_i: float,
                    delta: float) -> tuple[float, float, float]:
    """Shift weight from goal to cohesion as a simple group disperses."""
    b = math.tanh(disp / delta)
    return (
        kappa_c / 3 + 2 * kappa_c / 3 * b,
        kappa_g / 3 + 2 * kappa_g / 3 * (1 - b),
        kappa_i / 3 + 2 * kappa_i / 3 * (1 - b),
    )


# --- perception and choice -------------------------------------------------

@dataclass
class Perception:
    """Everything an agent sees about its 9 candidate cells, in ACTIONS order."""

    path: list
    obstacle: list
    density: list
    occupants: list
    own: list  # own density contribution at each candidate
    inside: list  # walkable, in the grid, and not cutting an obstacle corner
    members: list = field(default_factory=list)  # simple-group members, relative cells
    others: list = field(default_factory=list)  # structured-group members outside own subgroup

    @property
    def here(self) -> int:
        return ACTIONS.index("X")


@dataclass
class ActionEvaluation:
    utilities: list
    feasible: list
    probabilities: list


def evaluate(perception: Perception, old_dir: str, weights: dict, params) -> ActionEvaluation:
    """Utility and choice probability for every action."""
    p = perception
    i_x = p.here
    utilities, feasible = [], []
    for k, action in enumerate(ACTIONS):
        if action == "X":
            ok, ov = True, 0.0
        elif not p.inside[k] or math.isinf(p.path[k]):
            ok, ov = False, 0.0
        else:
            ov, ok = comp_overlap(p.occupants[k], p.density[i_x], params.overlap_threshold)
        feasible.append(ok)
        if not ok:
            utilities.append(-math.inf)
            continue
        dx, dy = VECTORS[action]
        comps = {
            "g": 0.0 if action == "X" else comp_goal(p.path[i_x], p.path[k]),
            "ob": comp_obstacle(p.obstacle[k], params.obstacle_span),
            "s": comp_social(p.density[k], p.own[k], params.rho_sat),
            "c": 0.0 if action == "X" else comp_cohesion((0, 0), (dx, dy), p.members),
            "i": 0.0 if action == "X" else comp_cohesion((0, 0), (dx, dy), p.others),
            "d": comp_direction(action, old_dir),
            "ov": ov,
        }
        utilities.append(utility(action, comps, weights))
    return ActionEvaluation(utilities, feasible, softmax(utilities))


def softmax(utilities) -> list:
    top = max(utilities)
    ex = [math.exp(u - top) if u != -math.inf else 0.0 for u in utilities]
    total = sum(ex)
    return [e / total for e in ex]


def choose_index(probabilities, u: float) -> int:
    acc = 0.0
    last = 0
    for k, p in enumerate(probabilities):
        if p <= 0.0:
            continue
        acc += p
        last = k
        if u < acc:
            return k
    return last


def choose_action(evaluation: ActionEvaluation, rng) -> str:
    return ACTIONS[choose_index(evaluation.probabilities, rng.random())]
