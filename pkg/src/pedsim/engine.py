"""Three-phase parallel update: choice, conflict resolution, movement."""

from __future__ import annotations

import logging
import math
import random
from collections import deque
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import behavior
from .behavior import ACTIONS, DIAGONAL, VECTORS, Group, Pedestrian, Perception
from .fields import DensityStamper, FloorField, compute_obstacle_field, compute_path_field
from .scenario import CELL_SIDE, ScenarioSpec
from .urn import UrnState, diag_penalty_events

log = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)


class ConsistencyError(RuntimeError):
    pass


@dataclass(frozen=True)
class Free:
    pass


@dataclass(frozen=True)
class Obstacle:
    pass


@dataclass(frozen=True)
class OnePed:
    ped: int


@dataclass(frozen=True)
class TwoPeds:
    first: int
    second: int

    def __post_init__(self):
        if self.first == self.second:
            raise ValueError("TwoPeds needs two distinct pedestrians")


@dataclass(frozen=True)
class ConflictGroup:
    target: tuple[int, int]
    contenders: tuple


def resolve_conflict(contenders, rng: random.Random, frict_l: float, frict_h: float,
                     target_full: bool = False):
    """Friction rule for pedestrians contending for one cell.

    Returns (movers, blocked, outcome) where outcome is "blocked", "one" or
    "both". More than two contenders are first cut down to two at random.
    """
    contenders = list(contenders)
    if target_full:
        return [], contenders, "blocked"
    blocked = []
    if len(contenders) > 2:
        keep = rng.sample(contenders, 2)
        blocked = [c for c in contenders if c not in keep]
        contenders = sorted(keep)
    r = rng.random()
    if r < frict_l:
        return [], blocked + contenders, "blocked"
    if r <= frict_h:
        winner = rng.choice(contenders)
        return [winner], blocked + [c for c in contenders if c != winner], "one"
    return contenders, blocked, "both"


def agent_rng(seed: int, stream: int | str) -> random.Random:
    return random.Random(f"{seed}:{stream}")


class World:
    """Mutable simulation state for one scenario run."""

    def __init__(self, spec: ScenarioSpec, seed: int | None = None, *,
                 generate: bool = True, check: bool = False, population: dict | None = None):
        self.spec = spec
        self.params = spec.params
        self.seed = spec.params.seed if seed is None else seed
        self.check = check
        self.W, self.H = spec.width, spec.height
        self.PW = self.W + 2
        self.periodic = spec.periodic
        self.step_count = 0
        self.step_duration = CELL_SIDE / float(spec.params.speed_max)

        self.obstacle_field = compute_obstacle_field(spec)
        self.path_fields = {d: compute_path_field(spec, d) for d in spec.destinations}
        self._path_halo = {d: f.halo.ravel().tolist() for d, f in self.path_fields.items()}
        self._obst_halo = self.obstacle_field.halo.ravel().tolist()
        self.stamper = DensityStamper(self.W, self.H, spec.params.density_radius, self.periodic)
        self._own_kernel = self.stamper.kernel

        # padded index -> real flat index (-1 outside)
        W, H, PW = self.W, self.H, self.PW
        self._real_of = [-1] * (PW * (H + 2))
        for py in range(1, H + 1):
            for px in range(PW):
                x = px - 1
                if self.periodic:
                    x %= W
                elif not 0 <= x < W:
                    continue
                self._real_of[py * PW + px] = (py - 1) * W + x
        obst = [False] * (W * H)
        for x, y in spec.obstacles:
            obst[y * W + x] = True
        self._obstacle = obst
        self._walk_p = [r >= 0 and not obst[r] for r in self._real_of]
        self._offsets = [VECTORS[a][1] * PW + VECTORS[a][0] for a in ACTIONS]

        self.dest_cells = {d: {y * W + x for x, y in m.cells} for d, m in spec.destinations.items()}
        self.slope_at = {y * W + x: v for (x, y), v in spec.slope_marker_at().items()}

        self.peds: dict[int, Pedestrian] = {}
        self.rngs: dict[int, random.Random] = {}
        self.groups: dict[int, Group] = {}
        self.occupants: dict[int, list] = {}
        self.occ = [0] * (W * H)
        self._next_id = 0
        self._next_group = 0
        self.generated = 0
        self.absorbed = 0
        self.arrivals: dict[int, int] = {}  # pedestrian id -> step of absorption
        self.last_conflicts: list[ConflictGroup] = []
        self.conflict_outcomes = {"blocked": 0, "one": 0, "both": 0}

        population = population or {}
        self._sources = []
        for sid in sorted(spec.starts):
            start = spec.starts[sid]
            gen = start.generation
            src = {
                "start": start,
                "rng": agent_rng(self.seed, f"start:{sid}"),
                "acc": 0.0,
                "pending": 0,
                "rate": float(gen.value) if gen.mode == "frequency" else 0.0,
                "spawned": 0,
                "limit": start.limit,
            }
            if gen.mode == "block":
                src["pending"] = population.get(sid, int(gen.value))
            elif sid in population:
                src["rate"] = float(population[sid])
            self._sources.append(src)
        if generate:
            self._generate()
        self.refresh_density()

    # --- geometry helpers ---------------------------------------------------

    def pidx(self, x: int, y: int) -> int:
        return (y + 1) * self.PW + x + 1

    def cell_state(self, c):
        x, y = c
        if not (0 <= x < self.W and 0 <= y < self.H):
            raise IndexError(c)
        r = y * self.W + x
        if self._obstacle[r]:
            return Obstacle()
        ids = self.occupants.get(r, [])
        if not ids:
            return Free()
        if len(ids) == 1:
            return OnePed(ids[0])
        if len(ids) == 2:
            return TwoPeds(*sorted(ids))
        raise ConsistencyError(f"cell {c} holds {len(ids)} pedestrians")

    def unwrapped(self, ped: Pedestrian) -> tuple[int, int]:
        return ped.x + ped.wraps * self.W, ped.y

    def rel(self, ped: Pedestrian, other: Pedestrian) -> tuple[float, float]:
        dx = other.x - ped.x
        if self.periodic:
            dx = (dx + self.W // 2) % self.W - self.W // 2
        return dx, other.y - ped.y

    # --- population -----------------------------------------------------------

    def add_pedestrian(self, position, dest: int, speed_d, *, group_id=None,
                       parent_group_id=None) -> Pedestrian:
        speed = Fraction(speed_d) if not isinstance(speed_d, float) else Fraction(repr(speed_d))
        x, y = position
        r = y * self.W + x
        if self._obstacle[r] or self.occ[r] >= 2:
            raise ValueError(f"cannot place pedestrian on {position}")
        pid = self._next_id
        self._next_id += 1
        ped = Pedestrian(
            id=pid, position=(x, y), dest=dest, speed_d=speed,
            urn=UrnState.for_rho(speed / self.params.speed_max),
            group_id=group_id, parent_group_id=parent_group_id, born=self.step_count,
        )
        ped.history = deque([(x, y)], maxlen=self.spec.measure.window + 1)
        self.peds[pid] = ped
        self.rngs[pid] = agent_rng(self.seed, pid)
        self.occ[r] += 1
        self.occupants.setdefault(r, []).append(pid)
        self.generated += 1
        return ped

    def new_group(self) -> Group:
        gid = self._next_group
        self._next_group += 1
        g = Group(gid)
        self.groups[gid] = g
        return g

    def relocate(self, pid: int, position) -> None:
        """Teleport a pedestrian, keeping its state (test and scenario tooling)."""
        ped = self.peds[pid]
        old = ped.y * self.W + ped.x
        self.occ[old] -= 1
        self.occupants[old].remove(pid)
        if not self.occupants[old]:
            del self.occupants[old]
        x, y = position
        r = y * self.W + x
        self.occ[r] += 1
        self.occupants.setdefault(r, []).append(pid)
        ped.position = (x, y)
        ped.history.clear()
        ped.history.append(self.unwrapped(ped))

    def remove(self, pid: int) -> None:
        ped = self.peds.pop(pid)
        self.rngs.pop(pid)
        r = ped.y * self.W + ped.x
        self.occ[r] -= 1
        self.occupants[r].remove(pid)
        if not self.occupants[r]:
            del self.occupants[r]

    def _sample_speed(self, start, rng) -> Fraction:
        u = Fraction(rng.random())
        acc = Fraction(0)
        for speed, prob in start.speeds:
            acc += prob
            if u < acc:
                return speed
        return start.speeds[-1][0]

    def _free_start_cells(self, start) -> list[tuple[int, int]]:
        return [c for c in sorted(start.cells, key=lambda c: (c[1], c[0]))
                if self.occ[c[1] * self.W + c[0]] == 0]

    def _spawn_unit(self, src) -> bool:
        """Place one pedestrian or one whole group; False if there is no room."""
        start, rng = src["start"], src["rng"]
        spec_g = start.group
        size = spec_g.members if spec_g else 1
        free = self._free_start_cells(start)
        if len(free) < size:
            return False
        first = free[rng.randrange(len(free))]
        if size == 1:
            cells = [first]
        else:
            free.sort(key=lambda c: ((c[0] - first[0]) ** 2 + (c[1] - first[1]) ** 2, c[1], c[0]))
            cells = free[:size]
        if spec_g is None:
            speed = self._sample_speed(start, rng)
            self.add_pedestrian(cells[0], start.destination, speed)
            return True
        leaves = []
        if spec_g.kind == "simple":
            root = self.new_group()
            leaves = [(root, None)]
        else:
            root = self.new_group()
            for _ in range(spec_g.subgroups):
                sub = self.new_group()
                root.subgroups.append(sub)
                leaves.append((sub, root.id))
        k = 0
        for leaf, parent in leaves:
            for _ in range(spec_g.size):
                if start.group_speeds is not None:
                    speed = start.group_speeds[k]
                else:
                    speed = self._sample_speed(start, rng)
                ped = self.add_pedestrian(cells[k], start.destination, speed,
                                          group_id=leaf.id, parent_group_id=parent)
                leaf.members.append(ped.id)
                k += 1
        return True

    def _generate(self) -> None:
        for src in self._sources:
            unit = src["start"].group.members if src["start"].group else 1
            if src["start"].generation.mode == "frequency":
                src["acc"] += src["rate"] * self.step_duration
                while src["acc"] + 1e-12 >= unit:
                    if src["limit"] is not None and src["spawned"] + unit > src["limit"]:
                        src["acc"] = 0.0
                        break
                    if not self._spawn_unit(src):
                        break  # deferred to the next step
                    src["acc"] -= unit
                    src["spawned"] += unit
            while src["pending"] >= unit:
                if not self._spawn_unit(src):
                    break
                src["pending"] -= unit
                src["spawned"] += unit
            if 0 < src["pending"] < unit:
                src["pending"] = 0

    # --- fields -------------------------------------------------------------------

    def refresh_density(self) -> None:
        positions = [self.peds[pid].position for pid in sorted(self.peds)]
        counts = None
        if len(positions) * 2 >= len(self.stamper._taps):
            counts = np.asarray(self.occ, dtype=float).reshape(self.H, self.W)
        self.density = self.stamper.values(positions, counts)
        self._dens_halo = self.stamper.halo(self.density).ravel()

    def density_field(self):
        return FloorField("density", self.density, self.stamper.halo(self.density))

    # --- perception -----------------------------------------------------------------

    def _members(self, ped: Pedestrian):
        """Relative cell offsets of perceived simple-group and structured-group members."""
        if ped.group_id is None:
            return [], []
        reach = self.params.perception_distance / CELL_SIDE
        peds = self.peds

        def seen(ids):
            out = []
            for oid in ids:
                if oid == ped.id or oid not in peds:
                    continue
                dx, dy = self.rel(ped, peds[oid])
                if math.hypot(dx, dy) <= reach + 1e-9:
                    out.append((dx, dy))
            return out

        members = seen(self.groups[ped.group_id].members)
        others = []
        if ped.parent_group_id is not None:
            root = self.groups[ped.parent_group_id]
            ids = [m for sub in root.subgroups if sub.id != ped.group_id for m in sub.members]
            others = seen(ids)
        return members, others

    def perceive(self, ped: Pedestrian) -> Perception:
        p0 = self.pidx(ped.x, ped.y)
        PW = self.PW
        path = self._path_halo[ped.dest]
        real_of, walk = self._real_of, self._walk_p
        dens, obst, occ = self._dens_halo, self._obst_halo, self.occ
        r = self.stamper.r
        k = self._own_kernel
        out_path, out_obs, out_den, out_occ, out_own, out_in = [], [], [], [], [], []
        for a, off in zip(ACTIONS, self._offsets):
            q = p0 + off
            dx, dy = VECTORS[a]
            inside = walk[q]
            if inside and dx and dy:
                inside = walk[p0 + dx] and walk[p0 + dy * PW]
            out_in.append(inside)
            out_path.append(path[q])
            out_obs.append(obst[q])
            out_den.append(dens[q])
            rq = real_of[q]
            out_occ.append(occ[rq] - (1 if a == "X" else 0) if rq >= 0 else 2)
            out_own.append(float(k[r + dy, r + dx]) if r >= 1 else (1.0 if a == "X" else 0.0))
        members, others = self._members(ped)
        return Perception(out_path, out_obs, out_den, out_occ, out_own, out_in, members, others)

    def weights_for(self, ped: Pedestrian, cache: dict | None = None) -> dict:
        p = self.params
        w = {"g": p.kappa_g, "ob": p.kappa_ob, "s": p.kappa_s, "c": p.kappa_c,
             "i": p.kappa_i, "d": p.kappa_d, "ov": p.kappa_ov}
        if ped.group_id is None:
            return w
        if cache is not None and ped.group_id in cache:
            w["c"], w["g"], w["i"] = cache[ped.group_id]
            return w
        disp = self.group_dispersion(ped.group_id)
        bal = behavior.balance_weights(disp, p.kappa_c, p.kappa_g, p.kappa_i, p.delta)
        if cache is not None:
            cache[ped.group_id] = bal
        w["c"], w["g"], w["i"] = bal
        return w

    def group_positions_m(self, group_id: int) -> list[tuple[float, float]]:
        ids = [m for m in self.groups[group_id].all_members() if m in self.peds]
        if not ids:
            return []
        ref = self.peds[ids[0]]
        out = []
        for m in ids:
            dx, dy = self.rel(ref, self.peds[m])
            out.append(((ref.x + dx) * CELL_SIDE, (ref.y + dy) * CELL_SIDE))
        return out

    def group_dispersion(self, group_id: int) -> float:
        return behavior.dispersion(self.group_positions_m(group_id))

    # --- the step -------------------------------------------------------------------

    def step(self) -> None:
        params = self.params
        W = self.W
        order = sorted(self.peds)
        weight_cache: dict = {}

        # phase 1: activation and choice against the current snapshot
        attempted: dict[int, bool] = {}
        intent: dict[int, str] = {}
        for pid in order:
            ped = self.peds[pid]
            rng = self.rngs[pid]
            go = ped.urn.activate(rng.random())
            attempted[pid] = go
            if not go:
                continue
            evaluation = behavior.evaluate(
                self.perceive(ped), ped.old_dir, self.weights_for(ped, weight_cache), params
            )
            intent[pid] = ACTIONS[behavior.choose_index(evaluation.probabilities, rng.random())]

        # phase 2: conflicts over the same target cell
        targets: dict[int, list] = {}
        for pid, action in intent.items():
            if action == "X":
                continue
            ped = self.peds[pid]
            dx, dy = VECTORS[action]
            tx, ty = ped.x + dx, ped.y + dy
            if self.periodic:
                tx %= W
            targets.setdefault(ty * W + tx, []).append(pid)

        movers = set(intent)  # X counts as a successful update
        self.last_conflicts = []
        for t in sorted(targets):
            contenders = targets[t]
            if len(contenders) < 2 and self.occ[t] < 2:
                continue
            if len(contenders) >= 2:
                self.last_conflicts.append(ConflictGroup((t % W, t // W), tuple(contenders)))
            rng = agent_rng(self.seed, f"conflict:{self.step_count}:{t}")
            won, lost, outcome = resolve_conflict(
                contenders, rng, params.frict_l, params.frict_h, target_full=self.occ[t] >= 2
            )
            if len(contenders) >= 2:
                self.conflict_outcomes[outcome] += 1
            movers.difference_update(lost)
            targets[t] = won

        # phase 3a: cap every cell at two pedestrians after the moves
        def destination(pid):
            ped = self.peds[pid]
            if pid in movers:
                dx, dy = VECTORS[intent[pid]]
                return ((ped.x + dx) % W if self.periodic else ped.x + dx), ped.y + dy
            return ped.x, ped.y

        while True:
            final: dict[int, list] = {}
            for pid in order:
                x, y = destination(pid)
                final.setdefault(y * W + x, []).append(pid)
            over = [(t, ids) for t, ids in final.items() if len(ids) > 2]
            if not over:
                break
            for t, ids in sorted(over):
                entrants = [i for i in ids if i in movers and intent[i] != "X"]
                rng = agent_rng(self.seed, f"capacity:{self.step_count}:{t}")
                rng.shuffle(entrants)
                excess = len(ids) - 2
                for pid in entrants[:excess]:
                    movers.discard(pid)
                if len(entrants) < excess:
                    raise ConsistencyError(f"cell {(t % W, t // W)} over capacity without entrants")

        # phase 3b: commit movement, urn bookkeeping, markers
        for pid in order:
            ped = self.peds[pid]
            old = ped.y * W + ped.x
            moved = pid in movers
            action = intent[pid] if moved else None
            extra = 0
            if moved and action != "X":
                dx, dy = VECTORS[action]
                nx, ny = ped.x + dx, ped.y + dy
                if self.periodic and not 0 <= nx < W:
                    ped.wraps += 1 if nx >= W else -1
                    nx %= W
                new = ny * W + nx
                self.occ[old] -= 1
                self.occupants[old].remove(pid)
                if not self.occupants[old]:
                    del self.occupants[old]
                self.occ[new] += 1
                self.occupants.setdefault(new, []).append(pid)
                ped.position = (nx, ny)
                if action in DIAGONAL:
                    ped.distance += SQRT2
                    ped.diag_penalty, extra = diag_penalty_events(
                        ped.diag_penalty, ped.urn.rho, params.diag_penalty_mode)
                else:
                    ped.distance += 1.0
                marker = self.slope_at.get(new)
                if marker is not None and self.slope_at.get(old) != marker:
                    self.process_slope_marker(ped, marker)
            if moved:
                ped.old_dir = action
                ped.moves += 1
            ped.last_action = action if moved else "X"
            ped.urn.settle(attempted[pid], moved, extra)
            ped.history.append(self.unwrapped(ped))

        # arrivals
        if not self.periodic:
            for pid in order:
                ped = self.peds[pid]
                if ped.y * W + ped.x in self.dest_cells[ped.dest]:
                    self.remove(pid)
                    self.absorbed += 1
                    self.arrivals[pid] = self.step_count

        self._generate()
        self.refresh_density()
        self.step_count += 1
        if self.check:
            self.check_consistency()

    def process_slope_marker(self, ped: Pedestrian, marker) -> None:
        sid, side = marker
        k_enter, k_exit = self.spec.slopes[sid].constants(side)
        if ped.current_area != sid:
            ped.current_area = sid
            speed = ped.speed_d * k_enter
        else:
            ped.current_area = None
            speed = ped.speed_d * k_exit
        if speed > self.params.speed_max:
            log.warning("pedestrian %d: desired speed %.3f clamped to speed_max", ped.id, float(speed))
            speed = Fraction(self.params.speed_max)
        ped.speed_d = speed
        ped.urn.set_rho(speed / self.params.speed_max)

    def check_consistency(self) -> None:
        seen: dict[int, list] = {}
        for pid, ped in self.peds.items():
            if self._obstacle[ped.y * self.W + ped.x]:
                raise ConsistencyError(f"pedestrian {pid} stands on an obstacle")
            seen.setdefault(ped.y * self.W + ped.x, []).append(pid)
        for r in range(self.W * self.H):
            ids = sorted(seen.get(r, []))
            if sorted(self.occupants.get(r, [])) != ids or self.occ[r] != len(ids):
                raise ConsistencyError(f"occupancy mismatch at {(r % self.W, r // self.W)}")
            if len(ids) > 2:
                raise ConsistencyError(f"cell {(r % self.W, r // self.W)} holds {len(ids)} pedestrians")

    def run(self, steps: int, callback=None) -> None:
        for _ in range(steps):
            self.step()
            if callback is not None:
                callback(self)
