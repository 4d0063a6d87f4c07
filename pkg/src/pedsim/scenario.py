"""Scenario description: grid, spatial markers, generation profiles and parameters.

Scenario files are plain UTF-8 text made of ``[section]`` blocks::

    [map]
    #########
    S1.....D1
    #########

    [params]
    speed_max = 1.6
    frict_l = 0.9

    [start.1]
    generation = block(10)
    speeds = 1.2:1/3, 1.4:1/3, 1.6:1/3
    destination = 1
    group = none

Map tokens are ``.`` (free), ``#`` (obstacle), ``S<n>``, ``D<n>``, ``A<n>a`` and
``A<n>b``. Rows may be written compactly or as comma separated tokens. Lines
starting with ``;`` are comments.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, fields, replace
from fractions import Fraction
from pathlib import Path
from typing import Union

CELL_SIDE = 0.4

Number = Union[Fraction, float]
Cell = tuple[int, int]

_TOKEN_RE = re.compile(r"A\d+[ab]|S\d+|D\d+|[.#]")
_SECTION_RE = re.compile(r"^\[([A-Za-z_]+)(?:\.(\d+))?\]\s*$")


class ScenarioError(ValueError):
    pass


class ScenarioSyntaxError(ScenarioError):
    def __init__(self, message: str, line: int, column: int = 1):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class ScenarioValidationError(ScenarioError):
    pass


def parse_number(text: str) -> Fraction:
    """Parse ``1.4``, ``3`` or ``1/2.33`` into an exact fraction."""
    text = text.strip()
    try:
        if "/" in text:
            num, den = text.split("/", 1)
            return Fraction(num.strip()) / Fraction(den.strip())
        return Fraction(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise ValueError(f"not a number: {text!r}") from exc


def format_number(value: Number) -> str:
    if isinstance(value, Fraction):
        return str(value)
    return repr(float(value))


@dataclass(frozen=True)
class GridGeometry:
    width: int
    height: int
    cell_side: float = CELL_SIDE
    boundary_mode: str = "open"

    @property
    def max_density(self) -> float:
        return 1.0 / self.cell_side**2

    def contains(self, cell: Cell) -> bool:
        x, y = cell
        return 0 <= x < self.width and 0 <= y < self.height


@dataclass(frozen=True)
class CalibrationParams:
    """Model weights and thresholds, defaults tuned on the periodic corridor."""

    kappa_g: float = 14.0
    kappa_ob: float = 1.0
    kappa_s: float = 1.0
    kappa_c: float = 40.0
    kappa_i: float = 1.0
    kappa_d: float = 4.0
    kappa_ov: float = 20.0
    delta: float = 2.5
    density_radius: float = 1.2
    frict_l: float = 0.9
    frict_h: float = 0.98
    speed_max: Fraction = Fraction(8, 5)
    perception_distance: float = 5.0
    rho_sat: float = 4.0
    obstacle_span: float = 2.0
    overlap_threshold: float = 4.0
    diag_penalty_mode: str = "scaled"
    seed: int = 0

    @property
    def step_duration(self) -> float:
        return CELL_SIDE / float(self.speed_max)


# file key -> attribute name
_PARAM_KEYS = {
    "kappa_g": "kappa_g",
    "kappa_ob": "kappa_ob",
    "kappa_s": "kappa_s",
    "kappa_c": "kappa_c",
    "kappa_i": "kappa_i",
    "kappa_d": "kappa_d",
    "kappa_ov": "kappa_ov",
    "delta": "delta",
    "R": "density_radius",
    "frict_l": "frict_l",
    "frict_h": "frict_h",
    "speed_max": "speed_max",
    "perception_distance": "perception_distance",
    "rho_sat": "rho_sat",
    "obstacle_span": "obstacle_span",
    "overlap_threshold": "overlap_threshold",
    "diag_penalty_mode": "diag_penalty_mode",
    "seed": "seed",
}
_PARAM_ATTRS = {v: k for k, v in _PARAM_KEYS.items()}


@dataclass(frozen=True)
class Generation:
    mode: str  # "block" or "frequency"
    value: Number  # count, or persons per second

    def __str__(self) -> str:
        if self.mode == "block":
            return f"block({int(self.value)})"
        return f"frequency({format_number(self.value)})"


@dataclass(frozen=True)
class GroupSpec:
    kind: str  # "simple" or "structured"
    subgroups: int
    size: int  # members per simple (sub)group

    @property
    def members(self) -> int:
        return self.subgroups * self.size

    def __str__(self) -> str:
        if self.kind == "simple":
            return f"simple({self.size})"
        return f"structured({self.subgroups}x{self.size})"


@dataclass(frozen=True)
class StartArea:
    id: int
    cells: frozenset
    generation: Generation
    speeds: tuple  # ((speed m/s, probability), ...)
    destination: int
    group: GroupSpec | None = None
    group_speeds: tuple | None = None
    limit: int | None = None


@dataclass(frozen=True)
class DestinationArea:
    id: int
    cells: frozenset


@dataclass(frozen=True)
class SlopeArea:
    """A stair or ramp delimited by two boundary markers, sides ``a`` and ``b``."""

    id: int
    cells_a: frozenset
    cells_b: frozenset
    k_enter_a: Number = Fraction(1)
    k_exit_a: Number = Fraction(1)
    k_enter_b: Number = Fraction(1)
    k_exit_b: Number = Fraction(1)

    def constants(self, side: str) -> tuple[Number, Number]:
        if side == "a":
            return self.k_enter_a, self.k_exit_a
        return self.k_enter_b, self.k_exit_b


@dataclass(frozen=True)
class MeasurementSpec:
    area: tuple[int, int, int, int] | None = None  # x0, y0, x1, y1 inclusive
    window: int = 10


@dataclass(frozen=True)
class ScenarioSpec:
    geometry: GridGeometry
    tokens: tuple  # rows of map tokens, kept for serialisation
    obstacles: frozenset
    starts: dict = field(default_factory=dict)
    destinations: dict = field(default_factory=dict)
    slopes: dict = field(default_factory=dict)
    params: CalibrationParams = field(default_factory=CalibrationParams)
    measure: MeasurementSpec = field(default_factory=MeasurementSpec)
    name: str = ""

    def __hash__(self) -> int:
        return hash((self.geometry, self.tokens))

    @property
    def width(self) -> int:
        return self.geometry.width

    @property
    def height(self) -> int:
        return self.geometry.height

    @property
    def periodic(self) -> bool:
        return self.geometry.boundary_mode == "periodic-x"

    def walkable(self, cell: Cell) -> bool:
        return self.geometry.contains(cell) and cell not in self.obstacles

    def walkable_cells(self) -> list[Cell]:
        return [
            (x, y)
            for y in range(self.height)
            for x in range(self.width)
            if (x, y) not in self.obstacles
        ]

    def slope_marker_at(self) -> dict:
        """Map cell -> (slope id, side)."""
        out = {}
        for slope in self.slopes.values():
            for c in slope.cells_a:
                out[c] = (slope.id, "a")
            for c in slope.cells_b:
                out[c] = (slope.id, "b")
        return out

    def with_params(self, **changes) -> "ScenarioSpec":
        return replace(self, params=replace(self.params, **changes))


def _parse_generation(text: str) -> Generation:
    m = re.fullmatch(r"\s*(block|frequency)\s*\(\s*([^)]+?)\s*\)\s*", text)
    if not m:
        raise ValueError(f"bad generation {text!r}; expected block(n) or frequency(x)")
    mode, arg = m.groups()
    if mode == "block":
        n = int(arg)
        if n < 0:
            raise ValueError("block count must be >= 0")
        return Generation("block", n)
    return Generation("frequency", parse_number(arg))


def _parse_group(text: str) -> GroupSpec | None:
    text = text.strip()
    if text in ("", "none"):
        return None
    m = re.fullmatch(r"simple\((\d+)\)", text)
    if m:
        return GroupSpec("simple", 1, int(m.group(1)))
    m = re.fullmatch(r"structured\((\d+)x(\d+)\)", text)
    if m:
        return GroupSpec("structured", int(m.group(1)), int(m.group(2)))
    raise ValueError(f"bad group {text!r}; expected none, simple(n) or structured(mxn)")


def _parse_speeds(text: str) -> tuple:
    pairs = []
    for item in text.split(","):
        if not item.strip():
            continue
        if ":" not in item:
            raise ValueError(f"bad speed class {item.strip()!r}; expected speed:probability")
        speed, prob = item.split(":", 1)
        pairs.append((parse_number(speed), parse_number(prob)))
    if not pairs:
        raise ValueError("empty speed distribution")
    return tuple(pairs)


def _tokenize_row(row: str, lineno: int) -> list[str]:
    if "," in row:
        tokens = [t.strip() for t in row.split(",")]
        for i, tok in enumerate(tokens):
            if not _TOKEN_RE.fullmatch(tok):
                raise ScenarioSyntaxError(f"unknown map token {tok!r}", lineno, i + 1)
        return tokens
    tokens = []
    pos = 0
    while pos < len(row):
        m = _TOKEN_RE.match(row, pos)
        if not m:
            raise ScenarioSyntaxError(f"unknown map token at {row[pos:pos + 4]!r}", lineno, pos + 1)
        tokens.append(m.group(0))
        pos = m.end()
    return tokens


def parse_scenario(text: str, name: str = "") -> ScenarioSpec:
    sections: dict[tuple[str, int | None], list[tuple[int, str]]] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith(";"):
            continue
        m = _SECTION_RE.match(line)
        if m:
            kind, num = m.group(1), m.group(2)
            key = (kind, int(num) if num is not None else None)
            if kind not in ("map", "params", "start", "slope", "measure"):
                raise ScenarioSyntaxError(f"unknown section [{kind}]", lineno)
            if (kind in ("start", "slope")) != (num is not None):
                raise ScenarioSyntaxError(f"section [{line[1:-1]}] has a wrong index", lineno)
            if key in sections:
                raise ScenarioSyntaxError(f"duplicate section {line}", lineno)
            sections[key] = []
            current = key
            continue
        if current is None:
            raise ScenarioSyntaxError("content before first section", lineno)
        sections[current].append((lineno, line))

    if ("map", None) not in sections:
        raise ScenarioSyntaxError("missing [map] section", 1)

    rows = [_tokenize_row(line, lineno) for lineno, line in sections[("map", None)]]
    if not rows:
        raise ScenarioSyntaxError("empty [map] section", 1)
    width = len(rows[0])
    for (lineno, _), row in zip(sections[("map", None)], rows):
        if len(row) != width:
            raise ScenarioSyntaxError(f"row has {len(row)} cells, expected {width}", lineno)

    def keyvalues(key) -> dict[str, tuple[int, str]]:
        out = {}
        for lineno, line in sections.get(key, []):
            if "=" not in line:
                raise ScenarioSyntaxError("expected 'key = value'", lineno)
            k, v = line.split("=", 1)
            out[k.strip()] = (lineno, v.strip())
        return out

    # params
    param_kv = keyvalues(("params", None))
    boundary_mode = "open"
    pvalues = {}
    for k, (lineno, v) in param_kv.items():
        if k == "boundary_mode":
            if v not in ("open", "periodic-x"):
                raise ScenarioSyntaxError(f"unknown boundary_mode {v!r}", lineno)
            boundary_mode = v
            continue
        if k not in _PARAM_KEYS:
            raise ScenarioSyntaxError(f"unknown parameter {k!r}", lineno)
        attr = _PARAM_KEYS[k]
        try:
            if attr == "speed_max":
                pvalues[attr] = parse_number(v)
            elif attr == "seed":
                pvalues[attr] = int(v)
            elif attr == "diag_penalty_mode":
                if v not in ("scaled", "fixed"):
                    raise ValueError(f"diag_penalty_mode must be scaled or fixed, got {v!r}")
                pvalues[attr] = v
            else:
                pvalues[attr] = float(v)
        except ValueError as exc:
            raise ScenarioSyntaxError(str(exc), lineno) from None
    params = CalibrationParams(**pvalues)

    obstacles = set()
    start_cells: dict[int, set] = {}
    dest_cells: dict[int, set] = {}
    slope_cells: dict[int, dict[str, set]] = {}
    for y, row in enumerate(rows):
        for x, tok in enumerate(row):
            if tok == "#":
                obstacles.add((x, y))
            elif tok[0] == "S":
                start_cells.setdefault(int(tok[1:]), set()).add((x, y))
            elif tok[0] == "D":
                dest_cells.setdefault(int(tok[1:]), set()).add((x, y))
            elif tok[0] == "A":
                slope_cells.setdefault(int(tok[1:-1]), {"a": set(), "b": set()})[tok[-1]].add((x, y))

    starts = {}
    for (kind, n), _ in sorted(sections.items(), key=lambda kv: (kv[0][0], kv[0][1] or 0)):
        if kind != "start":
            continue
        kv = keyvalues((kind, n))
        header = sections[(kind, n)][0][0] if sections[(kind, n)] else 1
        try:
            missing = {"generation", "speeds", "destination"} - kv.keys()
            if missing:
                raise ScenarioSyntaxError(f"[start.{n}] missing keys: {', '.join(sorted(missing))}", header)
            for k in kv:
                if k not in ("generation", "speeds", "destination", "group", "group_speeds", "limit"):
                    raise ScenarioSyntaxError(f"unknown key {k!r} in [start.{n}]", kv[k][0])
            cur = "generation"
            generation = _parse_generation(kv["generation"][1])
            cur = "speeds"
            speeds = _parse_speeds(kv["speeds"][1])
            cur = "destination"
            destination = int(kv["destination"][1])
            cur = "group"
            group = _parse_group(kv["group"][1]) if "group" in kv else None
            cur = "group_speeds"
            group_speeds = None
            if "group_speeds" in kv:
                group_speeds = tuple(parse_number(s) for s in kv["group_speeds"][1].split(","))
            cur = "limit"
            limit = int(kv["limit"][1]) if "limit" in kv else None
        except ValueError as exc:
            if isinstance(exc, ScenarioSyntaxError):
                raise
            raise ScenarioSyntaxError(str(exc), kv[cur][0]) from None
        starts[n] = StartArea(
            id=n,
            cells=frozenset(start_cells.get(n, ())),
            generation=generation,
            speeds=speeds,
            destination=destination,
            group=group,
            group_speeds=group_speeds,
            limit=limit,
        )

    slopes = {}
    for n, sides in slope_cells.items():
        kv = keyvalues(("slope", n))
        consts = {}
        for k in ("k_enter_a", "k_exit_a", "k_enter_b", "k_exit_b"):
            if k in kv:
                try:
                    consts[k] = parse_number(kv[k][1])
                except ValueError as exc:
                    raise ScenarioSyntaxError(str(exc), kv[k][0]) from None
        for k in kv:
            if k not in ("k_enter_a", "k_exit_a", "k_enter_b", "k_exit_b"):
                raise ScenarioSyntaxError(f"unknown key {k!r} in [slope.{n}]", kv[k][0])
        slopes[n] = SlopeArea(n, frozenset(sides["a"]), frozenset(sides["b"]), **consts)

    measure = MeasurementSpec()
    mkv = keyvalues(("measure", None))
    if mkv:
        area = None
        window = 10
        try:
            if "area" in mkv:
                parts = [int(p) for p in mkv["area"][1].split(",")]
                if len(parts) != 4:
                    raise ValueError("area needs x0,y0,x1,y1")
                area = tuple(parts)
            if "window" in mkv:
                window = int(mkv["window"][1])
        except ValueError as exc:
            raise ScenarioSyntaxError(str(exc), next(iter(mkv.values()))[0]) from None
        measure = MeasurementSpec(area, window)

    spec = ScenarioSpec(
        geometry=GridGeometry(width, len(rows), CELL_SIDE, boundary_mode),
        tokens=tuple(tuple(r) for r in rows),
        obstacles=frozenset(obstacles),
        starts=starts,
        destinations={n: DestinationArea(n, frozenset(c)) for n, c in sorted(dest_cells.items())},
        slopes=dict(sorted(slopes.items())),
        params=params,
        measure=measure,
        name=name,
    )
    # slope sections without marker cells
    for (kind, n) in sections:
        if kind == "slope" and n not in slope_cells:
            raise ScenarioValidationError(f"[slope.{n}] has no marker cells in the map")
    validate_scenario(spec, start_cells)
    return spec


def validate_scenario(spec: ScenarioSpec, start_cells: dict | None = None) -> None:
    p = spec.params
    if not (0 < p.frict_l < p.frict_h <= 1):
        raise ScenarioValidationError(
            f"friction thresholds out of order: need 0 < frict_l < frict_h <= 1, "
            f"got frict_l={p.frict_l}, frict_h={p.frict_h}"
        )
    if p.speed_max <= 0:
        raise ScenarioValidationError("speed_max must be positive")
    if p.delta <= 0 or p.density_radius <= 0:
        raise ScenarioValidationError("delta and R must be positive")
    if p.perception_distance < 0 or p.rho_sat <= 0 or p.obstacle_span <= 0:
        raise ScenarioValidationError("perception_distance, rho_sat and obstacle_span must be positive")
    if start_cells is not None:
        for n in start_cells:
            if n not in spec.starts:
                raise ScenarioValidationError(f"start area S{n} has no [start.{n}] section")
    for start in spec.starts.values():
        if not start.cells:
            raise ScenarioValidationError(f"[start.{start.id}] has no S{start.id} cells in the map")
        if start.destination not in spec.destinations:
            raise ScenarioValidationError(
                f"[start.{start.id}] references unknown destination_id {start.destination}"
            )
        total = sum(float(prob) for _, prob in start.speeds)
        if abs(total - 1.0) > 1e-9:
            raise ScenarioValidationError(
                f"[start.{start.id}] speed probabilities sum to {total}, expected 1"
            )
        speeds = [s for s, _ in start.speeds] + list(start.group_speeds or ())
        for speed, prob in start.speeds:
            if prob < 0:
                raise ScenarioValidationError(f"[start.{start.id}] negative probability")
        for speed in speeds:
            if not (0 < speed <= p.speed_max):
                raise ScenarioValidationError(
                    f"[start.{start.id}] desired speed {float(speed)} outside (0, speed_max]"
                )
        if start.group is not None:
            if start.group.size < 1 or start.group.subgroups < 1:
                raise ScenarioValidationError(f"[start.{start.id}] empty group")
            if start.group_speeds is not None and len(start.group_speeds) != start.group.members:
                raise ScenarioValidationError(
                    f"[start.{start.id}] group_speeds needs {start.group.members} entries"
                )
        elif start.group_speeds is not None:
            raise ScenarioValidationError(f"[start.{start.id}] group_speeds without group")
    for slope in spec.slopes.values():
        for k in (slope.k_enter_a, slope.k_exit_a, slope.k_enter_b, slope.k_exit_b):
            if k <= 0:
                raise ScenarioValidationError(f"[slope.{slope.id}] constants must be positive")
    if spec.measure.area is not None:
        x0, y0, x1, y1 = spec.measure.area
        if not (spec.geometry.contains((x0, y0)) and spec.geometry.contains((x1, y1))) or x1 < x0 or y1 < y0:
            raise ScenarioValidationError("measurement area outside the grid")
    if spec.measure.window < 1:
        raise ScenarioValidationError("measurement window must be >= 1")


def validate_slope_pairs(spec: ScenarioSpec) -> list[str]:
    """Check that crossing each slope area restores the desired speed.

    Returns human readable violations; an empty list means every area is
    consistent. Raises ScenarioValidationError when an area lacks one of its
    two boundary markers.
    """
    violations = []
    for slope in spec.slopes.values():
        if not slope.cells_a or not slope.cells_b:
            raise ScenarioValidationError(
                f"slope area {slope.id} needs exactly two boundary markers (A{slope.id}a and A{slope.id}b)"
            )
        if abs(float(slope.k_exit_a) - 1.0 / float(slope.k_enter_b)) > 1e-9:
            violations.append(
                f"slope {slope.id}: k_exit_a={float(slope.k_exit_a)} != 1/k_enter_b={1.0 / float(slope.k_enter_b)}"
            )
        if abs(float(slope.k_exit_b) - 1.0 / float(slope.k_enter_a)) > 1e-9:
            violations.append(
                f"slope {slope.id}: k_exit_b={float(slope.k_exit_b)} != 1/k_enter_a={1.0 / float(slope.k_enter_a)}"
            )
    return violations


def dump_scenario(spec: ScenarioSpec) -> str:
    """Serialise a spec back to the text format (parse(dump(s)) == s)."""
    lines = ["[map]"]
    compact = all(len(t) == 1 for row in spec.tokens for t in row)
    for row in spec.tokens:
        lines.append("".join(row) if compact else ",".join(row))

    lines += ["", "[params]"]
    if spec.geometry.boundary_mode != "open":
        lines.append(f"boundary_mode = {spec.geometry.boundary_mode}")
    defaults = CalibrationParams()
    for f in fields(CalibrationParams):
        value = getattr(spec.params, f.name)
        if value == getattr(defaults, f.name) and type(value) is type(getattr(defaults, f.name)):
            continue
        key = _PARAM_ATTRS[f.name]
        if isinstance(value, float):
            lines.append(f"{key} = {value!r}")
        else:
            lines.append(f"{key} = {value}")

    for start in spec.starts.values():
        lines += ["", f"[start.{start.id}]"]
        lines.append(f"generation = {start.generation}")
        lines.append("speeds = " + ", ".join(f"{format_number(s)}:{format_number(p)}" for s, p in start.speeds))
        lines.append(f"destination = {start.destination}")
        lines.append(f"group = {start.group if start.group else 'none'}")
        if start.group_speeds is not None:
            lines.append("group_speeds = " + ", ".join(format_number(s) for s in start.group_speeds))
        if start.limit is not None:
            lines.append(f"limit = {start.limit}")

    for slope in spec.slopes.values():
        lines += ["", f"[slope.{slope.id}]"]
        for k in ("k_enter_a", "k_exit_a", "k_enter_b", "k_exit_b"):
            lines.append(f"{k} = {format_number(getattr(slope, k))}")

    if spec.measure != MeasurementSpec():
        lines += ["", "[measure]"]
        if spec.measure.area is not None:
            lines.append("area = " + ",".join(str(v) for v in spec.measure.area))
        lines.append(f"window = {spec.measure.window}")
    return "\n".join(lines) + "\n"


def load_scenario(path) -> ScenarioSpec:
    path = Path(path)
    return parse_scenario(path.read_text(encoding="utf-8"), name=path.stem)
