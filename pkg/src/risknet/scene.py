"""Traffic scenario data model.

Holds agent states on a fixed frame grid, ingests and exports track CSVs,
builds per-frame interaction graphs, and generates closed-form synthetic
scenarios used for evaluation.

Coordinate convention: x is longitudinal, y is lateral, both in meters.
Velocities are m/s, accelerations m/s^2, masses kg.
"""

import csv
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    BadConfig,
    EgoAbsent,
    MissingColumn,
    NonContiguousTrack,
    NonFinite,
)

# Speeds below this are treated as standing still when angles are needed.
EPS_SPEED = 0.1  # m/s

DEFAULT_LANE_WIDTH = 3.5  # m

# Fallback masses by agent kind, used when the log carries no mass column.
DEFAULT_MASSES: Dict[str, float] = {
    "pedestrian": 75.0,
    "bicycle": 90.0,
    "car": 1500.0,
    "truck": 15000.0,
    "other": 1500.0,
}

KIND_CATEGORIES = ("pedestrian", "bicycle", "car", "truck", "other")

_KIND_SYNONYMS = {
    "pedestrian": "pedestrian",
    "person": "pedestrian",
    "bicycle": "bicycle",
    "bike": "bicycle",
    "cyclist": "bicycle",
    "car": "car",
    "truck": "truck",
    "lorry": "truck",
    "truck_bus": "truck",
}


@dataclass(frozen=True)
class AgentKind:
    """Category of a traffic participant.

    ``category`` is one of KIND_CATEGORIES; ``label`` preserves the raw
    source string so unknown classes survive a load/export round trip.
    """

    category: str
    label: str

    def __post_init__(self):
        if self.category not in KIND_CATEGORIES:
            raise BadConfig(f"unknown agent kind category: {self.category!r}")

    @classmethod
    def of(cls, raw: str) -> "AgentKind":
        key = raw.strip().lower()
        category = _KIND_SYNONYMS.get(key)
        if category is None:
            return cls("other", raw.strip())
        return cls(category, category)


PEDESTRIAN = AgentKind("pedestrian", "pedestrian")
BICYCLE = AgentKind("bicycle", "bicycle")
CAR = AgentKind("car", "car")
TRUCK = AgentKind("truck", "truck")

CAR_EXTENT = (4.5, 2.0)  # length, width in m
TRUCK_EXTENT = (12.0, 2.5)


@dataclass
class AgentState:
    """One agent at one frame."""

    agent_id: int
    frame: int
    position: np.ndarray  # (2,) m
    velocity: np.ndarray  # (2,) m/s
    acceleration: np.ndarray  # (2,) m/s^2
    extent: Tuple[float, float]  # (length, width) m
    mass: float  # kg
    kind: AgentKind

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        self.velocity = np.asarray(self.velocity, dtype=float)
        self.acceleration = np.asarray(self.acceleration, dtype=float)

    @property
    def speed(self) -> float:
        return float(np.hypot(self.velocity[0], self.velocity[1]))


@dataclass
class AgentInfo:
    """Per-agent constants plus the frame interval the agent covers."""

    kind: AgentKind
    mass: float
    extent: Tuple[float, float]
    first_frame: int
    last_frame: int


@dataclass
class Scenario:
    """A recorded or generated traffic scene on a uniform frame grid."""

    frame_rate: float  # Hz
    frames: Dict[int, List[AgentState]]
    agents: Dict[int, AgentInfo]
    bounds: Tuple[float, float, float, float]  # x_min, y_min, x_max, y_max
    source: str
    # Shift added to source coordinates at load time; subtracted on export.
    offset: np.ndarray = field(default_factory=lambda: np.zeros(2))
    _by_agent: Dict[int, Dict[int, AgentState]] = field(
        default_factory=dict, repr=False
    )

    def __post_init__(self):
        self.offset = np.asarray(self.offset, dtype=float)
        if not self._by_agent:
            for states in self.frames.values():
                for s in states:
                    self._by_agent.setdefault(s.agent_id, {})[s.frame] = s

    @property
    def dt(self) -> float:
        return 1.0 / self.frame_rate

    @property
    def frame_list(self) -> List[int]:
        return sorted(self.frames.keys())

    def span(self) -> Tuple[int, int]:
        fl = self.frame_list
        return fl[0], fl[-1]

    def states_at(self, frame: int) -> List[AgentState]:
        return self.frames.get(frame, [])

    def state(self, agent_id: int, frame: int) -> AgentState:
        try:
            return self._by_agent[agent_id][frame]
        except KeyError:
            raise EgoAbsent(agent_id, frame) from None

    def has_state(self, agent_id: int, frame: int) -> bool:
        return frame in self._by_agent.get(agent_id, {})


def scenario_from_states(
    states: Iterable[AgentState],
    frame_rate: float,
    source: str = "memory",
    offset: Optional[np.ndarray] = None,
) -> Scenario:
    """Assemble a Scenario, enforcing per-frame uniqueness and per-agent
    frame contiguity."""
    frames: Dict[int, List[AgentState]] = {}
    per_agent: Dict[int, List[AgentState]] = {}
    for s in states:
        frames.setdefault(s.frame, []).append(s)
        per_agent.setdefault(s.agent_id, []).append(s)
    if not frames:
        raise BadConfig("scenario has no states")

    for frame, fs in frames.items():
        ids = [s.agent_id for s in fs]
        if len(ids) != len(set(ids)):
            dup = sorted(i for i in ids if ids.count(i) > 1)[0]
            raise BadConfig(f"agent {dup} appears twice at frame {frame}")
        fs.sort(key=lambda s: s.agent_id)

    agents: Dict[int, AgentInfo] = {}
    for aid in sorted(per_agent):
        track = sorted(per_agent[aid], key=lambda s: s.frame)
        for prev, cur in zip(track, track[1:]):
            if cur.frame != prev.frame + 1:
                raise NonContiguousTrack(aid, prev.frame + 1)
        head = track[0]
        agents[aid] = AgentInfo(
            kind=head.kind,
            mass=head.mass,
            extent=head.extent,
            first_frame=track[0].frame,
            last_frame=track[-1].frame,
        )

    xs = [s.position[0] for fs in frames.values() for s in fs]
    ys = [s.position[1] for fs in frames.values() for s in fs]
    bounds = (min(xs), min(ys), max(xs), max(ys))
    ordered = {f: frames[f] for f in sorted(frames)}
    return Scenario(
        frame_rate=frame_rate,
        frames=ordered,
        agents=agents,
        bounds=bounds,
        source=source,
        offset=np.zeros(2) if offset is None else np.asarray(offset, float),
    )


# ==================== CSV ingestion / export ====================

REQUIRED_COLUMNS = ("frame", "id", "x", "y", "xVelocity", "yVelocity",
                    "width", "height")
OPTIONAL_COLUMNS = ("xAcceleration", "yAcceleration", "class", "mass")

EXPORT_HEADER = [
    "frame", "id", "x", "y", "xVelocity", "yVelocity",
    "xAcceleration", "yAcceleration", "width", "height", "class", "mass",
]


def load_tracks(
    path: str,
    frame_rate: float = 25.0,
    schema: Optional[Mapping[str, str]] = None,
    kind_defaults: Optional[Mapping[str, float]] = None,
) -> Scenario:
    """Load a track CSV into a Scenario.

    The canonical schema expects columns frame, id, x, y, xVelocity,
    yVelocity, width, height, with optional xAcceleration, yAcceleration,
    class, and mass.  ``schema`` remaps canonical names to the actual
    column names of the file.  The ``width`` column is the bounding-box
    extent along x (vehicle length) and ``height`` the extent along y.

    Missing accelerations are zero-filled, missing classes default to the
    car kind, and masses fall back to ``kind_defaults`` (keyed by kind
    category).  Positions are shifted so the scenario bounds have a
    nonnegative origin; the shift is remembered and undone on export.
    """
    remap = dict(schema or {})
    masses = dict(DEFAULT_MASSES)
    if kind_defaults:
        masses.update(kind_defaults)

    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []

        def col(name: str) -> Optional[str]:
            actual = remap.get(name, name)
            return actual if actual in header else None

        resolved = {}
        for name in REQUIRED_COLUMNS:
            actual = col(name)
            if actual is None:
                raise MissingColumn(remap.get(name, name))
            resolved[name] = actual
        for name in OPTIONAL_COLUMNS:
            actual = col(name)
            if actual is not None:
                resolved[name] = actual

        rows = list(reader)

    def cell(row, name, idx) -> float:
        try:
            value = float(row[resolved[name]])
        except (TypeError, ValueError):
            raise NonFinite(idx) from None
        if not math.isfinite(value):
            raise NonFinite(idx)
        return value

    states: List[AgentState] = []
    for idx, row in enumerate(rows):
        frame = int(cell(row, "frame", idx))
        aid = int(cell(row, "id", idx))
        x = cell(row, "x", idx)
        y = cell(row, "y", idx)
        vx = cell(row, "xVelocity", idx)
        vy = cell(row, "yVelocity", idx)
        length = cell(row, "width", idx)
        width = cell(row, "height", idx)
        ax = cell(row, "xAcceleration", idx) if "xAcceleration" in resolved else 0.0
        ay = cell(row, "yAcceleration", idx) if "yAcceleration" in resolved else 0.0
        if "class" in resolved and row[resolved["class"]].strip():
            kind = AgentKind.of(row[resolved["class"]])
        else:
            kind = CAR
        if "mass" in resolved and row[resolved["mass"]].strip():
            mass = cell(row, "mass", idx)
        else:
            mass = masses[kind.category]
        states.append(AgentState(
            agent_id=aid,
            frame=frame,
            position=np.array([x, y]),
            velocity=np.array([vx, vy]),
            acceleration=np.array([ax, ay]),
            extent=(length, width),
            mass=mass,
            kind=kind,
        ))

    if not states:
        raise BadConfig(f"no data rows in {path}")

    min_x = min(s.position[0] for s in states)
    min_y = min(s.position[1] for s in states)
    shift = np.array([max(0.0, -min_x), max(0.0, -min_y)])
    if shift[0] > 0.0 or shift[1] > 0.0:
        for s in states:
            s.position = s.position + shift

    return scenario_from_states(states, frame_rate, source=path, offset=shift)


def export_tracks(scenario: Scenario, path: str) -> None:
    """Write the scenario back out in the canonical CSV schema.

    Positions are shifted back by the load-time offset so numeric columns
    of a loaded file are reproduced exactly.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(EXPORT_HEADER)
        for frame in scenario.frame_list:
            for s in scenario.frames[frame]:
                pos = s.position - scenario.offset
                writer.writerow([
                    s.frame, s.agent_id,
                    repr(float(pos[0])), repr(float(pos[1])),
                    repr(float(s.velocity[0])), repr(float(s.velocity[1])),
                    repr(float(s.acceleration[0])), repr(float(s.acceleration[1])),
                    repr(float(s.extent[0])), repr(float(s.extent[1])),
                    s.kind.label, repr(float(s.mass)),
                ])


# ==================== interaction graph ====================

@dataclass(frozen=True)
class InteractionGraph:
    """Star-shaped interaction graph around one ego agent at one frame."""

    ego_id: int
    frame: int
    radius: float
    edges: frozenset  # of (ego_id, other_id) tuples

    def neighbors(self, agent_id: int) -> List[int]:
        """Agents adjacent to ``agent_id``, ascending by id."""
        out = set()
        for a, b in self.edges:
            if a == agent_id:
                out.add(b)
            elif b == agent_id:
                out.add(a)
        return sorted(out)


def build_graph(
    scenario: Scenario, ego_id: int, frame: int, radius: float
) -> InteractionGraph:
    """Connect the ego to every other agent within ``radius`` (inclusive)
    at ``frame``."""
    if not scenario.has_state(ego_id, frame):
        raise EgoAbsent(ego_id, frame)
    ego = scenario.state(ego_id, frame)
    edges = set()
    for s in scenario.states_at(frame):
        if s.agent_id == ego_id:
            continue
        d = s.position - ego.position
        if math.hypot(d[0], d[1]) <= radius:
            edges.add((ego_id, s.agent_id))
    return InteractionGraph(
        ego_id=ego_id, frame=frame, radius=radius, edges=frozenset(edges)
    )


def velocity_angle(
    v_a: np.ndarray, v_b: np.ndarray, eps_speed: float = EPS_SPEED
) -> float:
    """Angle in [0, pi] between two velocity vectors.

    Falls back to 0 when either speed is below ``eps_speed``, where a
    direction is not meaningful.
    """
    sa = math.hypot(v_a[0], v_a[1])
    sb = math.hypot(v_b[0], v_b[1])
    if sa < eps_speed or sb < eps_speed:
        return 0.0
    c = (v_a[0] * v_b[0] + v_a[1] * v_b[1]) / (sa * sb)
    return math.acos(min(1.0, max(-1.0, c)))


def relative_geometry(a: AgentState, b: AgentState) -> Tuple[float, float]:
    """Center distance r and velocity angle theta between two agents."""
    d = b.position - a.position
    r = math.hypot(d[0], d[1])
    theta = velocity_angle(a.velocity, b.velocity)
    return r, theta


# ==================== synthetic archetypes ====================
#
# Closed-form kinematic scenes for the three evaluation narratives:
# a blocked lane change under front/rear pressure, a lateral cut-in
# from the adjacent lane, and a rear vehicle that overtakes and cuts in.

ARCHETYPES = ("blocked_lane_change", "lateral_cut_in", "rear_overtake_cut_in")

_ARCHETYPE_DEFAULTS: Dict[str, Dict[str, float]] = {
    "blocked_lane_change": {
        "ego_speed": 25.0,
        "front_speed": 22.0,
        "rear_speed": 28.0,
        "target_speed": 15.0,
        "front_gap": 15.0,  # bumper gap to the front vehicle, m
        "rear_gap": 10.0,   # bumper gap to the rear vehicle, m
        "target_gap": 5.0,  # bumper gap to the target-lane vehicle, m
        "lane_width": DEFAULT_LANE_WIDTH,
    },
    "lateral_cut_in": {
        "ego_speed": 20.0,       # ego truck, lane keeping
        "merger_speed": 21.0,    # merging car, longitudinal, at t=0
        "merger_accel": 0.8,     # longitudinal acceleration while merging
        "lateral_speed": 1.0,    # toward the ego lane center
        "lateral_offset": 3.5,   # initial lateral offset of the merger
        "long_offset": 5.0,      # initial center-to-center lead of merger
        "cut_speed_drop": 1.0,   # speed deficit vs ego after the merge
    },
    "rear_overtake_cut_in": {
        "ego_speed": 20.0,
        "rear_speed": 28.0,      # approach speed of the overtaking car
        "rear_gap": 25.0,        # initial bumper gap behind the ego, m
        "lane_offset": 3.5,      # overtaking lane lateral offset
        "cut_in_lead": 12.0,     # center lead when the cut-in starts, m
        "lateral_speed": 1.5,
        "cut_speed_drop": 1.0,   # speed deficit vs ego after the cut-in
    },
}

_ARCHETYPE_DURATIONS = {
    "blocked_lane_change": 3.0,
    "lateral_cut_in": 8.0,
    "rear_overtake_cut_in": 10.0,
}


def _merge_params(name: str, params: Optional[Mapping[str, float]]):
    defaults = dict(_ARCHETYPE_DEFAULTS[name])
    for key, value in (params or {}).items():
        if key not in defaults:
            raise BadConfig(f"unknown {name} parameter: {key!r}")
        defaults[key] = float(value)
    return defaults


def _car(aid, frame, x, y, vx, vy, ax=0.0, ay=0.0, extent=CAR_EXTENT,
         mass=None, kind=CAR):
    return AgentState(
        agent_id=aid, frame=frame,
        position=np.array([x, y]), velocity=np.array([vx, vy]),
        acceleration=np.array([ax, ay]), extent=extent,
        mass=DEFAULT_MASSES[kind.category] if mass is None else mass,
        kind=kind,
    )


def make_archetype(
    name: str,
    params: Optional[Mapping[str, float]] = None,
    frame_rate: float = 25.0,
    duration: Optional[float] = None,
) -> Scenario:
    """Generate one of the named synthetic scenarios.

    All trajectories are piecewise closed-form in time, so generated
    states are exactly reproducible and gaps/speeds encoded in ``params``
    can be recovered from the states.
    """
    if name not in ARCHETYPES:
        raise BadConfig(f"unknown archetype: {name!r}")
    p = _merge_params(name, params)
    if duration is None:
        duration = _ARCHETYPE_DURATIONS[name]
    n_frames = int(round(duration * frame_rate)) + 1
    dt = 1.0 / frame_rate
    states: List[AgentState] = []

    if name == "blocked_lane_change":
        half = CAR_EXTENT[0]  # two car half-lengths
        x_ego0 = 50.0
        x_front0 = x_ego0 + p["front_gap"] + half
        x_rear0 = x_ego0 - p["rear_gap"] - half
        x_target0 = x_ego0 + p["target_gap"] + half
        for k in range(n_frames):
            t = k * dt
            states.append(_car(0, k, x_ego0 + p["ego_speed"] * t, 0.0,
                               p["ego_speed"], 0.0))
            states.append(_car(1, k, x_front0 + p["front_speed"] * t, 0.0,
                               p["front_speed"], 0.0))
            states.append(_car(2, k, x_rear0 + p["rear_speed"] * t, 0.0,
                               p["rear_speed"], 0.0))
            states.append(_car(3, k, x_target0 + p["target_speed"] * t,
                               p["lane_width"], p["target_speed"], 0.0))

    elif name == "lateral_cut_in":
        x_ego0 = 30.0
        x_m0 = x_ego0 + p["long_offset"]
        t_entry = p["lateral_offset"] / p["lateral_speed"]
        # merger kinematics at the moment it reaches the ego lane center
        v_entry = p["merger_speed"] + p["merger_accel"] * t_entry
        x_entry = (x_m0 + p["merger_speed"] * t_entry
                   + 0.5 * p["merger_accel"] * t_entry ** 2)
        v_after = p["ego_speed"] - p["cut_speed_drop"]
        for k in range(n_frames):
            t = k * dt
            states.append(_car(
                0, k, x_ego0 + p["ego_speed"] * t, 0.0,
                p["ego_speed"], 0.0, extent=TRUCK_EXTENT, kind=TRUCK,
            ))
            if t < t_entry:
                states.append(_car(
                    1, k,
                    x_m0 + p["merger_speed"] * t
                    + 0.5 * p["merger_accel"] * t ** 2,
                    p["lateral_offset"] - p["lateral_speed"] * t,
                    p["merger_speed"] + p["merger_accel"] * t,
                    -p["lateral_speed"],
                    ax=p["merger_accel"],
                ))
            else:
                states.append(_car(
                    1, k, x_entry + v_after * (t - t_entry), 0.0,
                    v_after, 0.0,
                ))

    else:  # rear_overtake_cut_in
        half = CAR_EXTENT[0]
        x_ego0 = 60.0
        x_r0 = x_ego0 - p["rear_gap"] - half
        closing = p["rear_speed"] - p["ego_speed"]
        if closing > 0.0:
            # time at which the overtaker leads by cut_in_lead (centers)
            t_cut = (p["cut_in_lead"] - (x_r0 - x_ego0)) / closing
        else:
            t_cut = math.inf  # never catches up: plain following
        x_cut = x_r0 + p["rear_speed"] * min(t_cut, 1e12)
        v_after = p["ego_speed"] - p["cut_speed_drop"]
        t_center = (t_cut + p["lane_offset"] / p["lateral_speed"]
                    if math.isfinite(t_cut) else math.inf)
        for k in range(n_frames):
            t = k * dt
            states.append(_car(0, k, x_ego0 + p["ego_speed"] * t, 0.0,
                               p["ego_speed"], 0.0))
            if t < t_cut:
                states.append(_car(
                    1, k, x_r0 + p["rear_speed"] * t, p["lane_offset"],
                    p["rear_speed"], 0.0,
                ))
            else:
                y = p["lane_offset"] - p["lateral_speed"] * (t - t_cut)
                vy = -p["lateral_speed"]
                if t >= t_center:
                    y, vy = 0.0, 0.0
                states.append(_car(
                    1, k, x_cut + v_after * (t - t_cut), y, v_after, vy,
                ))

    return scenario_from_states(
        states, frame_rate, source=f"archetype:{name}"
    )
