"""Time-stepped microscopic simulator of a four-way, three-lane intersection.

Each incoming lane is a one-dimensional path measured from the lane entry:
``[0, 150]`` is the approach with the stop line at 150 m, ``(150, 180]`` the
30 m junction box, and ``(180, 315]`` the exit leg out to the edge of the
300 x 300 m observed area. Vehicles keep following the vehicle ahead of them
from the same incoming lane along the whole path; there is no lane changing.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

V_MAX = 13.9
A_ACC = 1.0
A_DEC = 4.5
VEHICLE_LENGTH = 5.0
MIN_GAP = 2.0
REACTION_TIME = 1.0
STOP_SPEED = 0.1

LANE_LENGTH = 150.0
STOP_LINE = LANE_LENGTH
BOX_LENGTH = 30.0
EXIT_LENGTH = 135.0
PATH_END = STOP_LINE + BOX_LENGTH + EXIT_LENGTH
AREA_SIZE = 300.0

APPROACHES = ("N", "E", "S", "W")
INNER, MIDDLE, OUTER = 0, 1, 2
N_LANES = 12
LEFT, THROUGH, RIGHT = "left", "through", "right"

# direction of travel for vehicles entering from each approach (x east, y north)
HEADINGS = {"N": (0.0, -1.0), "E": (-1.0, 0.0), "S": (0.0, 1.0), "W": (1.0, 0.0)}
LANE_OFFSETS = (2.5, 7.5, 12.5)  # lateral distance of lane centres from the road axis

# Phase -> incoming lanes with right of way.
PHASE_MOVEMENTS = {
    0: (("N", MIDDLE), ("N", OUTER), ("S", MIDDLE), ("S", OUTER)),
    1: (("N", INNER), ("S", INNER)),
    2: (("E", MIDDLE), ("E", OUTER), ("W", MIDDLE), ("W", OUTER)),
    3: (("E", INNER), ("W", INNER)),
}
N_PHASES = 4


def lane_id(approach: str, index: int) -> int:
    return 3 * APPROACHES.index(approach) + index


def lane_approach(lane: int) -> str:
    return APPROACHES[lane // 3]


PHASE_LANES = {p: frozenset(lane_id(a, i) for a, i in moves) for p, moves in PHASE_MOVEMENTS.items()}


class SimulationError(RuntimeError):
    """An invariant of the simulated world was violated."""


def yellow_duration(v_max: float = V_MAX, a_dec: float = A_DEC) -> float:
    if a_dec <= 0:
        raise ValueError("deceleration must be positive")
    return v_max / a_dec


def krauss_safe_speed(v_follow: float, v_lead: float, gap: float, decel: float = A_DEC,
                      reaction: float = REACTION_TIME) -> float:
    """Krauss safe speed behind a leader at net ``gap`` (a stop line is a stopped leader)."""
    v_bar = 0.5 * (v_lead + v_follow)
    return v_lead + (gap - v_lead * reaction) / (v_bar / decel + reaction)


def insertion_speed(v_lead: float, gap: float, decel: float = A_DEC) -> float:
    """Largest speed v with v == krauss_safe_speed(v, v_lead, gap) (unit reaction time)."""
    return max(0.0, -decel + math.sqrt(decel * decel + v_lead * v_lead + 2.0 * decel * gap))


def next_speed(v: float, v_safe: float, v_max: float = V_MAX, accel: float = A_ACC, dt: float = 1.0) -> float:
    return max(0.0, min(v_max, v + accel * dt, v_safe))


@dataclass
class SimParams:
    v_max: float = V_MAX
    accel: float = A_ACC
    decel: float = A_DEC
    yellow_s: int = 4
    dt: float = 1.0


@dataclass
class ArrivalConfig:
    """Per-lane arrival probability for each simulated second."""

    rate: float = 0.1
    overrides: dict[int, float] = field(default_factory=dict)

    def probabilities(self) -> np.ndarray:
        probs = np.full(N_LANES, self.rate)
        for lane, p in self.overrides.items():
            probs[lane] = p
        if np.any(probs < 0) or np.any(probs > 1):
            raise ValueError(f"arrival probabilities must lie in [0, 1]: {probs}")
        return probs

    @classmethod
    def rush_hour(cls, rate: float = 0.1, rush_rate: float = 0.2) -> "ArrivalConfig":
        # vehicles travelling west -> east enter on the W approach
        return cls(rate, {lane_id("W", i): rush_rate for i in range(3)})


class Vehicle:
    __slots__ = ("id", "lane", "pos", "speed", "route", "entry_time", "waiting", "yellow_call")

    def __init__(self, vid: int, lane: int, route: str, entry_time: float, speed: float = 0.0):
        self.id = vid
        self.lane = lane
        self.pos = 0.0
        self.speed = speed
        self.route = route
        self.entry_time = entry_time
        self.waiting = 0.0
        self.yellow_call: tuple[int, bool] | None = None  # (yellow interval, proceeds)

    def __repr__(self) -> str:
        return (f"Vehicle(id={self.id}, lane={self.lane}, pos={self.pos:.2f}, speed={self.speed:.2f}, "
                f"route={self.route}, waiting={self.waiting})")

    def xy(self) -> tuple[float, float]:
        """Front-bumper midpoint in area coordinates (origin south-west)."""
        hx, hy = HEADINGS[lane_approach(self.lane)]
        c = AREA_SIZE / 2
        half_box = BOX_LENGTH / 2
        index = self.lane % 3
        if self.pos <= STOP_LINE + BOX_LENGTH:
            along = self.pos - (STOP_LINE + half_box)
            off = LANE_OFFSETS[index]
        else:
            if self.route == LEFT:
                hx, hy = -hy, hx
            elif self.route == RIGHT:
                hx, hy = hy, -hx
            along = half_box + self.pos - (STOP_LINE + BOX_LENGTH)
            off = LANE_OFFSETS[INNER if self.route == LEFT else (OUTER if self.route == RIGHT else index)]
        return c + hx * along + hy * off, c + hy * along - hx * off


def lane_signals(phase: int | None, mode: str) -> list[str]:
    """Signal colour for every incoming lane."""
    colours = ["red"] * N_LANES
    if phase is not None and mode in ("green", "yellow"):
        for lane in PHASE_LANES[phase]:
            colours[lane] = mode
    return colours


class SignalController:
    """Runs one cycle at a time: phases 0..3 in order, zero-length phases skipped.

    A yellow of ``yellow_s`` seconds follows each active phase whenever the
    cycle has at least two active phases. An all-zero schedule holds all-red
    for ``ALL_RED_HOLD`` seconds so the clock still advances.
    """

    ALL_RED_HOLD = 5

    def __init__(self, yellow_s: int = 4):
        self.yellow_s = yellow_s
        self.schedule: tuple[int, ...] = (0, 0, 0, 0)
        self.segments: list[tuple[int | None, str, int]] = []
        self.segment = 0
        self.clock = 0
        self.yellow_count = 0

    def plan(self, schedule) -> list[tuple[int | None, str, int]]:
        schedule = tuple(int(t) for t in schedule)
        if len(schedule) != N_PHASES or any(t < 0 for t in schedule):
            raise ValueError(f"invalid schedule {schedule}")
        active = [p for p, t in enumerate(schedule) if t > 0]
        if not active:
            return [(None, "red", self.ALL_RED_HOLD)]
        segments = []
        for p in active:
            segments.append((p, "green", schedule[p]))
            if len(active) > 1 and self.yellow_s > 0:
                segments.append((p, "yellow", self.yellow_s))
        return segments

    def start_cycle(self, schedule) -> None:
        self.segments = self.plan(schedule)
        self.schedule = tuple(int(t) for t in schedule)
        self.segment = 0
        self.clock = 0

    @property
    def done(self) -> bool:
        return self.segment >= len(self.segments)

    @property
    def current(self) -> tuple[int | None, str]:
        if self.done:
            return None, "red"
        phase, mode, _ = self.segments[self.segment]
        return phase, mode

    def tick(self, dt: int = 1) -> tuple[int | None, str, int]:
        """Signal state for the coming second, then advance the clock.

        Returns ``(phase, mode, yellow_interval_id)``.
        """
        if self.done:
            raise SimulationError("signal controller has no cycle in progress")
        phase, mode, duration = self.segments[self.segment]
        if mode == "yellow" and self.clock == 0:
            self.yellow_count += 1
        yid = self.yellow_count
        self.clock += dt
        if self.clock >= duration:
            self.segment += 1
            self.clock = 0
        return phase, mode, yid


class World:
    """Single-owner simulation state, advanced one second at a time by :meth:`step`."""

    def __init__(self, rng: np.random.Generator, arrivals: ArrivalConfig | None = None,
                 params: SimParams | None = None, check: bool = True, trace=None):
        self.rng = rng
        self.arrivals = arrivals or ArrivalConfig()
        self.params = params or SimParams()
        self.arrival_probs = self.arrivals.probabilities()
        self.signal = SignalController(self.params.yellow_s)
        self.lanes: list[list[Vehicle]] = [[] for _ in range(N_LANES)]
        self.pending: list[deque] = [deque() for _ in range(N_LANES)]
        self.time = 0.0
        self.next_id = 0
        self.spawned = 0
        self.arrived = np.zeros(N_LANES, dtype=np.int64)  # arrivals per lane, queued or not
        self.exited = 0
        self.exited_waiting = 0.0
        self.red_runs = 0
        self.check = check
        self.trace = trace
        self.last_colours = lane_signals(None, "red")

    # -- queries ---------------------------------------------------------

    def vehicles(self):
        for lane in self.lanes:
            yield from lane

    def present(self) -> int:
        return sum(len(lane) for lane in self.lanes)

    def cumulative_waiting_time(self) -> float:
        return self.exited_waiting + sum(v.waiting for v in self.vehicles())

    # -- dynamics --------------------------------------------------------

    def step(self) -> None:
        p = self.params
        dt = p.dt
        phase, mode, yid = self.signal.tick(int(dt))
        colours = lane_signals(phase, mode)
        self.last_colours = colours
        for lane_no, lane in enumerate(self.lanes):
            if lane:
                self._advance_lane(lane, colours[lane_no], yid, dt)
        self._remove_exited()
        self.spawn_arrivals()
        for v in self.vehicles():
            if v.speed < STOP_SPEED:
                v.waiting += dt
        self.time += dt
        if self.check:
            self.check_invariants()
        if self.trace is not None:
            for v in self.vehicles():
                self.trace.write(f"{self.time:g},{v.id},{v.lane},{v.pos!r},{v.speed!r}\n")

    def _must_stop(self, v: Vehicle, colour: str, yid: int) -> bool:
        if colour == "green":
            return False
        if colour == "red":
            return True
        if v.yellow_call is None or v.yellow_call[0] != yid:
            v_line = krauss_safe_speed(v.speed, 0.0, STOP_LINE - v.pos, self.params.decel)
            can_stop = v_line >= v.speed - self.params.decel * self.params.dt - 1e-9
            v.yellow_call = (yid, not can_stop)
        return not v.yellow_call[1]

    def _advance_lane(self, lane: list[Vehicle], colour: str, yid: int, dt: float) -> None:
        """Move one lane front to back.

        Each follower sees its leader's already-updated position and speed and
        never advances further than the free space ahead of it, which keeps
        the 7 m front-to-front spacing even when a leader brakes harder than
        the comfortable deceleration.
        """
        p = self.params
        leader = None
        for v in lane:
            v_safe = math.inf
            room = math.inf
            if leader is not None:
                gap = leader.pos - VEHICLE_LENGTH - MIN_GAP - v.pos
                v_safe = krauss_safe_speed(v.speed, leader.speed, gap, p.decel)
                room = gap
            before = v.pos
            if before <= STOP_LINE and self._must_stop(v, colour, yid):
                line_gap = STOP_LINE - before
                v_safe = min(v_safe, krauss_safe_speed(v.speed, 0.0, line_gap, p.decel))
                room = min(room, line_gap)
            speed = min(next_speed(v.speed, v_safe, p.v_max, p.accel, dt), max(room, 0.0) / dt)
            v.speed = speed
            v.pos += speed * dt
            if colour == "red" and before <= STOP_LINE < v.pos:
                self.red_runs += 1
            leader = v

    def _remove_exited(self) -> None:
        for lane in self.lanes:
            while lane and lane[0].pos >= PATH_END:
                v = lane.pop(0)
                self.exited += 1
                self.exited_waiting += v.waiting

    def spawn_arrivals(self) -> list[Vehicle]:
        """Queue this second's arrivals and insert those with entry headroom.

        Two uniforms per lane are drawn every second whether used or not, so
        the arrival stream does not depend on the signal policy.
        """
        coins = self.rng.random(N_LANES)
        routes = self.rng.random(N_LANES)
        new = []
        for lane_no in range(N_LANES):
            if coins[lane_no] < self.arrival_probs[lane_no]:
                index = lane_no % 3
                if index == INNER:
                    route = LEFT
                elif index == MIDDLE:
                    route = THROUGH
                else:
                    route = RIGHT if routes[lane_no] < 0.5 else THROUGH
                self.pending[lane_no].append(route)
                self.arrived[lane_no] += 1
            lane = self.lanes[lane_no]
            if not self.pending[lane_no]:
                continue
            if lane and lane[-1].pos < VEHICLE_LENGTH + MIN_GAP:
                continue
            speed = self.params.v_max
            if lane:
                last = lane[-1]
                gap = last.pos - VEHICLE_LENGTH - MIN_GAP
                speed = min(speed, insertion_speed(last.speed, gap, self.params.decel))
            v = Vehicle(self.next_id, lane_no, self.pending[lane_no].popleft(), self.time, speed)
            self.next_id += 1
            self.spawned += 1
            lane.append(v)
            new.append(v)
        return new

    def check_invariants(self) -> None:
        problems = []
        if self.spawned != self.present() + self.exited:
            problems.append(f"conservation: spawned {self.spawned} != present {self.present()} + exited {self.exited}")
        if self.red_runs:
            problems.append(f"{self.red_runs} red-light crossings")
        for lane in self.lanes:
            for k, v in enumerate(lane):
                if not (0.0 <= v.speed <= self.params.v_max):
                    problems.append(f"speed out of range: {v!r}")
                if k and lane[k - 1].pos - v.pos < VEHICLE_LENGTH + MIN_GAP - 1e-6:
                    problems.append(f"spacing {lane[k - 1].pos - v.pos:.3f} m between {lane[k - 1]!r} and {v!r}")
        if problems:
            dump = "\n".join(repr(v) for v in self.vehicles())
            raise SimulationError(f"t={self.time}: " + "; ".join(problems) + "\nstate:\n" + dump)

    def run_schedule(self, schedule) -> float:
        """Play one full cycle of ``schedule``; return simulated seconds elapsed."""
        start = self.time
        self.signal.start_cycle(schedule)
        while not self.signal.done:
            self.step()
        return self.time - start
