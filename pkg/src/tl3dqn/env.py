"""Reinforcement-learning view of the intersection: grid states, the
phase-duration action set, and one-cycle transitions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .traffic_sim import AREA_SIZE, N_PHASES, World

GRID_CELL = 5.0
GRID_SIZE = int(AREA_SIZE / GRID_CELL)
STEP_S = 5
MAX_PHASE_S = 60
MIN_PHASE_S = 0
INITIAL_SCHEDULE = (30, 30, 30, 30)

# action 0 keeps the schedule; 1..4 add 5 s to phase 0..3; 5..8 remove 5 s
N_ACTIONS = 1 + 2 * N_PHASES
NO_CHANGE = 0


def action_effect(action: int) -> tuple[int | None, int]:
    """``(phase, delta_seconds)`` for an action index; phase is None for no-change."""
    if not 0 <= action < N_ACTIONS:
        raise ValueError(f"action {action} outside 0..{N_ACTIONS - 1}")
    if action == NO_CHANGE:
        return None, 0
    if action <= N_PHASES:
        return action - 1, STEP_S
    return action - 1 - N_PHASES, -STEP_S


def action_name(action: int) -> str:
    phase, delta = action_effect(action)
    return "keep" if phase is None else f"phase{phase + 1}{delta:+d}"


class StateGrid:
    """Sparse 60 x 60 x 2 observation: occupied cells and the speed in each.

    Channel 0 is occupancy (0/1), channel 1 the speed in m/s.
    """

    __slots__ = ("cells", "speeds")

    def __init__(self, cells: np.ndarray, speeds: np.ndarray):
        self.cells = np.asarray(cells, dtype=np.int32)
        self.speeds = np.asarray(speeds, dtype=np.float32)

    def fill(self, out: np.ndarray) -> None:
        rows, cols = np.divmod(self.cells, GRID_SIZE)
        out[rows, cols, 0] = 1.0
        out[rows, cols, 1] = self.speeds

    def to_array(self) -> np.ndarray:
        out = np.zeros((GRID_SIZE, GRID_SIZE, 2), dtype=np.float32)
        self.fill(out)
        return out

    def __len__(self) -> int:
        return len(self.cells)


def encode_state(world: World) -> StateGrid:
    """Mark the cell under each in-area vehicle's front-bumper midpoint."""
    cells = []
    speeds = []
    for v in world.vehicles():
        x, y = v.xy()
        if 0.0 <= x < AREA_SIZE and 0.0 < y <= AREA_SIZE:
            row = int((AREA_SIZE - y) // GRID_CELL)  # north at the top
            col = int(x // GRID_CELL)
            cells.append(row * GRID_SIZE + col)
            speeds.append(v.speed)
    return StateGrid(np.array(cells, dtype=np.int32), np.array(speeds, dtype=np.float32))


def legal_actions(schedule) -> np.ndarray:
    legal = np.zeros(N_ACTIONS, dtype=bool)
    legal[NO_CHANGE] = True
    for p, t in enumerate(schedule):
        legal[1 + p] = t + STEP_S <= MAX_PHASE_S
        legal[1 + N_PHASES + p] = t - STEP_S >= MIN_PHASE_S
    return legal


def apply_action(schedule, action: int) -> tuple[int, ...]:
    if not legal_actions(schedule)[action]:
        raise ValueError(f"illegal action {action_name(action)} for schedule {tuple(schedule)}")
    phase, delta = action_effect(action)
    new = list(schedule)
    if phase is not None:
        new[phase] += delta
    return tuple(int(t) for t in new)


def cycle_reward(w_before: float, w_after: float) -> float:
    return w_before - w_after


@dataclass
class CycleOutcome:
    next_state: StateGrid
    reward: float
    w_after: float
    elapsed_s: float
    yellows: int


def run_cycle(world: World, schedule) -> CycleOutcome:
    """Play one cycle of ``schedule`` and observe the grid at its end."""
    w_before = world.cumulative_waiting_time()
    yellows = sum(1 for _, mode, _ in world.signal.plan(schedule) if mode == "yellow")
    elapsed = world.run_schedule(schedule)
    w_after = world.cumulative_waiting_time()
    return CycleOutcome(encode_state(world), cycle_reward(w_before, w_after), w_after, elapsed, yellows)
