"""Episode loop, fixed-time baselines, ablations and metric/checkpoint plumbing."""

from __future__ import annotations

import csv
import dataclasses
import logging
import math
import os
from dataclasses import dataclass

import numpy as np

from .agent import Agent, Experience
from .checkpoint import read_checkpoint, restore_agent, save_checkpoint
from .config import RunConfig
from .env import INITIAL_SCHEDULE, NO_CHANGE, apply_action, encode_state, legal_actions, run_cycle
from .optimizer import DivergenceError
from .traffic_sim import ArrivalConfig, SimParams, World

log = logging.getLogger(__name__)

# substream keys; each consumer owns its stream so variants only perturb their own draws
INIT, EXPLORE, REPLAY, ARRIVALS = range(4)

METRIC_COLUMNS = ("episode", "cum_reward", "avg_wait_s", "vehicles", "mean_loss", "epsilon", "avg_wait_ma100")
CYCLE_COLUMNS = ("episode", "cycle", "t_end", "action", "phase0_s", "phase1_s", "phase2_s", "phase3_s", "reward")
MA_WINDOW = 100


def substream(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, *key])))


def init_seed(seed: int) -> int:
    return int(np.random.SeedSequence([seed, INIT]).generate_state(1)[0])


@dataclass
class EpisodeMetrics:
    episode: int
    cum_reward: float
    avg_wait_s: float
    vehicles: int
    mean_loss: float
    epsilon: float
    avg_wait_ma100: float = math.nan


@dataclass
class CycleRecord:
    episode: int
    cycle: int
    t_end: float
    action: int
    schedule: tuple[int, int, int, int]
    reward: float

    def row(self) -> list:
        return [self.episode, self.cycle, repr(self.t_end), self.action, *self.schedule, repr(self.reward)]


def arrivals_for(config: RunConfig) -> ArrivalConfig:
    if config.scenario == "rush_hour":
        return ArrivalConfig.rush_hour(config.arrival_rate, config.rush_rate)
    return ArrivalConfig(config.arrival_rate)


def make_world(config: RunConfig, episode: int, check: bool = False, trace=None) -> World:
    """Fresh, empty world whose arrivals depend only on (seed, episode)."""
    params = SimParams(config.v_max, config.accel, config.decel, config.yellow_s)
    return World(substream(config.seed, ARRIVALS, episode), arrivals_for(config), params, check=check, trace=trace)


def build_agent(config: RunConfig) -> Agent:
    return Agent(config.agent_config(), init_seed(config.seed),
                 substream(config.seed, EXPLORE), substream(config.seed, REPLAY))


def run_episode(config: RunConfig, episode: int, schedule, agent: Agent | None = None, learn: bool = True,
                greedy: bool = False, check: bool = False):
    """Play whole cycles until the episode's time budget is used up.

    With no agent the schedule is held fixed. Returns the metrics, the final
    schedule and the per-cycle log.
    """
    world = make_world(config, episode, check=check)
    schedule = tuple(schedule)
    state = encode_state(world)
    cum_reward = 0.0
    losses = []
    cycles = []
    while world.time < config.episode_length_s:
        legal = legal_actions(schedule)
        action = NO_CHANGE if agent is None else agent.act(state, legal, greedy=greedy)
        schedule = apply_action(schedule, action)
        out = run_cycle(world, schedule)
        cum_reward += out.reward
        if agent is not None and learn:
            report = agent.observe(Experience(state, action, out.reward, out.next_state, legal_actions(schedule)))
            if report is not None:
                losses.append(report.loss)
        cycles.append(CycleRecord(episode, len(cycles), world.time, action, schedule, out.reward))
        state = out.next_state
    total_wait = world.cumulative_waiting_time()
    metrics = EpisodeMetrics(
        episode=episode,
        cum_reward=cum_reward,
        avg_wait_s=total_wait / world.spawned if world.spawned else 0.0,
        vehicles=world.spawned,
        mean_loss=float(np.mean(losses)) if losses else math.nan,
        epsilon=agent.epsilon if agent is not None and not greedy else (0.0 if greedy else math.nan),
    )
    return metrics, schedule, cycles


def moving_average(values, window: int = MA_WINDOW) -> list[float]:
    out = []
    total = 0.0
    for i, v in enumerate(values):
        total += v
        if i >= window:
            total -= values[i - window]
        out.append(total / min(i + 1, window))
    return out


def _fill_moving_average(series: list[EpisodeMetrics]) -> None:
    for m, ma in zip(series, moving_average([m.avg_wait_s for m in series])):
        m.avg_wait_ma100 = ma


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def export_metrics(series: list[EpisodeMetrics], path) -> None:
    _fill_moving_average(series)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRIC_COLUMNS)
        for m in series:
            writer.writerow([_fmt(getattr(m, c)) for c in METRIC_COLUMNS])


def read_metrics(path) -> list[EpisodeMetrics]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return [EpisodeMetrics(int(r["episode"]), float(r["cum_reward"]), float(r["avg_wait_s"]), int(r["vehicles"]),
                           float(r["mean_loss"]), float(r["epsilon"]), float(r["avg_wait_ma100"])) for r in rows]


def export_cycles(cycles: list[CycleRecord], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CYCLE_COLUMNS)
        writer.writerows(c.row() for c in cycles)


class Trainer:
    """One learning run: the agent and schedule persist, the world resets per episode."""

    def __init__(self, config: RunConfig, out_dir=None):
        if config.fixed_seconds is not None:
            raise ValueError(f"variant {config.variant} has no learner; use run_baseline")
        self.config = config
        self.out_dir = out_dir
        self.agent = build_agent(config)
        self.schedule = INITIAL_SCHEDULE
        self.episode = 0
        self.metrics: list[EpisodeMetrics] = []
        self.cycles: list[CycleRecord] = []

    def run(self, until: int | None = None) -> list[EpisodeMetrics]:
        """Train up to episode ``until`` (default: the configured count)."""
        cfg = self.config
        until = cfg.episode_count if until is None else min(until, cfg.episode_count)
        while self.episode < until:
            start = INITIAL_SCHEDULE if cfg.reset_schedule else self.schedule
            try:
                m, self.schedule, cycles = run_episode(cfg, self.episode, start, self.agent)
            except DivergenceError as exc:
                if self.out_dir is not None:
                    self.save(os.path.join(self.out_dir, "diverged.ckpt"))
                raise DivergenceError(f"episode {self.episode}: {exc}") from exc
            self.metrics.append(m)
            self.cycles.extend(cycles)
            self.episode += 1
            log.info("episode %d reward %.1f avg_wait %.2f eps %.3f loss %.4g schedule %s",
                     m.episode, m.cum_reward, m.avg_wait_s, m.epsilon, m.mean_loss, self.schedule)
            if self.out_dir is not None and cfg.checkpoint_every and self.episode % cfg.checkpoint_every == 0:
                self.save(os.path.join(self.out_dir, "checkpoint.ckpt"))
        _fill_moving_average(self.metrics)
        if self.out_dir is not None:
            if cfg.checkpoint_every and self.episode % cfg.checkpoint_every:
                self.save(os.path.join(self.out_dir, "checkpoint.ckpt"))
            self.write_outputs()
        return self.metrics

    def write_outputs(self) -> None:
        os.makedirs(self.out_dir, exist_ok=True)
        export_metrics(self.metrics, os.path.join(self.out_dir, "metrics.csv"))
        export_cycles(self.cycles, os.path.join(self.out_dir, "cycles.csv"))

    def save(self, path) -> None:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        meta = {
            "config": dataclasses.asdict(self.config),
            "episode": self.episode,
            "schedule": list(self.schedule),
            "metrics": [dataclasses.asdict(m) for m in self.metrics],
            "cycles": [dataclasses.astuple(c) for c in self.cycles],
        }
        save_checkpoint(path, self.agent, meta)

    @classmethod
    def load(cls, path, out_dir=None, **overrides) -> "Trainer":
        ckpt = read_checkpoint(path)
        config = RunConfig(**{**ckpt.meta["config"], **overrides})
        trainer = cls(config, out_dir)
        restore_agent(trainer.agent, ckpt)
        trainer.episode = ckpt.meta["episode"]
        trainer.schedule = tuple(ckpt.meta["schedule"])
        trainer.metrics = [EpisodeMetrics(**m) for m in ckpt.meta["metrics"]]
        trainer.cycles = [CycleRecord(e, c, t, a, tuple(s), r) for e, c, t, a, s, r in ckpt.meta["cycles"]]
        return trainer


def run_training(config: RunConfig, out_dir=None) -> list[EpisodeMetrics]:
    return Trainer(config, out_dir).run()


def run_baseline(config: RunConfig, fixed_seconds: int | None = None, out_dir=None) -> list[EpisodeMetrics]:
    """Fixed (d, d, d, d) schedule, no learning, same arrival streams as training."""
    d = fixed_seconds if fixed_seconds is not None else (config.fixed_seconds or 30)
    if d <= 0 or d % 5:
        raise ValueError(f"fixed phase duration must be a positive multiple of 5, got {d}")
    series = []
    cycles = []
    for episode in range(config.episode_count):
        m, _, c = run_episode(config, episode, (d, d, d, d))
        series.append(m)
        cycles.extend(c)
    _fill_moving_average(series)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        export_metrics(series, os.path.join(out_dir, "metrics.csv"))
        export_cycles(cycles, os.path.join(out_dir, "cycles.csv"))
    return series


ABLATION_VARIANTS = ("full", "no_double", "no_dueling", "no_per")


def run_ablation(config: RunConfig, variants=ABLATION_VARIANTS, out_dir=None) -> dict[str, list[EpisodeMetrics]]:
    results = {}
    for variant in variants:
        sub = None if out_dir is None else os.path.join(out_dir, variant)
        results[variant] = run_training(config.replace(variant=variant), sub)
    return results


def run_rush_hour(config: RunConfig, out_dir=None) -> list[EpisodeMetrics]:
    return run_training(config.replace(scenario="rush_hour"), out_dir)


def evaluate(path, episodes: int, seed: int | None = None, out_dir=None) -> list[EpisodeMetrics]:
    """Greedy rollouts of a checkpointed policy, without learning."""
    trainer = Trainer.load(path, **({} if seed is None else {"seed": seed}))
    cfg = trainer.config
    schedule = trainer.schedule
    series = []
    for episode in range(episodes):
        m, schedule, _ = run_episode(cfg, episode, INITIAL_SCHEDULE if cfg.reset_schedule else schedule,
                                     trainer.agent, learn=False, greedy=True)
        series.append(m)
    _fill_moving_average(series)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        export_metrics(series, os.path.join(out_dir, "metrics.csv"))
    return series
