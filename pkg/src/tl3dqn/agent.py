"""Double dueling DQN agent with rank-based prioritized replay."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import network
from .optimizer import AdamState, DivergenceError, LossReport, adam_step, mse_loss
from .tensor_nn import INPUT_SHAPE, init_params

MASK_PENALTY = 1e9


class Experience(NamedTuple):
    s: object
    a: int
    r: float
    s_next: object
    legal_next: np.ndarray


def stack_states(states) -> np.ndarray:
    """Dense ``(N, 60, 60, 2)`` float32 batch from state grids or arrays."""
    out = np.zeros((len(states),) + INPUT_SHAPE, dtype=np.float32)
    for i, s in enumerate(states):
        if isinstance(s, np.ndarray):
            out[i] = s
        else:
            s.fill(out[i])
    return out


def mask_q(q: np.ndarray, legal: np.ndarray) -> np.ndarray:
    legal = np.asarray(legal, dtype=bool)
    return np.where(legal, q, q - MASK_PENALTY)


def q_forward(state, params: dict[str, np.ndarray], beta: float = 0.01) -> np.ndarray:
    q, _ = network.forward(params, stack_states([state]), beta)
    return q[0]


def select_action(state, params, legal, epsilon: float, rng: np.random.Generator, beta: float = 0.01) -> int:
    """Epsilon-greedy over legal actions; greedy ties go to the lowest index.

    Exactly one uniform draw is taken per call, plus one integer draw when
    exploring, so the exploration stream advances the same way for every
    network variant.
    """
    legal = np.asarray(legal, dtype=bool)
    if rng.random() < epsilon:
        choices = np.flatnonzero(legal)
        return int(choices[rng.integers(len(choices))])
    return int(np.argmax(mask_q(q_forward(state, params, beta), legal)))


@dataclass(frozen=True)
class EpsilonSchedule:
    start: float = 1.0
    end: float = 0.01
    decay_steps: int = 10000
    pretrain_steps: int = 2000

    def __call__(self, step: int) -> float:
        if step <= self.pretrain_steps:
            return self.start
        frac = min(1.0, (step - self.pretrain_steps) / max(self.decay_steps, 1))
        return self.start + frac * (self.end - self.start)


def bootstrap_targets(rewards, q_next_online, q_next_target, legal_next, gamma: float, double: bool = True):
    """r + gamma * Q_target(s', a*) with a* picked by the online (double) or target net."""
    rewards = np.asarray(rewards, dtype=np.float64)
    q_next_target = np.asarray(q_next_target, dtype=np.float64)
    selector = q_next_online if double else q_next_target
    best = np.argmax(mask_q(np.asarray(selector, dtype=np.float64), legal_next), axis=1)
    return rewards + gamma * q_next_target[np.arange(len(rewards)), best]


def compute_target(batch, params, target_params, gamma: float, beta: float = 0.01, double: bool = True,
                   reward_scale: float = 1.0) -> np.ndarray:
    s_next = stack_states([e.s_next for e in batch])
    legal_next = np.stack([e.legal_next for e in batch])
    rewards = np.array([e.r for e in batch], dtype=np.float64) * reward_scale
    q_target, _ = network.forward(target_params, s_next, beta)
    q_online = network.forward(params, s_next, beta)[0] if double else None
    return bootstrap_targets(rewards, q_online, q_target, legal_next, gamma, double)


def soft_update(target_params, params, alpha: float, literal: bool = False) -> None:
    """Blend in place: target <- (1 - alpha) * target + alpha * params.

    ``literal=True`` swaps the roles of alpha: target <- alpha * target + (1 - alpha) * params.
    """
    keep = alpha if literal else 1.0 - alpha
    for name, p in params.items():
        t = target_params[name]
        t *= keep
        t += (1.0 - keep) * p


class ReplayMemory:
    """Fixed-capacity ring of experiences with rank-based sampling priorities."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.items: list[Experience | None] = [None] * capacity
        self.deltas = np.zeros(capacity, dtype=np.float32)
        self.order = np.zeros(capacity, dtype=np.int64)  # insertion counter, for ties and eviction
        self.size = 0
        self.next_slot = 0
        self.pushed = 0
        self._probs_cache: tuple[float, np.ndarray] | None = None

    def __len__(self) -> int:
        return self.size

    def push(self, exp: Experience) -> int:
        """Insert at the oldest slot; the newcomer takes the current max delta."""
        slot = self.next_slot
        if self.size == self.capacity:
            others = np.delete(self.deltas, slot)
            priority = float(others.max()) if len(others) else 1.0
        else:
            priority = float(self.deltas[:self.size].max()) if self.size else 1.0
            self.size += 1
        self.items[slot] = exp
        self.deltas[slot] = priority
        self.order[slot] = self.pushed
        self.pushed += 1
        self.next_slot = (slot + 1) % self.capacity
        self._probs_cache = None
        return slot

    def ranks(self) -> np.ndarray:
        """Rank per live slot (1 = largest delta, ties to the newest)."""
        n = self.size
        by_rank = np.lexsort((-self.order[:n], -self.deltas[:n]))
        ranks = np.zeros(n, dtype=np.int64)
        ranks[by_rank] = np.arange(1, n + 1)
        return ranks

    def probabilities(self, tau: float) -> np.ndarray:
        if self._probs_cache is not None and self._probs_cache[0] == tau:
            return self._probs_cache[1]
        weights = (1.0 / self.ranks()) ** tau
        probs = weights / weights.sum()
        self._probs_cache = (tau, probs)
        return probs

    def sample(self, batch_size: int, tau: float, rng: np.random.Generator):
        if self.size < batch_size:
            raise ValueError(f"cannot sample {batch_size} from memory of size {self.size}")
        idx = rng.choice(self.size, size=batch_size, replace=True, p=self.probabilities(tau))
        return [self.items[i] for i in idx], idx

    def update_priorities(self, indices, deltas) -> None:
        self.deltas[np.asarray(indices)] = np.asarray(deltas, dtype=np.float32)
        self._probs_cache = None


@dataclass
class AgentConfig:
    memory_size: int = 20000
    batch_size: int = 64
    eps_start: float = 1.0
    eps_end: float = 0.01
    eps_decay_steps: int = 10000
    pretrain_steps: int = 2000
    target_rate: float = 0.001
    gamma: float = 0.99
    lr: float = 1e-4
    beta: float = 0.01
    tau: float = 0.7
    double: bool = True
    dueling: bool = True
    prioritized: bool = True
    target_update_literal: bool = False
    reward_scale: float = 1.0


class Agent:
    """Single-owner learner: networks, Adam state, replay memory and RNG streams."""

    def __init__(self, config: AgentConfig, init_seed: int, explore_rng: np.random.Generator,
                 replay_rng: np.random.Generator):
        self.config = config
        self.params = init_params(init_seed, dueling=config.dueling)
        self.target_params = {k: v.copy() for k, v in self.params.items()}
        self.adam = AdamState.for_params(self.params, lr=config.lr)
        self.memory = ReplayMemory(config.memory_size)
        self.schedule = EpsilonSchedule(config.eps_start, config.eps_end, config.eps_decay_steps,
                                        config.pretrain_steps)
        self.explore_rng = explore_rng
        self.replay_rng = replay_rng
        self.step = 0

    @property
    def epsilon(self) -> float:
        return self.schedule(self.step)

    def act(self, state, legal, greedy: bool = False) -> int:
        eps = 0.0 if greedy else self.epsilon
        return select_action(state, self.params, legal, eps, self.explore_rng, self.config.beta)

    def gate_open(self) -> bool:
        return len(self.memory) > self.config.batch_size and self.step > self.config.pretrain_steps

    def observe(self, exp: Experience) -> LossReport | None:
        """Store one transition and train once if the replay gate is open."""
        self.memory.push(exp)
        self.step += 1
        if not self.gate_open():
            return None
        return self.train_step()

    def train_step(self) -> LossReport:
        cfg = self.config
        tau = cfg.tau if cfg.prioritized else 0.0
        batch, idx = self.memory.sample(cfg.batch_size, tau, self.replay_rng)
        targets = compute_target(batch, self.params, self.target_params, cfg.gamma, cfg.beta,
                                 double=cfg.double, reward_scale=cfg.reward_scale)
        q, cache = network.forward(self.params, stack_states([e.s for e in batch]), cfg.beta)
        actions = np.array([e.a for e in batch])
        rows = np.arange(len(batch))
        report = mse_loss(q[rows, actions], targets)
        if not np.isfinite(report.loss):
            raise DivergenceError(f"non-finite loss at agent step {self.step}")
        dq = np.zeros_like(q)
        dq[rows, actions] = report.dpred
        grads = network.backward(self.params, cache, dq, cfg.beta)
        adam_step(self.params, grads, self.adam)
        soft_update(self.target_params, self.params, cfg.target_rate, cfg.target_update_literal)
        self.memory.update_priorities(idx, report.deltas)
        return report
