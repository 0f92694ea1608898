"""Portable binary checkpoints for the learner.

All integers and floats are little-endian.

    magic        8 bytes   b"3DQNCKPT"
    version      u32       1
    n_records    u32
    n_records times:
        name_len u32, name (utf-8, name_len bytes)
        ndim     u32, dims (ndim x i64)
        values   prod(dims) x f32, C order
    agent_step   i64
    adam_t       i64
    meta_len     u32, meta (utf-8 JSON, meta_len bytes)
    replay_len   u64, replay (numpy .npz archive, replay_len bytes)

Record names are ``theta/<param>``, ``target/<param>``, ``adam.s/<param>``
and ``adam.r/<param>``. A reader that only needs the network can stop after
the records. The JSON block holds RNG states, the current schedule and
harness bookkeeping. The npz block holds the replay memory with sparse
states pooled and referenced by index.
"""

from __future__ import annotations

import io
import json
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .agent import Agent, Experience, ReplayMemory
from .env import N_ACTIONS, StateGrid

MAGIC = b"3DQNCKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    records: dict[str, np.ndarray]
    agent_step: int = 0
    adam_t: int = 0
    meta: dict = field(default_factory=dict)
    replay: dict[str, np.ndarray] = field(default_factory=dict)

    def group(self, prefix: str) -> dict[str, np.ndarray]:
        cut = len(prefix) + 1
        return {k[cut:]: v for k, v in self.records.items() if k.startswith(prefix + "/")}


def _write_record(fh, name: str, values: np.ndarray) -> None:
    raw = name.encode("utf-8")
    values = np.ascontiguousarray(values, dtype="<f4")
    fh.write(struct.pack("<I", len(raw)))
    fh.write(raw)
    fh.write(struct.pack("<I", values.ndim))
    fh.write(struct.pack(f"<{values.ndim}q", *values.shape))
    fh.write(values.tobytes())


def _read_exact(fh, n: int) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise CheckpointError("truncated checkpoint")
    return data


def _read_record(fh) -> tuple[str, np.ndarray]:
    (name_len,) = struct.unpack("<I", _read_exact(fh, 4))
    name = _read_exact(fh, name_len).decode("utf-8")
    (ndim,) = struct.unpack("<I", _read_exact(fh, 4))
    dims = struct.unpack(f"<{ndim}q", _read_exact(fh, 8 * ndim))
    count = int(np.prod(dims, dtype=np.int64))
    values = np.frombuffer(_read_exact(fh, 4 * count), dtype="<f4").reshape(dims)
    return name, values.astype(np.float32)


def pack_memory(memory: ReplayMemory) -> dict[str, np.ndarray]:
    n = memory.size
    pool: dict[int, int] = {}
    grids: list[StateGrid] = []

    def ref(state) -> int:
        key = id(state)
        if key not in pool:
            pool[key] = len(grids)
            grids.append(state)
        return pool[key]

    items = memory.items[:n]
    s_idx = np.array([ref(e.s) for e in items], dtype=np.int64)
    next_idx = np.array([ref(e.s_next) for e in items], dtype=np.int64)
    lengths = np.array([len(g) for g in grids], dtype=np.int64)
    empty_i = np.zeros(0, dtype=np.int32)
    empty_f = np.zeros(0, dtype=np.float32)
    return {
        "capacity": np.array(memory.capacity, dtype=np.int64),
        "cursor": np.array([memory.size, memory.next_slot, memory.pushed], dtype=np.int64),
        "actions": np.array([e.a for e in items], dtype=np.int64),
        "rewards": np.array([e.r for e in items], dtype=np.float64),
        "legal_next": np.array([e.legal_next for e in items], dtype=bool).reshape(n, N_ACTIONS),
        "s_idx": s_idx,
        "next_idx": next_idx,
        "deltas": memory.deltas[:n].copy(),
        "order": memory.order[:n].copy(),
        "state_offsets": np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64),
        "state_cells": np.concatenate([g.cells for g in grids]) if grids else empty_i,
        "state_speeds": np.concatenate([g.speeds for g in grids]) if grids else empty_f,
    }


def unpack_memory(data: dict[str, np.ndarray]) -> ReplayMemory:
    memory = ReplayMemory(int(data["capacity"]))
    size, next_slot, pushed = (int(x) for x in data["cursor"])
    offsets = data["state_offsets"]
    cells, speeds = data["state_cells"], data["state_speeds"]
    grids = [StateGrid(cells[offsets[i]:offsets[i + 1]], speeds[offsets[i]:offsets[i + 1]])
             for i in range(len(offsets) - 1)]
    for i in range(size):
        memory.items[i] = Experience(grids[data["s_idx"][i]], int(data["actions"][i]), float(data["rewards"][i]),
                                     grids[data["next_idx"][i]], data["legal_next"][i].copy())
    memory.deltas[:size] = data["deltas"]
    memory.order[:size] = data["order"]
    memory.size, memory.next_slot, memory.pushed = size, next_slot, pushed
    return memory


def save_checkpoint(path, agent: Agent, meta: dict | None = None) -> None:
    records = []
    for prefix, group in (("theta", agent.params), ("target", agent.target_params),
                          ("adam.s", agent.adam.s), ("adam.r", agent.adam.r)):
        records.extend((f"{prefix}/{k}", v) for k, v in group.items())
    meta = dict(meta or {})
    meta["rng"] = {"explore": agent.explore_rng.bit_generator.state,
                   "replay": agent.replay_rng.bit_generator.state}
    replay = io.BytesIO()
    np.savez(replay, **pack_memory(agent.memory))
    meta_raw = json.dumps(meta, sort_keys=True).encode("utf-8")
    replay_raw = replay.getvalue()

    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<II", VERSION, len(records)))
    for name, values in records:
        _write_record(buf, name, values)
    buf.write(struct.pack("<qq", agent.step, agent.adam.t))
    buf.write(struct.pack("<I", len(meta_raw)))
    buf.write(meta_raw)
    buf.write(struct.pack("<Q", len(replay_raw)))
    buf.write(replay_raw)
    # write in one go so an interrupted run never leaves a half file behind
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(buf.getvalue())
    os.replace(tmp, path)


def read_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file")
        version, count = struct.unpack("<II", _read_exact(fh, 8))
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported version {version}")
        records = dict(_read_record(fh) for _ in range(count))
        agent_step, adam_t = struct.unpack("<qq", _read_exact(fh, 16))
        (meta_len,) = struct.unpack("<I", _read_exact(fh, 4))
        meta = json.loads(_read_exact(fh, meta_len).decode("utf-8"))
        (replay_len,) = struct.unpack("<Q", _read_exact(fh, 8))
        with np.load(io.BytesIO(_read_exact(fh, replay_len))) as npz:
            replay = {k: npz[k] for k in npz.files}
    return Checkpoint(records, agent_step, adam_t, meta, replay)


def restore_agent(agent: Agent, ckpt: Checkpoint) -> None:
    """Overwrite ``agent``'s learnable state, counters, memory and RNGs."""
    for prefix, group in (("theta", agent.params), ("target", agent.target_params),
                          ("adam.s", agent.adam.s), ("adam.r", agent.adam.r)):
        stored = ckpt.group(prefix)
        if stored.keys() != group.keys():
            raise CheckpointError(f"{prefix}: parameter names differ from the agent's network")
        for k, v in stored.items():
            if v.shape != group[k].shape:
                raise CheckpointError(f"{prefix}/{k}: shape {v.shape} != {group[k].shape}")
            group[k][...] = v
    agent.step = ckpt.agent_step
    agent.adam.t = ckpt.adam_t
    if ckpt.replay:
        agent.memory = unpack_memory(ckpt.replay)
    rng = ckpt.meta.get("rng")
    if rng:
        agent.explore_rng.bit_generator.state = rng["explore"]
        agent.replay_rng.bit_generator.state = rng["replay"]
