"""Deployment simulation for the communication step.

Two ways to run the same stack at inference time:

  centralized  every agent ships its hidden state to one aggregation node,
               which runs the full stack and ships each increment back:
               2n vector transfers total, one round, regardless of depth.

  distributed  every agent keeps its own row and exchanges rows with the
               peers that can hear it once per encoder layer: L rounds,
               one directed send per reachable (speaker, listener) pair
               per round.  Out-of-reach pairs get exactly zero attention
               weight, which is the same as the listener never having
               received the row.

Under full connectivity both produce identical increments; the simulator
checks that and counts the traffic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .comm import CommStack
from .errors import ConfigError, ShapeError
from .nn import Tensor, no_grad


@dataclass(frozen=True)
class Topology:
    """Directed reachability: reachable[i, j] means agent i hears agent j."""

    reachable: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.reachable, dtype=bool)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ConfigError(f"reachability must be square, got {arr.shape}")
        if not np.all(np.diag(arr)):
            raise ConfigError("every agent must reach itself")
        object.__setattr__(self, "reachable", arr)

    @property
    def n(self) -> int:
        return self.reachable.shape[0]

    def directed_links(self) -> int:
        """Off-diagonal reachable pairs: one message per pair per round."""
        return int(self.reachable.sum() - self.n)

    @classmethod
    def full(cls, n: int) -> "Topology":
        return cls(np.ones((n, n), dtype=bool))

    @classmethod
    def isolate(cls, n: int, agent: int) -> "Topology":
        reach = np.ones((n, n), dtype=bool)
        reach[agent, :] = False
        reach[:, agent] = False
        reach[agent, agent] = True
        return cls(reach)

    @classmethod
    def from_json(cls, path) -> "Topology":
        spec = json.loads(Path(path).read_text())
        return cls(np.asarray(spec["reachable"], dtype=bool))

    def to_json(self, path):
        Path(path).write_text(json.dumps(
            {"n": self.n, "reachable": self.reachable.astype(int).tolist()}))


@dataclass(frozen=True)
class TrafficStats:
    messages: int
    floats_transferred: int
    rounds: int

    def __post_init__(self):
        if min(self.messages, self.floats_transferred, self.rounds) < 0:
            raise ConfigError("traffic counters must be nonnegative")

    def as_dict(self) -> dict:
        return {"messages": self.messages,
                "floats_transferred": self.floats_transferred,
                "rounds": self.rounds}


def centralized_round(comm: CommStack, hidden: np.ndarray) -> tuple[np.ndarray, TrafficStats]:
    """Aggregation-node deployment: up n states, back n increments."""
    hidden = np.asarray(hidden, dtype=float)
    n, width = hidden.shape
    if width != comm.config.model_dim:
        raise ShapeError(f"hidden width {width} != model dim {comm.config.model_dim}")
    with no_grad():
        z = comm(Tensor(hidden)).data.copy()
    stats = TrafficStats(messages=2 * n, floats_transferred=2 * n * width, rounds=1)
    return z, stats


def distributed_round(comm: CommStack, hidden: np.ndarray,
                      topology: Topology) -> tuple[np.ndarray, TrafficStats]:
    """Peer-to-peer deployment: one exchange of rows per encoder layer."""
    hidden = np.asarray(hidden, dtype=float)
    n, width = hidden.shape
    if topology.n != n:
        raise ShapeError(f"topology is for {topology.n} agents, hidden has {n} rows")
    if width != comm.config.model_dim:
        raise ShapeError(f"hidden width {width} != model dim {comm.config.model_dim}")
    with no_grad():
        z = comm(Tensor(hidden), mask=topology.reachable).data.copy()
    rounds = comm.config.num_layers
    messages = rounds * topology.directed_links()
    stats = TrafficStats(messages=messages,
                         floats_transferred=messages * width,
                         rounds=rounds)
    return z, stats
