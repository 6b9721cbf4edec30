"""Episodic double Q-learning over whole-episode replay.

Episodes are stored whole and replayed in padded batches; hidden states are
re-unrolled from zero for both the online and the frozen target networks.
Targets pick the next action with the online network and evaluate it with
the target network.  Two optimizers run side by side: RMSProp on the main
group (agents and mixer) and Adam on the communication group, after one
shared global-norm clip.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .agents import TeamModel, build_inputs
from .errors import ContractError
from .mixers import mix_values
from .nn import Adam, RMSProp, Tensor, TrainContext, clip_grad_norm, no_grad
from .nn import tensor as T
from .rng import stream


@dataclass
class EpisodeRecord:
    """One complete episode.

    Per-step arrays cover t = 0..T-1; observation-like arrays carry one
    extra entry (the post-terminal observation) for target bootstrapping.
    """

    obs: np.ndarray        # (T+1, n, obs_dim)
    states: np.ndarray     # (T+1, state_dim)
    avail: np.ndarray      # (T+1, n, n_actions) bool
    actions: np.ndarray    # (T, n) int
    rewards: np.ndarray    # (T,)
    terminated: bool = True

    def __post_init__(self):
        t = len(self.rewards)
        if not (self.actions.shape[0] == t
                and self.obs.shape[0] == t + 1
                and self.states.shape[0] == t + 1
                and self.avail.shape[0] == t + 1):
            raise ContractError("episode arrays disagree on length")

    @property
    def length(self) -> int:
        return len(self.rewards)


class ReplayBuffer:
    """Fixed-capacity episode store with strict oldest-first eviction."""

    def __init__(self, capacity: int = 5000):
        self.capacity = capacity
        self._store: deque[EpisodeRecord] = deque(maxlen=capacity)

    def add(self, episode: EpisodeRecord):
        self._store.append(episode)

    def __len__(self) -> int:
        return len(self._store)

    @property
    def episodes(self) -> list[EpisodeRecord]:
        return list(self._store)

    def sample(self, count: int, rng: np.random.Generator) -> list[EpisodeRecord]:
        if len(self._store) < count:
            raise ContractError(f"buffer holds {len(self._store)} < {count} episodes")
        idx = rng.choice(len(self._store), size=count, replace=False)
        return [self._store[i] for i in idx]


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.99
    batch_size: int = 32
    lr: float = 0.0005
    comm_lr: float = 0.0005
    rmsprop_decay: float = 0.99
    rmsprop_eps: float = 1e-5
    epsilon_start: float = 1.0
    epsilon_finish: float = 0.05
    anneal_steps: int = 50_000
    target_update_interval: int = 200
    grad_clip: float = 10.0
    test_interval: int = 2000
    test_episodes: int = 32
    buffer_capacity: int = 5000
    hidden_dim: int = 64

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ContractError(f"gamma must be in [0, 1], got {self.gamma}")
        if self.epsilon_finish > self.epsilon_start:
            raise ContractError("epsilon_finish must not exceed epsilon_start")


def epsilon(env_step: int, config: TrainConfig) -> float:
    """Linear anneal from start to finish, constant afterwards."""
    if env_step >= config.anneal_steps:
        return config.epsilon_finish
    frac = env_step / config.anneal_steps
    return config.epsilon_start + frac * (config.epsilon_finish - config.epsilon_start)


def pad_batch(episodes: list[EpisodeRecord]) -> dict:
    """Stack episodes into fixed arrays padded to the longest episode.

    Padded steps carry a zero validity mask and all-available action masks
    (so argmax stays well defined; they never reach the loss).
    """
    if not episodes:
        raise ContractError("empty batch")
    bsz = len(episodes)
    t_max = max(ep.length for ep in episodes)
    _, n, obs_dim = episodes[0].obs.shape
    n_actions = episodes[0].avail.shape[-1]
    state_dim = episodes[0].states.shape[-1]

    obs = np.zeros((bsz, t_max + 1, n, obs_dim))
    states = np.zeros((bsz, t_max + 1, state_dim))
    avail = np.ones((bsz, t_max + 1, n, n_actions), dtype=bool)
    actions = np.zeros((bsz, t_max, n), dtype=np.intp)
    rewards = np.zeros((bsz, t_max))
    mask = np.zeros((bsz, t_max))
    terminated = np.zeros((bsz, t_max))

    for b, ep in enumerate(episodes):
        t = ep.length
        obs[b, : t + 1] = ep.obs
        states[b, : t + 1] = ep.states
        avail[b, : t + 1] = ep.avail
        actions[b, :t] = ep.actions
        rewards[b, :t] = ep.rewards
        mask[b, :t] = 1.0
        if ep.terminated:
            terminated[b, t - 1] = 1.0

    return {"obs": obs, "states": states, "avail": avail, "actions": actions,
            "rewards": rewards, "mask": mask, "terminated": terminated,
            "batch_size": bsz, "t_max": t_max, "n_agents": n,
            "n_actions": n_actions}


def unroll_team(team: TeamModel, batch: dict,
                ctx: Optional[TrainContext] = None) -> list[Tensor]:
    """Run the team over every step of a padded batch.

    Returns one (batch*n, n_actions) local-Q tensor per step t = 0..t_max.
    Hidden states start at zero and are carried inside.
    """
    bsz, t_max, n = batch["batch_size"], batch["t_max"], batch["n_agents"]
    h = team.initial_hidden(bsz * n)
    out = []
    for t in range(t_max + 1):
        flat_obs = batch["obs"][:, t].reshape(bsz * n, -1)
        last = batch["actions"][:, t - 1].reshape(-1) if t > 0 else None
        inputs = build_inputs(flat_obs, last, batch["n_actions"], n)
        q, h = team.step(inputs, h, sets=bsz, ctx=ctx)
        out.append(q)
    return out


def double_q_targets(rewards: np.ndarray, terminated: np.ndarray,
                     online_next_q: np.ndarray, target_next_q: np.ndarray,
                     avail_next: np.ndarray, states_next: np.ndarray,
                     mix_fn: Callable[[np.ndarray, np.ndarray], np.ndarray],
                     gamma: float) -> np.ndarray:
    """One-step TD targets with decoupled selection and evaluation.

    The next action is the argmax of the ONLINE local values over available
    actions; its value comes from the TARGET network, mixed by mix_fn at the
    next state.  All arrays are (batch, T, ...); returns (batch, T).
    """
    bsz, t_len = rewards.shape
    y = np.empty((bsz, t_len))
    for t in range(t_len):
        masked = np.where(avail_next[:, t], online_next_q[:, t], -np.inf)
        best = masked.argmax(axis=-1)
        chosen = np.take_along_axis(target_next_q[:, t], best[..., None], axis=-1)[..., 0]
        joint = mix_fn(chosen, states_next[:, t])
        y[:, t] = rewards[:, t] + gamma * (1.0 - terminated[:, t]) * joint
    return y


def td_loss(q_tot: Tensor, targets: np.ndarray, mask: np.ndarray) -> Tensor:
    """Mean squared TD error over valid steps; targets enter as constants."""
    total = float(mask.sum())
    if total == 0:
        raise ContractError("batch has no valid steps")
    diff = T.mul(T.sub(q_tot, Tensor(targets)), Tensor(mask))
    return T.scale(T.tsum(T.square(diff)), 1.0 / total)


class Learner:
    """Owns the optimizers, the target networks, and the training counter."""

    def __init__(self, team: TeamModel, target_team: TeamModel,
                 config: TrainConfig, seed: int):
        self.team = team
        self.target = target_team
        self.config = config
        self.seed = seed
        self.train_steps = 0
        self.target.copy_from(team)
        self.opt_main = RMSProp(team.main_parameters(), lr=config.lr,
                                decay=config.rmsprop_decay, eps=config.rmsprop_eps)
        comm_params = team.comm_parameters()
        self.opt_comm = Adam(comm_params, lr=config.comm_lr) if comm_params else None

    def train_step(self, buffer: ReplayBuffer) -> Optional[dict]:
        """One gradient update from a sampled batch.

        Returns None (a not-ready signal) while the buffer holds fewer than
        batch_size episodes.
        """
        cfg = self.config
        if len(buffer) < cfg.batch_size:
            return None
        episodes = buffer.sample(cfg.batch_size, stream(self.seed, "sample", self.train_steps))
        batch = pad_batch(episodes)
        bsz, t_max, n = batch["batch_size"], batch["t_max"], batch["n_agents"]

        ctx = TrainContext(self.seed, self.train_steps)
        online_q = unroll_team(self.team, batch, ctx=ctx)
        with no_grad():
            target_q = unroll_team(self.target, batch)

        # joint value of the actions actually taken, per step
        q_taken = []
        for t in range(t_max):
            picked = T.gather_cols(online_q[t], batch["actions"][:, t].reshape(-1))
            per_team = T.reshape(picked, bsz, n)
            q_taken.append(self.team.mixer(per_team, Tensor(batch["states"][:, t])))
        q_tot = T.concat_cols(q_taken)

        def stack_values(tensors):
            return np.stack([q.data.reshape(bsz, n, -1) for q in tensors], axis=1)

        online_next = stack_values(online_q[1:])
        target_next = stack_values(target_q[1:])
        targets = double_q_targets(
            batch["rewards"], batch["terminated"], online_next, target_next,
            batch["avail"][:, 1:], batch["states"][:, 1:],
            lambda q, s: mix_values(self.target.mixer, q, s), cfg.gamma)

        loss = td_loss(q_tot, targets, batch["mask"])
        self.team.agent.zero_grad()
        if self.team.comm is not None:
            self.team.comm.zero_grad()
        self.team.mixer.zero_grad()
        loss.backward()

        grad_norm = clip_grad_norm(self.team.parameters(), cfg.grad_clip)
        self.opt_main.step()
        if self.opt_comm is not None:
            self.opt_comm.step()

        self.train_steps += 1
        if self.train_steps % cfg.target_update_interval == 0:
            self.target.copy_from(self.team)
        return {"loss": loss.item(), "grad_norm": grad_norm,
                "train_steps": self.train_steps}
