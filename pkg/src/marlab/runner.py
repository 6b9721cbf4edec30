"""Training orchestration for one (config, seed) run.

Episodes are collected greedily-with-noise (epsilon-greedy blended with
top-k Boltzmann when configured), stored whole, and trained on once per
collected episode.  Every test_interval environment steps the greedy policy
is measured on fresh test episodes and one CSV row is emitted.  All
randomness is drawn from streams keyed by (seed, purpose, counter), so a
run is a pure function of its seed and resumes bit-exactly from a snapshot.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Optional

import numpy as np

from .agents import TeamModel, build_inputs, make_team
from .config import RunConfig, save_run_config
from .envs import Env, make_env
from .exploration import GREEDY, ExplorationConfig, action_distribution, sample_from
from .learner import EpisodeRecord, Learner, ReplayBuffer, epsilon
from .nn import no_grad, save_checkpoint, load_checkpoint, read_records, write_records
from .rng import stream, unit_uniform

CSV_FIELDS = ["seed", "env_step", "mean_test_return", "success_rate", "loss", "epsilon"]


def build_team_for_env(config: RunConfig, env: Env, seed: int) -> TeamModel:
    comm_config = config.comm.to_comm_config(config.train.hidden_dim)
    return make_team(env.obs_dim, env.n_actions, env.n_agents, env.state_dim,
                     config.train.hidden_dim, config.mixer, comm_config,
                     config.comm.residual, seed)


def rollout_episode(env: Env, team: TeamModel, explore: ExplorationConfig,
                    seed: int, episode_idx: int,
                    comm_mask: Optional[np.ndarray] = None) -> EpisodeRecord:
    """Collect one episode; action noise streams are keyed per (agent, step)."""
    obs, state = env.reset(stream(seed, "env", episode_idx))
    n = env.n_agents
    obs_list, state_list, avail_list = [obs], [state], [env.avail_actions()]
    action_list, reward_list = [], []
    h = team.initial_hidden(n)
    last_actions = None
    done = False
    t = 0
    with no_grad():
        while not done:
            inputs = build_inputs(obs, last_actions, env.n_actions, n)
            q, h = team.step(inputs, h, comm_mask=comm_mask)
            avail = avail_list[-1]
            actions = np.array([
                sample_from(action_distribution(q.data[i], avail[i], explore),
                            unit_uniform(seed, "act", episode_idx, t, i))
                for i in range(n)
            ])
            reward, done, obs, state = env.step(actions)
            action_list.append(actions)
            reward_list.append(reward)
            obs_list.append(obs)
            state_list.append(state)
            avail_list.append(env.avail_actions())
            last_actions = actions
            t += 1
    return EpisodeRecord(
        obs=np.stack(obs_list), states=np.stack(state_list),
        avail=np.stack(avail_list), actions=np.stack(action_list),
        rewards=np.array(reward_list, dtype=float), terminated=True)


def evaluate(env: Env, team: TeamModel, episodes: int, seed: int,
             test_point: int) -> tuple[float, float]:
    """Greedy test protocol; returns (mean return, success rate)."""
    returns, successes = [], 0
    for e in range(episodes):
        record = rollout_episode(env, team, GREEDY, seed,
                                 episode_idx=_test_episode_key(test_point, e))
        total = float(record.rewards.sum())
        returns.append(total)
        successes += int(env.is_success(total))
    return float(np.mean(returns)), successes / episodes


def _test_episode_key(test_point: int, episode: int) -> int:
    # distinct from training episode indices, which count from 0
    return 1_000_000_000 + test_point * 10_000 + episode


class SeedRun:
    """State of one seed's training run; snapshotable and resumable."""

    def __init__(self, config: RunConfig, seed: int, out_dir: Path):
        self.config = config
        self.seed = seed
        self.out_dir = Path(out_dir)
        self.env = make_env(config.env.name, config.env.params)
        self.test_env = make_env(config.env.name, config.env.params)
        team = build_team_for_env(config, self.env, seed)
        target = build_team_for_env(config, self.env, seed)
        self.learner = Learner(team, target, config.train, seed)
        self.buffer = ReplayBuffer(config.train.buffer_capacity)
        self.env_step = 0
        self.episode_idx = 0
        self.next_test = 0
        self.last_loss = math.nan
        self.rows: list[dict] = []

    @property
    def team(self) -> TeamModel:
        return self.learner.team

    def _test_point(self):
        test_idx = self.next_test // max(self.config.train.test_interval, 1)
        mean_return, success = evaluate(
            self.test_env, self.team, self.config.train.test_episodes,
            self.seed, test_idx)
        self.rows.append({
            "seed": self.seed,
            "env_step": self.env_step,
            "mean_test_return": mean_return,
            "success_rate": success,
            "loss": self.last_loss,
            "epsilon": epsilon(self.env_step, self.config.train),
        })

    def _due_test_points(self, snapshot_interval: Optional[int]):
        while self.env_step >= self.next_test:
            self._test_point()
            self.next_test += self.config.train.test_interval
            if snapshot_interval and (self.next_test // self.config.train.test_interval) % snapshot_interval == 0:
                self.save_state()

    def run(self, snapshot_interval: Optional[int] = None) -> list[dict]:
        cfg = self.config
        while self.env_step < cfg.total_env_steps:
            self._due_test_points(snapshot_interval)
            explore = ExplorationConfig(
                epsilon=epsilon(self.env_step, cfg.train),
                k=cfg.exploration.k,
                temperature=cfg.exploration.temperature)
            record = rollout_episode(self.env, self.team, explore,
                                     self.seed, self.episode_idx)
            self.buffer.add(record)
            self.env_step += record.length
            self.episode_idx += 1
            metrics = self.learner.train_step(self.buffer)
            if metrics is not None:
                self.last_loss = metrics["loss"]
        self._due_test_points(snapshot_interval)
        return self.rows

    # Snapshots: everything needed to continue the run bit-exactly.
    def save_state(self):
        state_dir = self.out_dir / "state"
        state_dir.mkdir(parents=True, exist_ok=True)
        save_checkpoint(self.team.parameters(), state_dir / "params.bin")
        save_checkpoint(self.learner.target.parameters(), state_dir / "target.bin")
        opt_arrays = dict(self.learner.opt_main.state_arrays())
        if self.learner.opt_comm is not None:
            opt_arrays.update(self.learner.opt_comm.state_arrays())
        write_records(state_dir / "optimizer.bin", opt_arrays.items())
        self._save_buffer(state_dir / "buffer.npz")
        (state_dir / "progress.json").write_text(json.dumps({
            "env_step": self.env_step,
            "episode_idx": self.episode_idx,
            "next_test": self.next_test,
            "train_steps": self.learner.train_steps,
            "opt_main_steps": self.learner.opt_main.step_count,
            "opt_comm_steps": (self.learner.opt_comm.step_count
                               if self.learner.opt_comm else 0),
            "last_loss": None if math.isnan(self.last_loss) else self.last_loss,
            "rows": self.rows,
        }))

    def load_state(self):
        state_dir = self.out_dir / "state"
        progress = json.loads((state_dir / "progress.json").read_text())
        load_checkpoint(state_dir / "params.bin", self.team.parameters())
        load_checkpoint(state_dir / "target.bin", self.learner.target.parameters())
        stored = dict(read_records(state_dir / "optimizer.bin"))
        for opt in filter(None, [self.learner.opt_main, self.learner.opt_comm]):
            for name, arr in opt.state_arrays().items():
                arr[...] = stored[name]
        self._load_buffer(state_dir / "buffer.npz")
        self.env_step = progress["env_step"]
        self.episode_idx = progress["episode_idx"]
        self.next_test = progress["next_test"]
        self.learner.train_steps = progress["train_steps"]
        self.learner.opt_main.step_count = progress["opt_main_steps"]
        if self.learner.opt_comm is not None:
            self.learner.opt_comm.step_count = progress["opt_comm_steps"]
        self.last_loss = progress["last_loss"] if progress["last_loss"] is not None else math.nan
        self.rows = progress["rows"]

    def _save_buffer(self, path):
        eps = self.buffer.episodes
        if not eps:
            np.savez(path, count=np.array(0))
            return
        t_max = max(ep.length for ep in eps)
        n, obs_dim = eps[0].obs.shape[1:]
        n_actions = eps[0].avail.shape[-1]
        count = len(eps)
        arrays = {
            "count": np.array(count),
            "lengths": np.array([ep.length for ep in eps]),
            "terminated": np.array([ep.terminated for ep in eps]),
            "obs": np.zeros((count, t_max + 1, n, obs_dim)),
            "states": np.zeros((count, t_max + 1, eps[0].states.shape[-1])),
            "avail": np.zeros((count, t_max + 1, n, n_actions), dtype=bool),
            "actions": np.zeros((count, t_max, n), dtype=np.intp),
            "rewards": np.zeros((count, t_max)),
        }
        for i, ep in enumerate(eps):
            t = ep.length
            arrays["obs"][i, : t + 1] = ep.obs
            arrays["states"][i, : t + 1] = ep.states
            arrays["avail"][i, : t + 1] = ep.avail
            arrays["actions"][i, :t] = ep.actions
            arrays["rewards"][i, :t] = ep.rewards
        np.savez(path, **arrays)

    def _load_buffer(self, path):
        data = np.load(path)
        self.buffer = ReplayBuffer(self.config.train.buffer_capacity)
        count = int(data["count"])
        for i in range(count):
            t = int(data["lengths"][i])
            self.buffer.add(EpisodeRecord(
                obs=data["obs"][i, : t + 1].copy(),
                states=data["states"][i, : t + 1].copy(),
                avail=data["avail"][i, : t + 1].copy(),
                actions=data["actions"][i, :t].copy(),
                rewards=data["rewards"][i, :t].copy(),
                terminated=bool(data["terminated"][i])))


def write_rows_csv(rows: list[dict], path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_FIELDS)
        for row in rows:
            writer.writerow([_format(row[k]) for k in CSV_FIELDS])


def _format(value):
    if isinstance(value, float):
        return repr(value)
    return value


def train_one_seed(config: RunConfig, seed: int, out_dir, resume: bool = False,
                   snapshot_interval: Optional[int] = None) -> list[dict]:
    """Full training for one seed; writes metrics.csv and a final checkpoint."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    run = SeedRun(config, seed, out_dir)
    if resume and (out_dir / "state" / "progress.json").exists():
        run.load_state()
    rows = run.run(snapshot_interval=snapshot_interval)
    write_rows_csv(rows, out_dir / "metrics.csv")
    save_checkpoint(run.team.parameters(), out_dir / "checkpoint.bin",
                    extra={"seed": seed, "env_step": run.env_step})
    run.save_state()
    return rows


def _seed_worker(args):
    config_dict, seed, out_dir, resume = args
    from .config import run_config_from_dict

    config = run_config_from_dict(config_dict)
    return seed, train_one_seed(config, seed, out_dir, resume=resume)


def train_all_seeds(config: RunConfig, out_dir, resume: bool = False,
                    workers: int = 1) -> dict[int, list[dict]]:
    """Run every configured seed, in processes when workers > 1."""
    from .config import run_config_to_dict

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_run_config(config, out_dir / "config.json")
    jobs = [(run_config_to_dict(config), seed, out_dir / f"seed_{seed}", resume)
            for seed in config.seeds]
    results: dict[int, list[dict]] = {}
    if workers > 1 and len(jobs) > 1:
        import multiprocessing as mp

        with mp.get_context("spawn").Pool(processes=workers) as pool:
            for seed, rows in pool.imap_unordered(_seed_worker, jobs):
                results[seed] = rows
    else:
        for job in jobs:
            seed, rows = _seed_worker(job)
            results[seed] = rows
    combined = []
    for seed in config.seeds:
        combined.extend(results[seed])
    write_rows_csv(combined, out_dir / "metrics.csv")
    return results
