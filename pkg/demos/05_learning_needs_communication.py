#!/usr/bin/env python3
"""Walkthrough: a task that provably requires communication, learned live.

Cue passing: each agent privately sees one of m symbols and must announce
its left neighbour's symbol one step later.  Exhaustive enumeration bounds
any non-communicating team at m^(1-n); with the attention stack in the
loop, the team learns to beat that ceiling and solve the task.

Runs two short trainings (with and without the stack); a couple of minutes
on one core.
"""

import tempfile
from pathlib import Path

from marlab.config import CommSettings, EnvSpec, RunConfig
from marlab.envs import CuePassing, blind_optimum, value_iteration
from marlab.learner import TrainConfig
from marlab.runner import SeedRun

env = CuePassing(n_agents=2, num_cues=2)
ceiling = blind_optimum(env)
optimum, _, _ = value_iteration(CuePassing(2, 2, cheat_obs=True), gamma=1.0)
print(f"blind ceiling (enumerated over all local policies): {ceiling:.4f}")
print(f"optimum with information sharing: {optimum:.4f}")

train = TrainConfig(batch_size=16, buffer_capacity=500, anneal_steps=2000,
                    hidden_dim=16, test_interval=1000, test_episodes=32,
                    target_update_interval=100)


def curve(comm_enabled: bool):
    cfg = RunConfig(
        env=EnvSpec("cue_passing", {"n_agents": 2, "num_cues": 2}),
        mixer="vdn",
        comm=CommSettings(enabled=comm_enabled, num_layers=1, ffn_dim=32,
                          heads=2, dropout=0.1),
        train=train, seeds=(1,), total_env_steps=6000, out_dir="demo")
    with tempfile.TemporaryDirectory() as tmp:
        return SeedRun(cfg, seed=1, out_dir=Path(tmp)).run()


print("\ntraining with the communication stack ...")
with_comm = curve(True)
print("training the bare baseline ...")
bare = curve(False)

print(f"\n{'env step':>9} {'with comm':>10} {'bare':>7}")
for a, b in zip(with_comm, bare):
    print(f"{a['env_step']:9d} {a['success_rate']:10.3f} {b['success_rate']:7.3f}")

print(f"\nthe bare agents cannot beat {ceiling:.3f} except by luck; the")
print("communicating team climbs toward the oracle optimum of 1.0.")
