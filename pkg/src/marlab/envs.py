"""Cooperative environments and exact planning oracles.

All environments follow one contract: reset() yields per-agent observations
plus a global state, step() takes the team action and returns a single
shared reward.  Observations are deterministic functions of the underlying
state.  The three built-in tasks are deliberately small enough for exact
dynamic programming, so learned values can be checked against a
brute-force optimum:

  MatrixGame    one-shot payoff table; the default "climbing" table has a
                tempting suboptimal equilibrium.
  CuePassing    each agent privately sees a cue and must announce its left
                neighbour's cue one step later; unsolvable without
                communication beyond a provable ceiling.
  TwoStepCoop   agent 0's first move selects which payoff table the team
                faces on the second step.
"""

from __future__ import annotations

import itertools
from typing import Optional

import numpy as np

from .errors import CapacityError, ConfigError, ContractError, EpisodeOverError

# Classic climbing payoffs: (0,0) is optimal at 11, but (2,2) at 5 is a
# strict equilibrium that unilateral exploration cannot escape.
CLIMBING_PAYOFF = np.array([
    [11.0, -30.0, 0.0],
    [-30.0, 7.0, 0.0],
    [0.0, 6.0, 5.0],
])

ORACLE_PAIR_LIMIT = 10_000
POLICY_ENUM_LIMIT = 2_000_000


class Env:
    """Behavioral contract shared by all environments.

    Subclasses define the class attributes n_agents, n_actions, obs_dim,
    state_dim and episode_limit, and implement reset/step.  Enumerable
    environments additionally expose the model_* methods used by the exact
    planner.
    """

    n_agents: int
    n_actions: int
    obs_dim: int
    state_dim: int
    episode_limit: int

    def reset(self, rng: np.random.Generator):
        raise NotImplementedError

    def step(self, actions):
        raise NotImplementedError

    def avail_actions(self) -> np.ndarray:
        return np.ones((self.n_agents, self.n_actions), dtype=bool)

    def is_success(self, episode_return: float) -> bool:
        raise NotImplementedError

    def _check_actions(self, actions):
        actions = np.asarray(actions, dtype=np.intp)
        if actions.shape != (self.n_agents,):
            raise ContractError(f"need {self.n_agents} actions, got shape {actions.shape}")
        avail = self.avail_actions()
        for i, a in enumerate(actions):
            if not (0 <= a < self.n_actions) or not avail[i, a]:
                raise ContractError(f"agent {i} took unavailable action {a}")
        return actions

    # Model interface for exact planning (enumerable environments only).
    def model_initial(self) -> list[tuple[object, float]]:
        raise NotImplementedError

    def model_joint_actions(self, state) -> list[tuple[int, ...]]:
        raise NotImplementedError

    def model_step(self, state, joint_action) -> tuple[float, Optional[object]]:
        raise NotImplementedError


class RemoteEnvAdapter(Env):
    """Attachment point for an external simulator spoken to over IPC.

    Declared so run configurations can name it; no transport is bundled.
    Subclass and implement the contract against your process boundary.
    """

    def __init__(self, *args, **kwargs):
        raise NotImplementedError("bring your own transport: subclass and implement Env")


class MatrixGame(Env):
    """One-shot two-player game defined by a payoff table.

    Both agents observe the same constant dummy value: all information is
    symmetric and the difficulty is purely in coordinating the joint action.
    A rectangular table gives the agents different action counts; the
    shorter side's surplus actions are simply unavailable.
    """

    def __init__(self, payoff=CLIMBING_PAYOFF):
        payoff = np.asarray(payoff, dtype=float)
        if payoff.ndim != 2:
            raise ConfigError("payoff must be a 2-D table")
        self.payoff = payoff
        self.n_agents = 2
        self.n_actions = max(payoff.shape)
        self.obs_dim = 1
        self.state_dim = 1
        self.episode_limit = 1
        self._done = True

    def _obs(self):
        return np.ones((2, 1)), np.ones(1)

    def reset(self, rng: np.random.Generator):
        self._done = False
        return self._obs()

    def avail_actions(self):
        avail = np.zeros((2, self.n_actions), dtype=bool)
        avail[0, : self.payoff.shape[0]] = True
        avail[1, : self.payoff.shape[1]] = True
        return avail

    def step(self, actions):
        if self._done:
            raise EpisodeOverError("episode already finished")
        actions = self._check_actions(actions)
        self._done = True
        reward = float(self.payoff[actions[0], actions[1]])
        obs, state = self._obs()
        return reward, True, obs, state

    def is_success(self, episode_return: float) -> bool:
        return episode_return >= self.payoff.max() - 1e-9

    def model_initial(self):
        return [("s0", 1.0)]

    def model_joint_actions(self, state):
        return list(itertools.product(range(self.payoff.shape[0]),
                                      range(self.payoff.shape[1])))

    def model_step(self, state, joint_action):
        return float(self.payoff[joint_action[0], joint_action[1]]), None


class CuePassing(Env):
    """Pass-your-cue-to-the-right: agent i must output agent (i-1)'s cue.

    At the first step each agent privately observes its own cue, uniform
    over m symbols.  At the second step the team is rewarded 1 only if
    every agent announces its left neighbour's cue.  Observations carry
    the agent's own cue and the timestep; the global state carries all
    cues (legal for centralized training, hidden from the agents).  With
    cheat_obs=True every agent sees all cues, removing the need to
    communicate.
    """

    def __init__(self, n_agents: int = 3, num_cues: int = 3, cheat_obs: bool = False):
        if n_agents < 2 or num_cues < 1:
            raise ConfigError("need at least 2 agents and 1 cue symbol")
        self.n_agents = n_agents
        self.num_cues = num_cues
        self.cheat_obs = cheat_obs
        self.n_actions = num_cues
        self.obs_dim = (n_agents * num_cues if cheat_obs else num_cues) + 2
        self.state_dim = n_agents * num_cues + 2
        self.episode_limit = 2
        self._cues = None
        self._t = 0
        self._done = True

    def _cue_block(self, cues) -> np.ndarray:
        block = np.zeros(self.n_agents * self.num_cues)
        for i, c in enumerate(cues):
            block[i * self.num_cues + c] = 1.0
        return block

    def _obs_state(self):
        t_onehot = np.zeros(2)
        t_onehot[min(self._t, 1)] = 1.0
        obs = np.zeros((self.n_agents, self.obs_dim))
        for i in range(self.n_agents):
            if self.cheat_obs:
                obs[i, : self.n_agents * self.num_cues] = self._cue_block(self._cues)
            else:
                obs[i, self._cues[i]] = 1.0
            obs[i, -2:] = t_onehot
        state = np.concatenate([self._cue_block(self._cues), t_onehot])
        return obs, state

    def reset(self, rng: np.random.Generator):
        self._cues = rng.integers(0, self.num_cues, size=self.n_agents)
        self._t = 0
        self._done = False
        return self._obs_state()

    def step(self, actions):
        if self._done:
            raise EpisodeOverError("episode already finished")
        actions = self._check_actions(actions)
        if self._t == 0:
            self._t = 1
            obs, state = self._obs_state()
            return 0.0, False, obs, state
        targets = np.roll(self._cues, 1)  # agent i must say cue of agent i-1
        reward = 1.0 if np.array_equal(actions, targets) else 0.0
        self._done = True
        obs, state = self._obs_state()
        return reward, True, obs, state

    def is_success(self, episode_return: float) -> bool:
        return episode_return >= 1.0 - 1e-9

    def model_initial(self):
        combos = itertools.product(range(self.num_cues), repeat=self.n_agents)
        p = 1.0 / self.num_cues ** self.n_agents
        return [((cues, 0), p) for cues in combos]

    def model_joint_actions(self, state):
        return list(itertools.product(range(self.num_cues), repeat=self.n_agents))

    def model_step(self, state, joint_action):
        cues, t = state
        if t == 0:
            return 0.0, (cues, 1)
        targets = tuple(np.roll(np.array(cues), 1))
        return (1.0 if tuple(joint_action) == targets else 0.0), None


class TwoStepCoop(Env):
    """Two agents, two actions, two steps; agent 0's first action selects
    which payoff table the second step uses.

    Branch A pays a flat amount regardless of actions; branch B pays by a
    table whose best entry beats branch A but whose worst entry is zero.
    Fully enumerable, so the learned joint value can be held against the
    planner's optimum.
    """

    BRANCH_A_PAYOFF = 7.0
    BRANCH_B_TABLE = np.array([[0.0, 1.0], [1.0, 8.0]])

    def __init__(self):
        self.n_agents = 2
        self.n_actions = 2
        self.obs_dim = 3
        self.state_dim = 3
        self.episode_limit = 2
        self._state_id = 0
        self._done = True

    def _obs_state(self):
        state = np.zeros(3)
        state[self._state_id] = 1.0
        return np.repeat(state[None, :], 2, axis=0), state

    def reset(self, rng: np.random.Generator):
        self._state_id = 0
        self._done = False
        return self._obs_state()

    def step(self, actions):
        if self._done:
            raise EpisodeOverError("episode already finished")
        actions = self._check_actions(actions)
        if self._state_id == 0:
            self._state_id = 1 if actions[0] == 0 else 2
            obs, state = self._obs_state()
            return 0.0, False, obs, state
        if self._state_id == 1:
            reward = self.BRANCH_A_PAYOFF
        else:
            reward = float(self.BRANCH_B_TABLE[actions[0], actions[1]])
        self._done = True
        obs, state = self._obs_state()
        return reward, True, obs, state

    def is_success(self, episode_return: float) -> bool:
        return episode_return >= self.BRANCH_B_TABLE.max() - 1e-9

    def model_initial(self):
        return [(0, 1.0)]

    def model_joint_actions(self, state):
        return [(a, b) for a in range(2) for b in range(2)]

    def model_step(self, state, joint_action):
        if state == 0:
            return 0.0, (1 if joint_action[0] == 0 else 2)
        if state == 1:
            return self.BRANCH_A_PAYOFF, None
        return float(self.BRANCH_B_TABLE[joint_action[0], joint_action[1]]), None


def make_env(name: str, params: Optional[dict] = None) -> Env:
    params = dict(params or {})
    if name == "matrix_game":
        if "payoff" in params:
            params["payoff"] = np.asarray(params["payoff"], dtype=float)
        return MatrixGame(**params)
    if name == "cue_passing":
        return CuePassing(**params)
    if name == "two_step_coop":
        return TwoStepCoop()
    raise ConfigError(f"unknown environment {name!r}")


def discounted_return(rewards, gamma: float) -> float:
    total = 0.0
    for i, r in enumerate(rewards):
        total += (gamma ** i) * r
    return total


def value_iteration(env: Env, gamma: float):
    """Exact optimal value and one optimal joint policy by backward recursion.

    Works on any enumerable environment whose model graph is acyclic (all
    built-in tasks terminate within their horizon).  Refuses instances with
    more than ORACLE_PAIR_LIMIT state-action pairs.

    Returns (optimal start value, policy dict, per-state value dict).
    """
    values: dict = {}
    policy: dict = {}
    pairs = 0

    def best(state) -> float:
        nonlocal pairs
        if state in values:
            return values[state]
        best_v, best_a = -np.inf, None
        for action in env.model_joint_actions(state):
            pairs += 1
            if pairs > ORACLE_PAIR_LIMIT:
                raise CapacityError(
                    f"more than {ORACLE_PAIR_LIMIT} state-action pairs")
            reward, nxt = env.model_step(state, action)
            v = reward if nxt is None else reward + gamma * best(nxt)
            if v > best_v:
                best_v, best_a = v, action
        values[state] = best_v
        policy[state] = best_a
        return best_v

    start_value = sum(p * best(s) for s, p in env.model_initial())
    return start_value, policy, values


def blind_optimum(env: CuePassing) -> float:
    """Best expected return over deterministic policies that see only the
    agent's own cue, found by exhaustive enumeration.

    Each agent's second-step action is a table own-cue -> action; the first
    step never affects the reward.  Every joint table is scored over every
    cue combination.
    """
    if not isinstance(env, CuePassing):
        raise ContractError("blind_optimum is defined for CuePassing")
    n, m = env.n_agents, env.num_cues
    per_agent = m ** m
    if per_agent ** n > POLICY_ENUM_LIMIT:
        raise CapacityError("policy space too large to enumerate")
    combos = list(itertools.product(range(m), repeat=n))
    tables = list(itertools.product(range(m), repeat=m))
    best = 0.0
    for joint in itertools.product(tables, repeat=n):
        wins = 0
        for cues in combos:
            if all(joint[i][cues[i]] == cues[(i - 1) % n] for i in range(n)):
                wins += 1
        best = max(best, wins / len(combos))
    return best
