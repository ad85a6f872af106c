"""Action recommenders that agents may consult during training.

Advisors are per agent and independent of one another. Fixed advisors hold no
state between calls; :class:`LearningAdvisor` keeps training an inner
Q-learner on the transitions it is shown.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .game_core import Environment, Gridworld, others_index
from .schedules import ConfigurationError


@dataclass(frozen=True)
class AgentTransition:
    """What an advisor or a single-agent learner gets to see of one step."""

    state: int
    joint_action: tuple[int, ...]
    rewards: tuple[float, ...]
    next_state: int
    terminal: bool


class Advisor:
    kind = "advisor"
    fixed = True
    # set by wrappers that fall back to random advice; read by the harness
    fallbacks = 0

    def recommend(self, state: int, agent: int, rng: np.random.Generator,
                  last_joint: Sequence[int] | None = None) -> int:
        raise NotImplementedError

    def observe(self, transition: AgentTransition, agent: int) -> None:
        """Learning hook; fixed advisors ignore it."""


class AlwaysAction(Advisor):
    kind = "always-action"

    def __init__(self, action: int, num_actions: int):
        if not 0 <= action < num_actions:
            raise ConfigurationError(f"action {action} outside [0, {num_actions})")
        self.action = action
        self.num_actions = num_actions

    def recommend(self, state, agent, rng, last_joint=None):
        return self.action


class UniformRandom(Advisor):
    kind = "uniform-random"

    def __init__(self, num_actions: int):
        self.num_actions = num_actions

    def recommend(self, state, agent, rng, last_joint=None):
        return int(rng.integers(self.num_actions))


class NoisyAdvisor(Advisor):
    """Follows ``base`` with probability ``p``, otherwise a uniform action."""

    kind = "noisy-optimal"

    def __init__(self, base: Advisor, p: float, num_actions: int):
        if not 0.0 <= p <= 1.0:
            raise ConfigurationError("noise probability must lie in [0, 1]")
        self.base = base
        self.p = p
        self.num_actions = num_actions

    def recommend(self, state, agent, rng, last_joint=None):
        # always two draws so the stream length does not depend on the branch
        u = rng.random()
        alt = int(rng.integers(self.num_actions))
        if u < self.p:
            return self.base.recommend(state, agent, rng, last_joint)
        return alt


class GridRule(Advisor):
    """Move towards (``greedy``) or away from (``avoid``) a target body.

    The target is the opponent in a duel and the evader in pursuit. With a
    finite ``radius`` the rule only applies when the target is within that
    Manhattan distance; elsewhere the advice is uniformly random.
    """

    def __init__(self, env: Environment, mode: str = "greedy", radius: int | None = None):
        if not isinstance(env, Gridworld):
            raise ConfigurationError(f"rule-{mode} advisors need a gridworld environment")
        if mode not in ("greedy", "avoid"):
            raise ConfigurationError(f"unknown rule mode {mode!r}")
        self.env = env
        self.mode = mode
        self.radius = radius
        self.kind = "rule-" + mode

    def _target(self, positions, agent):
        if self.env.spec.mode == "duel":
            return positions[1 - agent]
        return positions[-1]

    def recommend(self, state, agent, rng, last_joint=None):
        n = self.env.action_sizes[agent]
        u = int(rng.integers(n))
        if self.env.is_terminal(state):
            return u
        pos = self.env.decode(state)
        me, tgt = pos[agent], self._target(pos, agent)
        dist = abs(me[0] - tgt[0]) + abs(me[1] - tgt[1])
        if self.radius is not None and dist > self.radius:
            return u
        best, best_score = 0, None
        for a in range(n):
            c = self.env.move(me, a)
            d = abs(c[0] - tgt[0]) + abs(c[1] - tgt[1])
            score = -d if self.mode == "greedy" else d
            if best_score is None or score > best_score:
                best, best_score = a, score
        return best


class QSnapshot(Advisor):
    """Greedy advice from a frozen low-level table.

    ``table`` has shape (states, others, actions); the other agents' actions
    are assumed to repeat their last observed values (index 0 when unknown).
    States outside the snapshot fall back to uniform advice and are counted in
    ``fallbacks``.
    """

    kind = "q-snapshot"

    def __init__(self, table: np.ndarray, action_sizes: Sequence[int], agent: int):
        self.table = np.asarray(table, dtype=float)
        self.action_sizes = tuple(action_sizes)
        self.agent = agent
        self.fallbacks = 0

    def recommend(self, state, agent, rng, last_joint=None):
        n = self.action_sizes[agent]
        if state >= self.table.shape[0]:
            self.fallbacks += 1
            return int(rng.integers(n))
        k = 0
        if last_joint is not None and self.table.shape[1] > 1:
            k = others_index(last_joint, self.action_sizes, agent)
        return int(np.argmax(self.table[state, k]))


def advise_from_q_snapshot(table: np.ndarray, state: int, assumed_others: Sequence[int] = (),
                           action_sizes: Sequence[int] | None = None, agent: int = 0) -> int:
    table = np.asarray(table, dtype=float)
    k = 0
    if action_sizes is not None and table.shape[1] > 1:
        ja = list(assumed_others)
        ja.insert(agent, 0)
        k = others_index(ja, action_sizes, agent)
    return int(np.argmax(table[state, k]))


class IndependentQ:
    """Plain tabular Q-learning on (state, own action)."""

    def __init__(self, num_states: int, num_actions: int, alpha: float = 0.1, gamma: float = 0.9):
        self.q = np.zeros((num_states, num_actions))
        self.alpha = alpha
        self.gamma = gamma

    def update(self, s, a, r, s_next, terminal):
        target = r if terminal else r + self.gamma * self.q[s_next].max()
        self.q[s, a] += self.alpha * (target - self.q[s, a])
        return self.q[s, a]


class LearningAdvisor(Advisor):
    """Recommends greedily from an inner learner that keeps training."""

    kind = "learning-wrapper"
    fixed = False

    def __init__(self, inner: IndependentQ):
        self.inner = inner

    def recommend(self, state, agent, rng, last_joint=None):
        return int(np.argmax(self.inner.q[state]))

    def observe(self, transition, agent):
        self.inner.update(transition.state, transition.joint_action[agent],
                          transition.rewards[agent], transition.next_state, transition.terminal)


def observe_learning_advisor(advisor: Advisor, transition: AgentTransition, agent: int = 0) -> None:
    advisor.observe(transition, agent)


def advise_fixed_rule(advisor: Advisor, state: int, rng: np.random.Generator, agent: int = 0) -> int:
    if not advisor.fixed:
        raise ConfigurationError("advise_fixed_rule expects a fixed advisor")
    return advisor.recommend(state, agent, rng)


def build_advisor(desc: dict, env: Environment, agent: int) -> Advisor:
    """Create an advisor from a descriptor such as ``{"kind": "noisy-optimal", "p": "0.9"}``.

    ``noisy-optimal`` wraps ``base`` (default ``rule-greedy`` on gridworlds,
    ``always-action`` elsewhere); ``q-snapshot`` reads the ``LOW`` section of a
    checkpoint file named by ``file``.
    """
    kind = desc.get("kind")
    n = env.action_sizes[agent]
    radius = int(desc["radius"]) if "radius" in desc else None
    if kind == "always-action":
        return AlwaysAction(int(desc.get("action", 0)), n)
    if kind == "uniform-random":
        return UniformRandom(n)
    if kind == "rule-greedy":
        return GridRule(env, "greedy", radius)
    if kind == "rule-avoid":
        return GridRule(env, "avoid", radius)
    if kind == "noisy-optimal":
        base_kind = desc.get("base", "rule-greedy" if isinstance(env, Gridworld) else "always-action")
        base_desc = {k: v for k, v in desc.items() if k not in ("kind", "base", "p")}
        base_desc["kind"] = base_kind
        return NoisyAdvisor(build_advisor(base_desc, env, agent), float(desc.get("p", 0.9)), n)
    if kind == "q-snapshot":
        from .tables import read_checkpoint
        sections = read_checkpoint(desc["file"])
        return QSnapshot(sections["LOW"], env.action_sizes, agent)
    if kind == "learning-wrapper":
        inner = IndependentQ(env.num_states, n, float(desc.get("alpha", 0.1)), env.discount)
        return LearningAdvisor(inner)
    raise ConfigurationError(f"unknown advisor kind {kind!r}")
