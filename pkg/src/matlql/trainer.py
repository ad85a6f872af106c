"""Episode loop shared by every learner.

Agents act simultaneously, so when agent j picks its action it has to guess
the others' joint action, and its update targets need the others' *next*
joint action. Two sources are supported:

``observed``
    selection assumes the others repeat their previous actions; an update is
    held back one step so that its target uses the actions the others really
    took in the next state (truncated episodes fall back to the last actions).
``copies``
    every agent can read the others' tables (exact in a single process); the
    others' actions at a state are taken from a pure equilibrium of the stage
    game those tables define, which makes targets Nash-Q style.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .advisors import AgentTransition
from .game_core import Environment, Episode, StepOutcome, others_index
from .learner_matlql import Agent, Decision


def pure_equilibria(payoffs: Sequence[np.ndarray]) -> list[tuple[int, ...]]:
    """Joint actions from which no agent gains by deviating alone."""
    sizes = payoffs[0].shape
    out = []
    for ja in itertools.product(*(range(n) for n in sizes)):
        stable = True
        for j, p in enumerate(payoffs):
            idx = list(ja)
            idx[j] = slice(None)
            if p[tuple(idx)].max() > p[ja] + 1e-12:
                stable = False
                break
        if stable:
            out.append(ja)
    return out


def stage_choice(payoffs: Sequence[np.ndarray], agent: int) -> tuple[int, ...] | None:
    """The pure equilibrium ``agent`` prefers (lowest joint index on ties)."""
    eqs = pure_equilibria(payoffs)
    if not eqs:
        return None
    mine = payoffs[agent]
    return max(eqs, key=lambda ja: (mine[ja], tuple(-a for a in ja)))


@dataclass
class EpisodeStats:
    returns: list[float]
    wins: list[bool]
    steps: int = 0
    opportunities: list[int] = field(default_factory=list)
    selections: list[list[int]] = field(default_factory=list)
    sources: list[dict[str, int]] = field(default_factory=list)


class Trainer:
    """Drives ``agents`` (one per environment agent) through episodes."""

    def __init__(self, env: Environment, agents: Sequence[Agent], rng: np.random.Generator,
                 joint_mode: str = "observed", on_step: Callable | None = None):
        if len(agents) != env.num_agents:
            raise ValueError(f"need {env.num_agents} agents, got {len(agents)}")
        if joint_mode not in ("observed", "copies"):
            raise ValueError(f"unknown joint-action mode {joint_mode!r}")
        self.env = env
        self.agents = list(agents)
        self.rng = rng
        self.joint_mode = joint_mode
        self.last_joint: tuple[int, ...] = (0,) * env.num_agents
        self.on_step = on_step
        self._copies_ok = all(getattr(a, "joint", False) and hasattr(a, "low") for a in self.agents)
        if joint_mode == "copies":
            self._index_joint_actions()
        self.total_steps = 0
        # a one-step delay is only needed when some learner keys on others' actions
        self.delayed = joint_mode == "observed" and env.num_agents > 1 and any(
            a.joint and a.learns for a in self.agents)

    # -- joint-action model ----------------------------------------------------

    def _index_joint_actions(self):
        env = self.env
        self._jas = env.joint_actions()
        self._slots = [[(others_index(ja, env.action_sizes, j), ja[j]) for ja in self._jas]
                       for j in range(env.num_agents)]
        # for each agent, joint actions that differ only in that agent's own action
        self._groups = []
        for j in range(env.num_agents):
            groups: dict = {}
            for i, ja in enumerate(self._jas):
                groups.setdefault(ja[:j] + ja[j + 1:], []).append(i)
            self._groups.append(list(groups.values()))

    def _copies_joint(self, s: int, j: int) -> tuple[int, ...] | None:
        if not self._copies_ok:
            return None
        vals = []
        for agent, slots in zip(self.agents, self._slots):
            block = agent.low.data[s]
            vals.append([block[k][a] for k, a in slots])
        stable = [True] * len(self._jas)
        for v, groups in zip(vals, self._groups):
            for g in groups:
                m = max(v[i] for i in g) - 1e-12
                for i in g:
                    if v[i] < m:
                        stable[i] = False
        mine = vals[j]
        best = None
        for i, ok in enumerate(stable):
            if ok and (best is None or mine[i] > mine[best]):
                best = i
        return None if best is None else self._jas[best]

    def predicted_joint(self, s: int, j: int) -> tuple[int, ...]:
        if self.joint_mode == "copies":
            ja = self._copies_joint(s, j)
            if ja is not None:
                return ja
        return self.last_joint

    def key(self, agent: Agent, ja: Sequence[int]) -> int:
        if not agent.joint:
            return 0
        return others_index(ja, self.env.action_sizes, agent.index)

    # -- learning --------------------------------------------------------------

    def _apply(self, s, ja, out: StepOutcome, decisions: Sequence[Decision], ja_next):
        for j, agent in enumerate(self.agents):
            if not agent.learns:
                continue
            k = self.key(agent, ja)
            if out.terminal:
                k_next = 0
            elif self.joint_mode == "copies":
                k_next = self.key(agent, self.predicted_joint(out.next_state, j))
            else:
                k_next = self.key(agent, ja_next)
            agent.learn(s, k, ja[j], out.rewards[j], out.next_state, k_next, out.terminal, decisions[j])

    def run_episode(self, eps_prime: float = 0.0, learn: bool = True,
                    max_steps: int | None = None) -> EpisodeStats:
        env = self.env
        n = env.num_agents
        ep = Episode(env, self.rng)
        stats = EpisodeStats(
            returns=[0.0] * n, wins=[False] * n, opportunities=[0] * n,
            selections=[[0] * max(len(a.advisors), 1) for a in self.agents],
            sources=[{} for _ in range(n)],
        )
        s = ep.state
        pending = None
        while True:
            if learn:
                for agent in self.agents:
                    agent.visit(s)
            decisions = []
            for j, agent in enumerate(self.agents):
                guess = self.predicted_joint(s, j)
                ep_j = eps_prime if (learn and agent.advisors) else 0.0
                decisions.append(agent.act(s, self.key(agent, guess), self.rng, ep_j,
                                           explore=learn, last_joint=self.last_joint))
            ja = tuple(d.action for d in decisions)
            if pending is not None:
                self._apply(*pending, ja)
                pending = None
            out = ep.step(ja)
            self.total_steps += 1
            stats.steps += 1
            for j, d in enumerate(decisions):
                stats.returns[j] += out.rewards[j]
                stats.sources[j][d.source] = stats.sources[j].get(d.source, 0) + 1
                if d.source == "advisor":
                    stats.opportunities[j] += 1
                    stats.selections[j][d.advisor] += 1
            if learn:
                tr = AgentTransition(s, ja, out.rewards, out.next_state, out.terminal)
                for j, agent in enumerate(self.agents):
                    for adv in agent.advisors:
                        if not adv.fixed:
                            adv.observe(tr, j)
                if self.delayed and not out.done:
                    pending = (s, ja, out, decisions)
                else:
                    self._apply(s, ja, out, decisions, ja)
            self.last_joint = ja
            if self.on_step is not None:
                self.on_step(self, s, ja, out)
            if out.terminal:
                for j in out.winners:
                    stats.wins[j] = True
            if out.done or (max_steps is not None and stats.steps >= max_steps):
                break
            s = out.next_state
        if pending is not None:
            # cut short mid-episode: nobody acts at s', fall back to the last actions
            self._apply(*pending, self.last_joint)
        return stats

    def run_steps(self, steps: int, eps_prime: float = 0.0, stop: Callable[[], bool] | None = None) -> int:
        """Train for ``steps`` environment steps across as many episodes as needed.

        ``stop`` is polled through ``on_step`` callers; returns steps taken.
        """
        start = self.total_steps
        while self.total_steps - start < steps:
            self.run_episode(eps_prime, learn=True, max_steps=steps - (self.total_steps - start))
            if stop is not None and stop():
                break
        return self.total_steps - start


def step_and_learn(trainer: Trainer, eps_prime: float = 0.0) -> EpisodeStats:
    """Run one training episode and return its statistics."""
    return trainer.run_episode(eps_prime, learn=True)
