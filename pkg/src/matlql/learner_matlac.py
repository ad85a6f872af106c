"""Tabular two-level actor-critic (MA-TLAC).

Two softmax actors per agent condition on the state only (so they can run
without seeing anyone else), while the two critics are keyed on the others'
joint action like the MA-TLQL tables. The high-level actor picks an advisor
directly; there is no ensemble vote.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .advisors import Advisor
from .game_core import Environment
from .learner_matlql import AgentConfig, Decision, MATLQLAgent, choose_branch
from .schedules import ConfigurationError


def softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=float)
    e = np.exp(z - z.max())
    return e / e.sum()


def critic_target(level: str, r: float, q_next_row: Sequence[float], slot: int | None,
                  gamma: float, terminal: bool) -> float:
    """TD target for the low (max over own actions) or high (followed advisor) critic.

    ``q_next_row`` is the critic row at (s', others' next joint action).
    """
    if terminal:
        return r
    if level == "low":
        return r + gamma * max(q_next_row)
    if level == "high":
        return r + gamma * q_next_row[slot]
    raise ValueError(f"unknown level {level!r}")


def advantage(y: float, policy: np.ndarray, q_row: Sequence[float]) -> float:
    """``y`` minus the policy-weighted critic value at the current state."""
    return float(y - np.dot(policy, np.asarray(q_row, dtype=float)))


def actor_update(logits: np.ndarray, chosen: int, adv: float, rate: float) -> np.ndarray:
    """Ascent step on ``adv * log pi(chosen)`` for a softmax over ``logits`` (in place)."""
    if rate <= 0:
        raise ValueError("actor rate must be positive")
    pi = softmax(logits)
    grad = -pi
    grad[chosen] += 1.0
    logits += rate * adv * grad
    return logits


@dataclass
class ActorCriticConfig(AgentConfig):
    actor_rate: float = 0.01
    high_actor_rate: float | None = None


class MATLACAgent(MATLQLAgent):
    """Critics reuse the MA-TLQL table layout; actors are (state x slot) logits."""

    def __init__(self, index: int, env: Environment, advisors: Sequence[Advisor] = (),
                 config: ActorCriticConfig | None = None):
        super().__init__(index, env, advisors, config or ActorCriticConfig())
        self.actor_low = np.zeros((env.num_states, self.num_actions))
        self.actor_high = np.zeros((env.num_states, max(len(self.advisors), 1)))

    @property
    def critic_low(self):
        return self.low

    @property
    def critic_high(self):
        return self.high

    def policy(self, s: int) -> np.ndarray:
        return softmax(self.actor_low[s])

    def advisor_policy(self, s: int) -> np.ndarray:
        return softmax(self.actor_high[s, :len(self.advisors)])

    def act(self, s, k, rng, eps_prime, explore=True, last_joint=None):
        # k is deliberately unused: actors only look at the state
        if not explore:
            return Decision(int(np.argmax(self.actor_low[s])), "greedy")
        ex = self.config.exploration
        u = rng.random()
        u_prime = rng.random() if u < eps_prime else 1.0
        branch = choose_branch(u, u_prime, eps_prime, ex.epsilon, ex.eta)
        if branch == "random":
            return Decision(int(rng.integers(self.num_actions)), "random")
        if branch == "greedy":
            return Decision(int(rng.choice(self.num_actions, p=self.policy(s))), "greedy")
        if not self.advisors:
            raise ConfigurationError(f"agent {self.index} has no advisors to defer to")
        recs = self.consult(s, rng, last_joint)
        if branch == "ensemble":
            ad = int(rng.choice(len(self.advisors), p=self.advisor_policy(s)))
        else:
            ad = int(rng.integers(len(self.advisors)))
        return Decision(recs[ad], "advisor", ad, recs)

    def learn(self, s, k, a, r, s_next, k_next, terminal, decision):
        cfg = self.config
        gamma = cfg.gamma
        # low level: critic first, then the actor against the refreshed critic
        y = critic_target("low", r, self.low.data[s_next][k_next], None, gamma, terminal)
        n = self.low_counts.bump(s, k, a)
        row = self.low.data[s][k]
        row[a] += self.rate(n) * (y - row[a])
        adv = advantage(y, self.policy(s), row)
        actor_update(self.actor_low[s], a, adv, cfg.actor_rate)
        if decision.advisor is None:
            return
        ad = decision.advisor
        y = critic_target("high", r, self.high.data[s_next][k_next], ad, gamma, terminal)
        n = self.high_counts.bump(s, k, ad)
        hrow = self.high.data[s][k]
        hrow[ad] += self.high_rate(n) * (y - hrow[ad])
        adv = advantage(y, self.advisor_policy(s), hrow[:len(self.advisors)])
        view = self.actor_high[s, :len(self.advisors)]
        actor_update(view, ad, adv, cfg.high_actor_rate or cfg.actor_rate)

    def arrays(self):
        return {
            "ACTOR_LOW": self.actor_low.copy(),
            "ACTOR_HIGH": self.actor_high.copy(),
            "CRITIC_LOW": self.low.to_array(),
            "CRITIC_HIGH": self.high.to_array(),
        }

    def checkpoint_sections(self):
        return {
            "ACTOR_LOW": self.actor_low,
            "ACTOR_HIGH": self.actor_high,
            "CRITIC_LOW": self.low,
            "CRITIC_HIGH": self.high,
        }


def matlac_step(trainer, eps_prime: float = 0.0):
    return trainer.run_episode(eps_prime, learn=True)
