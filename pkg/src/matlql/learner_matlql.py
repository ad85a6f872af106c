"""Tabular multi-agent two-level Q-learning (MA-TLQL).

Each agent keeps two tables keyed on the other agents' joint action:

* ``low``: values of its own actions, trained with a Q-learning (control)
  update;
* ``high``: values of following each advisor, trained with an on-policy
  (evaluation) update that never reads ``low``.

While the policy-reuse probability eps' is positive the agent may defer to
its advisors; the action is picked by a visit-count weighted vote so that
agreement among many advisors wins early and the single best-rated advisor
wins once a state is familiar.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .advisors import Advisor
from .game_core import Environment, others_count
from .schedules import ConfigurationError, ExplorationPolicy, LearningRateSchedule
from .tables import Counter3, QTable


class UndefinedVote(ValueError):
    """Raised when a vote is requested for an action nobody recommended."""


# ---------------------------------------------------------------------------
# update rules
# ---------------------------------------------------------------------------

def update_low_q(table: QTable, s: int, k: int, a: int, r: float, s_next: int, k_next: int,
                 alpha: float, gamma: float, terminal: bool) -> float:
    old = table.data[s][k][a]
    target = r if terminal else r + gamma * max(table.data[s_next][k_next])
    new = old + alpha * (target - old)
    table.data[s][k][a] = new
    return new


def update_high_q(table: QTable, s: int, k: int, ad: int, r: float, s_next: int, k_next: int,
                  alpha: float, gamma: float, terminal: bool) -> float:
    old = table.data[s][k][ad]
    target = r if terminal else r + gamma * table.data[s_next][k_next][ad]
    new = old + alpha * (target - old)
    table.data[s][k][ad] = new
    return new


# ---------------------------------------------------------------------------
# ensemble vote
# ---------------------------------------------------------------------------

def vote_value(values: Sequence[float], mu_s: int) -> float:
    """Best value in full plus every other value scaled by ``1/mu_s``.

    ``values`` must be ordered by advisor id; when several tie for the best,
    only the first (lowest id) escapes the scaling.
    """
    if not values:
        raise UndefinedVote("no advisor recommends this action")
    if mu_s < 1:
        raise ValueError("state visit count must be at least 1")
    best = 0
    for i in range(1, len(values)):
        if values[i] > values[best]:
            best = i
    rest = sum(v for i, v in enumerate(values) if i != best)
    return values[best] + rest / mu_s


def value_of_vote(high: QTable, s: int, k: int, recommenders: Sequence[int], mu_s: int) -> float:
    row = high.data[s][k]
    return vote_value([row[ad] for ad in sorted(recommenders)], mu_s)


def select_advisor_action(high: QTable, s: int, k: int, advisor_recs: Sequence[int] | dict[int, int],
                          mu_s: int) -> tuple[int, int]:
    """Return ``(action, advisor)``: the action with the largest vote value and
    the best-rated advisor among those who recommended it."""
    if isinstance(advisor_recs, dict):
        items = sorted(advisor_recs.items())
    else:
        items = list(enumerate(advisor_recs))
    if not items:
        raise UndefinedVote("no advisors to vote")
    row = high.data[s][k]
    groups: dict[int, list[int]] = {}
    for ad, a in items:
        groups.setdefault(a, []).append(ad)
    best_action, best_value = None, None
    for a in sorted(groups):
        v = vote_value([row[ad] for ad in groups[a]], mu_s)
        if best_value is None or v > best_value:
            best_action, best_value = a, v
    members = groups[best_action]
    leader = members[0]
    for ad in members[1:]:
        if row[ad] > row[leader]:
            leader = ad
    return best_action, leader


def choose_branch(u: float, u_prime: float, eps_prime: float, eps: float, eta: float) -> str:
    """Map the two uniform draws to ``ensemble``, ``random-advisor``,
    ``random`` or ``greedy``."""
    if u < eps_prime:
        return "ensemble" if u_prime < eta else "random-advisor"
    if u < eps:
        return "random"
    return "greedy"


def greedy(row: Sequence[float]) -> int:
    best = 0
    for i in range(1, len(row)):
        if row[i] > row[best]:
            best = i
    return best


# ---------------------------------------------------------------------------
# agents
# ---------------------------------------------------------------------------

@dataclass
class Decision:
    action: int
    source: str                       # advisor | random | greedy | fixed
    advisor: int | None = None
    recs: tuple[int, ...] | None = None


@dataclass
class AgentConfig:
    gamma: float = 0.9
    rate: LearningRateSchedule = field(default_factory=LearningRateSchedule)
    high_rate: LearningRateSchedule | None = None
    exploration: ExplorationPolicy = field(default_factory=ExplorationPolicy)
    # "followed": only the advisor whose action was executed gets the evaluation
    # update; "agreeing": every advisor that recommended that action does
    high_update: str = "followed"


class Agent:
    """Common surface used by the trainer."""

    joint = False
    learns = True

    def __init__(self, index: int, env: Environment, advisors: Sequence[Advisor] = ()):
        self.index = index
        self.num_actions = env.action_sizes[index]
        self.num_states = env.num_states
        self.advisors = list(advisors)

    def visit(self, s: int) -> None:
        pass

    def act(self, s: int, k: int, rng: np.random.Generator, eps_prime: float,
            explore: bool = True, last_joint: Sequence[int] | None = None) -> Decision:
        raise NotImplementedError

    def learn(self, s, k, a, r, s_next, k_next, terminal, decision) -> None:
        pass

    def consult(self, s: int, rng: np.random.Generator, last_joint=None) -> tuple[int, ...]:
        return tuple(ad.recommend(s, self.index, rng, last_joint) for ad in self.advisors)

    def arrays(self) -> dict[str, np.ndarray]:
        return {}


class MATLQLAgent(Agent):
    joint = True

    def __init__(self, index: int, env: Environment, advisors: Sequence[Advisor] = (),
                 config: AgentConfig | None = None):
        super().__init__(index, env, advisors)
        self.config = config or AgentConfig()
        if self.config.high_update not in ("followed", "agreeing"):
            raise ConfigurationError(f"unknown high_update mode {self.config.high_update!r}")
        self.action_sizes = env.action_sizes
        self.num_others = others_count(env.action_sizes, index) if self.joint else 1
        self.low = QTable(env.num_states, self.num_others, self.num_actions)
        self.high = QTable(env.num_states, self.num_others, self._high_slots())
        self.low_counts = Counter3(env.num_states, self.num_others, self.num_actions)
        self.high_counts = Counter3(env.num_states, self.num_others, self._high_slots())
        self.mu = [0] * env.num_states
        self.rate = self.config.rate
        self.high_rate = self.config.high_rate or self.config.rate

    def _high_slots(self) -> int:
        return max(len(self.advisors), 1)

    def visit(self, s):
        self.mu[s] += 1

    # -- action selection -------------------------------------------------

    def choose_advisor(self, s: int, k: int, recs: tuple[int, ...]) -> tuple[int, int]:
        return select_advisor_action(self.high, s, k, recs, max(self.mu[s], 1))

    def greedy_action(self, s: int, k: int) -> int:
        return greedy(self.low.data[s][k])

    def select_action(self, s: int, k: int, u: float, u_prime: float, eps_prime: float,
                      rng: np.random.Generator, last_joint=None) -> Decision:
        ex = self.config.exploration
        branch = choose_branch(u, u_prime, eps_prime, ex.epsilon, ex.eta)
        if branch in ("ensemble", "random-advisor"):
            if not self.advisors:
                raise ConfigurationError(f"agent {self.index} has no advisors to defer to")
            recs = self.consult(s, rng, last_joint)
            if branch == "ensemble":
                a, ad = self.choose_advisor(s, k, recs)
            else:
                ad = int(rng.integers(len(self.advisors)))
                a = recs[ad]
            return Decision(a, "advisor", ad, recs)
        if branch == "random":
            return Decision(int(rng.integers(self.num_actions)), "random")
        return Decision(self.greedy_action(s, k), "greedy")

    def act(self, s, k, rng, eps_prime, explore=True, last_joint=None):
        if not explore:
            return Decision(self.greedy_action(s, k), "greedy")
        u = rng.random()
        u_prime = rng.random() if u < eps_prime else 1.0
        return self.select_action(s, k, u, u_prime, eps_prime, rng, last_joint)

    # -- learning ------------------------------------------------------------

    def learn(self, s, k, a, r, s_next, k_next, terminal, decision):
        gamma = self.config.gamma
        n = self.low_counts.bump(s, k, a)
        update_low_q(self.low, s, k, a, r, s_next, k_next, self.rate(n), gamma, terminal)
        if decision.advisor is not None:
            self.learn_high(s, k, a, r, s_next, k_next, terminal, decision)

    def learn_high(self, s, k, a, r, s_next, k_next, terminal, decision):
        gamma = self.config.gamma
        if self.config.high_update == "agreeing":
            targets = [ad for ad, rec in enumerate(decision.recs) if rec == a]
        else:
            targets = [decision.advisor]
        for ad in targets:
            n = self.high_counts.bump(s, k, ad)
            update_high_q(self.high, s, k, ad, r, s_next, k_next, self.high_rate(n), gamma, terminal)

    def arrays(self):
        return {"LOW": self.low.to_array(), "HIGH": self.high.to_array()}

    def checkpoint_sections(self):
        return {"LOW": self.low, "HIGH": self.high}
