"""Comparison learners and ablations.

``TLQLAgent`` is vanilla two-level Q-learning: single-agent keyed tables, an
extra RL entry in the high table and a synchronization step that copies low
values into the high table. ``AblationAgent`` switches the three MA-TLQL
mechanisms (joint-action keys, ensemble vote, advisor evaluation) on and off
one at a time.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .advisors import Advisor
from .game_core import Environment
from .learner_matlql import (
    Agent,
    AgentConfig,
    Decision,
    MATLQLAgent,
    UndefinedVote,
    choose_branch,
    greedy,
    update_low_q,
)
from .schedules import ConfigurationError
from .tables import Counter3, QTable


# ---------------------------------------------------------------------------
# primitive rules
# ---------------------------------------------------------------------------

def tlql_sync(low: QTable, high: QTable, s: int, k: int, executed: int,
              followed: int | None, recs: Sequence[int] | None = None) -> None:
    """Copy low values into the high table after a low-level update.

    Every advisor that recommended the executed action (at least the one that
    was followed) takes ``low[s, k, executed]``; the last high slot, the RL
    entry, always takes ``max_a low[s, k, a]``.
    """
    row = high.data[s][k]
    value = low.data[s][k][executed]
    if followed is not None:
        targets = {followed}
        if recs is not None:
            targets.update(ad for ad, a in enumerate(recs) if a == executed)
        for ad in targets:
            row[ad] = value
    row[-1] = max(low.data[s][k])


def independent_q_update(table: np.ndarray | QTable, s: int, a: int, r: float, s_next: int,
                         alpha: float, gamma: float, terminal: bool) -> float:
    if isinstance(table, QTable):
        return update_low_q(table, s, 0, a, r, s_next, 0, alpha, gamma, terminal)
    target = r if terminal else r + gamma * float(np.max(table[s_next]))
    table[s, a] += alpha * (target - table[s, a])
    return float(table[s, a])


def weighted_random_advisor_action(advisor_recs: Sequence[int] | dict[int, int],
                                   rng: np.random.Generator) -> int:
    """Sample an action with probability proportional to how many advisors
    recommend it (equivalently, follow a uniformly chosen advisor)."""
    recs = [a for _, a in sorted(advisor_recs.items())] if isinstance(advisor_recs, dict) else list(advisor_recs)
    if not recs:
        raise UndefinedVote("no advisor recommendations to sample from")
    return recs[int(rng.integers(len(recs)))]


# ---------------------------------------------------------------------------
# vanilla TLQL
# ---------------------------------------------------------------------------

class TLQLAgent(Agent):
    """Two-level Q-learning with synchronization and policy reuse.

    In the advisor branch the advisor is the argmax of the high table over
    advisor entries only; the RL entry is maintained but the low-level
    policy is reached through the greedy branch.
    """

    joint = False

    def __init__(self, index: int, env: Environment, advisors: Sequence[Advisor] = (),
                 config: AgentConfig | None = None):
        super().__init__(index, env, advisors)
        self.config = config or AgentConfig()
        self.low = QTable(env.num_states, 1, self.num_actions)
        self.high = QTable(env.num_states, 1, len(self.advisors) + 1)
        self.counts = Counter3(env.num_states, 1, self.num_actions)

    def act(self, s, k, rng, eps_prime, explore=True, last_joint=None):
        if not explore:
            return Decision(greedy(self.low.data[s][0]), "greedy")
        ex = self.config.exploration
        u = rng.random()
        u_prime = rng.random() if u < eps_prime else 1.0
        branch = choose_branch(u, u_prime, eps_prime, ex.epsilon, ex.eta)
        if branch == "random":
            return Decision(int(rng.integers(self.num_actions)), "random")
        if branch == "greedy":
            return Decision(greedy(self.low.data[s][0]), "greedy")
        if not self.advisors:
            raise ConfigurationError(f"agent {self.index} has no advisors to defer to")
        recs = self.consult(s, rng, last_joint)
        if branch == "ensemble":
            ad = greedy(self.high.data[s][0][:len(self.advisors)])
        else:
            ad = int(rng.integers(len(self.advisors)))
        return Decision(recs[ad], "advisor", ad, recs)

    def learn(self, s, k, a, r, s_next, k_next, terminal, decision):
        n = self.counts.bump(s, 0, a)
        alpha = self.config.rate(n)
        row = self.low.data[s][0]
        target = r if terminal else r + self.config.gamma * max(self.low.data[s_next][0])
        row[a] = row[a] + alpha * (target - row[a])
        tlql_sync(self.low, self.high, s, 0, a, decision.advisor, decision.recs)

    def arrays(self):
        return {"LOW": self.low.to_array(), "HIGH": self.high.to_array()}

    def checkpoint_sections(self):
        return {"LOW": self.low, "HIGH": self.high}


# ---------------------------------------------------------------------------
# ablations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AblationFlags:
    joint_action: bool = True
    ensemble: bool = True
    advisor_eval: bool = True

    @classmethod
    def parse(cls, name: str) -> "AblationFlags":
        """``tlql`` plus any of ``+JA``, ``+EM``, ``+AE``."""
        parts = name.split("+")
        if parts[0].lower() != "tlql":
            raise ConfigurationError(f"not an ablation name: {name!r}")
        flags = {p.upper() for p in parts[1:]}
        unknown = flags - {"JA", "EM", "AE"}
        if unknown:
            raise ConfigurationError(f"unknown ablation flags {sorted(unknown)}")
        return cls("JA" in flags, "EM" in flags, "AE" in flags)


class AblationAgent(MATLQLAgent):
    """MA-TLQL with individual mechanisms replaced by their TLQL counterparts.

    JA off keys both tables on the state alone; EM off picks the advisor by
    a plain argmax of the high table; AE off maintains the high table (with
    its RL entry) through synchronization instead of evaluation updates.
    """

    def __init__(self, index, env, advisors=(), config=None, flags: AblationFlags = AblationFlags()):
        self.flags = flags
        self.joint = flags.joint_action
        super().__init__(index, env, advisors, config)
        if not flags.advisor_eval and self.config.high_update != "followed":
            raise ConfigurationError("high_update applies to evaluation updates only")

    def _high_slots(self):
        n = max(len(self.advisors), 1)
        return n if self.flags.advisor_eval else len(self.advisors) + 1

    def choose_advisor(self, s, k, recs):
        if self.flags.ensemble:
            return super().choose_advisor(s, k, recs)
        ad = greedy(self.high.data[s][k][:len(self.advisors)])
        return recs[ad], ad

    def learn(self, s, k, a, r, s_next, k_next, terminal, decision):
        if self.flags.advisor_eval:
            return super().learn(s, k, a, r, s_next, k_next, terminal, decision)
        n = self.low_counts.bump(s, k, a)
        update_low_q(self.low, s, k, a, r, s_next, k_next, self.rate(n), self.config.gamma, terminal)
        tlql_sync(self.low, self.high, s, k, a, decision.advisor, decision.recs)


def build_ablation_learner(flags: AblationFlags, index: int, env: Environment,
                           advisors: Sequence[Advisor] = (), config: AgentConfig | None = None) -> AblationAgent:
    return AblationAgent(index, env, advisors, config, flags)


# ---------------------------------------------------------------------------
# other baselines
# ---------------------------------------------------------------------------

class IndependentQAgent(Agent):
    """Q-learning on (state, own action); other agents are part of the world."""

    def __init__(self, index: int, env: Environment, advisors: Sequence[Advisor] = (),
                 config: AgentConfig | None = None):
        super().__init__(index, env, advisors)
        self.config = config or AgentConfig()
        self.q = QTable(env.num_states, 1, self.num_actions)
        self.counts = Counter3(env.num_states, 1, self.num_actions)

    def act(self, s, k, rng, eps_prime, explore=True, last_joint=None):
        if not explore:
            return Decision(greedy(self.q.data[s][0]), "greedy")
        u = rng.random()
        if u < eps_prime:
            return self.defer(s, rng, last_joint)
        if u < self.config.exploration.epsilon:
            return Decision(int(rng.integers(self.num_actions)), "random")
        return Decision(greedy(self.q.data[s][0]), "greedy")

    def defer(self, s, rng, last_joint) -> Decision:
        raise ConfigurationError("independent Q-learning does not use advisors")

    def learn(self, s, k, a, r, s_next, k_next, terminal, decision):
        n = self.counts.bump(s, 0, a)
        independent_q_update(self.q, s, a, r, s_next, self.config.rate(n), self.config.gamma, terminal)

    def arrays(self):
        return {"LOW": self.q.to_array()}

    def checkpoint_sections(self):
        return {"LOW": self.q}


class WeightedAdvisorAgent(IndependentQAgent):
    """Independent Q-learning that, under policy reuse, executes an action
    drawn in proportion to how many advisors recommend it."""

    def defer(self, s, rng, last_joint):
        recs = self.consult(s, rng, last_joint)
        ad = int(rng.integers(len(recs)))
        return Decision(recs[ad], "advisor", ad, recs)


class SingleAdvisorAgent(MATLQLAgent):
    """Joint-action Q-learning whose policy reuse always follows advisor 0."""

    def select_action(self, s, k, u, u_prime, eps_prime, rng, last_joint=None):
        if u < eps_prime:
            a = self.advisors[0].recommend(s, self.index, rng, last_joint)
            return Decision(a, "advisor", 0, None)
        return super().select_action(s, k, u, 1.0, 0.0, rng, last_joint)

    def learn_high(self, *args):
        pass


class FixedPolicyAgent(Agent):
    """A non-learning participant driven by an advisor-style policy."""

    learns = False

    def __init__(self, index: int, env: Environment, policy: Advisor):
        super().__init__(index, env, ())
        self.policy = policy

    def act(self, s, k, rng, eps_prime, explore=True, last_joint=None):
        return Decision(self.policy.recommend(s, self.index, rng, last_joint), "fixed")
