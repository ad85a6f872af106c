"""Five-step scripted toy-grid replay checked against hand-worked tables.

Two advisors (A1, A2) advise a single agent on the toy grid with alpha = 0.1
and gamma = 0.9. Both advisors say R everywhere except at t = 4, where A2
says D and is followed, dropping the agent into S4. The replay runs the
MA-TLQL evaluation update and the TLQL synchronization rule side by side so
that the difference in how they rate A2 afterwards is visible.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..advisors import Advisor
from ..baselines import TLQLAgent
from ..game_core import ToyAdvisorGrid
from ..learner_matlql import AgentConfig, Decision, MATLQLAgent
from ..schedules import LearningRateSchedule

S1, S2, S3, S4, S5, G = range(6)
R, D = 0, 1
STATE_NAMES = ("S1", "S2", "S3", "S4", "S5", "G")
ACTION_NAMES = ("R", "D")
TOL = 1e-12

# (state, recommendations of A1 and A2, advisor followed)
SCRIPT = [
    (S1, (R, R), 0),
    (S2, (R, R), 0),
    (S1, (R, R), 0),
    (S2, (R, D), 1),
    (S1, (R, R), 0),
]

# non-zero entries after each step; everything else must be exactly 0
EXPECTED = {
    "low": {
        1: {},
        2: {(S2, R): 0.1},
        3: {(S2, R): 0.1, (S1, R): 0.009},
        4: {(S2, R): 0.1, (S1, R): 0.009, (S2, D): -0.1},
        5: {(S2, R): 0.1, (S1, R): 0.0171, (S2, D): -0.1},
    },
    "matlql-high": {
        1: {},
        2: {(S2, 0): 0.1, (S2, 1): 0.1},
        3: {(S2, 0): 0.1, (S2, 1): 0.1, (S1, 0): 0.009, (S1, 1): 0.009},
        4: {(S2, 0): 0.1, (S2, 1): -0.01, (S1, 0): 0.009, (S1, 1): 0.009},
        5: {(S2, 0): 0.1, (S2, 1): -0.01, (S1, 0): 0.0171, (S1, 1): 0.0072},
    },
    # slot 2 is the RL entry
    "tlql-high": {
        1: {},
        2: {(S2, 0): 0.1, (S2, 1): 0.1, (S2, 2): 0.1},
        3: {(S2, 0): 0.1, (S2, 1): 0.1, (S2, 2): 0.1,
            (S1, 0): 0.009, (S1, 1): 0.009, (S1, 2): 0.009},
        4: {(S2, 0): 0.1, (S2, 1): -0.1, (S2, 2): 0.1,
            (S1, 0): 0.009, (S1, 1): 0.009, (S1, 2): 0.009},
        5: {(S2, 0): 0.1, (S2, 1): -0.1, (S2, 2): 0.1,
            (S1, 0): 0.0171, (S1, 1): 0.0171, (S1, 2): 0.0171},
    },
}


class _Scripted(Advisor):
    """Placeholder; the script supplies recommendations directly."""

    def recommend(self, state, agent, rng, last_joint=None):
        raise RuntimeError("scripted advisor is never queried")


@dataclass
class Mismatch:
    step: int
    table: str
    key: str
    expected: float
    actual: float

    def __str__(self):
        return (f"t={self.step} {self.table}[{self.key}]: expected {self.expected:.17g}, "
                f"got {self.actual:.17g}")


@dataclass
class GoldenReport:
    mismatches: list[Mismatch] = field(default_factory=list)
    snapshots: dict[str, dict[int, np.ndarray]] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.mismatches

    def lines(self) -> list[str]:
        out = []
        for t in range(1, len(SCRIPT) + 1):
            low = self.snapshots["low"][t]
            mh = self.snapshots["matlql-high"][t]
            th = self.snapshots["tlql-high"][t]
            out.append(f"t={t} low S1:R={low[S1, R]:+.4f} S2:R={low[S2, R]:+.4f} S2:D={low[S2, D]:+.4f} | "
                       f"MA-TLQL high S1={mh[S1, 0]:+.4f},{mh[S1, 1]:+.4f} S2={mh[S2, 0]:+.4f},{mh[S2, 1]:+.4f} | "
                       f"TLQL high S1={th[S1, 0]:+.4f},{th[S1, 1]:+.4f} S2={th[S2, 0]:+.4f},{th[S2, 1]:+.4f}")
        out.extend(str(m) for m in self.mismatches)
        out.append("golden trace: " + ("PASS" if self.ok else f"FAIL ({len(self.mismatches)} mismatches)"))
        return out


def _key(table: str, s: int, slot: int) -> str:
    name = ACTION_NAMES[slot] if table == "low" else ("RL" if slot == 2 else f"A{slot + 1}")
    return f"{STATE_NAMES[s]},{name}"


def _compare(report: GoldenReport, table: str, t: int, actual: np.ndarray) -> None:
    expected = EXPECTED[table][t]
    for s in range(actual.shape[0]):
        for slot in range(actual.shape[1]):
            want = expected.get((s, slot), 0.0)
            got = float(actual[s, slot])
            if abs(got - want) > TOL:
                report.mismatches.append(Mismatch(t, table, _key(table, s, slot), want, got))


def golden_trace() -> GoldenReport:
    env = ToyAdvisorGrid(discount=0.9)
    cfg = AgentConfig(gamma=0.9, rate=LearningRateSchedule("constant", alpha=0.1), high_update="agreeing")
    advisors = [_Scripted(), _Scripted()]
    matlql = MATLQLAgent(0, env, advisors, cfg)
    tlql = TLQLAgent(0, env, advisors, cfg)
    report = GoldenReport(snapshots={"low": {}, "matlql-high": {}, "tlql-high": {}, "tlql-low": {}})
    rng = np.random.default_rng(0)
    for t, (s, recs, followed) in enumerate(SCRIPT, 1):
        a = recs[followed]
        out = env.step(s, (a,), rng)
        decision = Decision(a, "advisor", followed, recs)
        for agent in (matlql, tlql):
            agent.learn(s, 0, a, out.rewards[0], out.next_state, 0, out.terminal, decision)
        snaps = {
            "low": matlql.low.to_array()[:, 0, :],
            "matlql-high": matlql.high.to_array()[:, 0, :],
            "tlql-high": tlql.high.to_array()[:, 0, :],
            "tlql-low": tlql.low.to_array()[:, 0, :],
        }
        for name, arr in snaps.items():
            report.snapshots[name][t] = arr
        _compare(report, "low", t, snaps["low"])
        _compare(report, "matlql-high", t, snaps["matlql-high"])
        _compare(report, "tlql-high", t, snaps["tlql-high"])
        # both learners share the control update
        for s_, row in enumerate(snaps["tlql-low"]):
            for a_, v in enumerate(row):
                if abs(v - snaps["low"][s_, a_]) > TOL:
                    report.mismatches.append(Mismatch(t, "tlql-low", _key("low", s_, a_),
                                                      float(snaps["low"][s_, a_]), float(v)))
    final_m = report.snapshots["matlql-high"][len(SCRIPT)]
    final_t = report.snapshots["tlql-high"][len(SCRIPT)]
    if not final_m[S1, 0] > final_m[S1, 1]:
        report.mismatches.append(Mismatch(len(SCRIPT), "matlql-high", "S1 ordering A1 > A2",
                                          float(final_m[S1, 1]), float(final_m[S1, 0])))
    if final_t[S1, 0] != final_t[S1, 1]:
        report.mismatches.append(Mismatch(len(SCRIPT), "tlql-high", "S1 tie A1 = A2",
                                          float(final_t[S1, 0]), float(final_t[S1, 1])))
    return report
