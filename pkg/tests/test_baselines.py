import numpy as np
import pytest

from matlql.advisors import AlwaysAction, NoisyAdvisor, UniformRandom
from matlql.baselines import (
    AblationAgent,
    AblationFlags,
    IndependentQAgent,
    TLQLAgent,
    WeightedAdvisorAgent,
    build_ablation_learner,
    independent_q_update,
    tlql_sync,
    weighted_random_advisor_action,
)
from matlql.game_core import ToyAdvisorGrid, coordination_chain
from matlql.harness.golden import EXPECTED, golden_trace
from matlql.learner_matlql import AgentConfig, Decision, MATLQLAgent, UndefinedVote, update_low_q
from matlql.schedules import ConfigurationError, ExplorationPolicy
from matlql.tables import QTable
from matlql.trainer import Trainer
from oracles import binomial_band

S1, S2 = 0, 1
R, D = 0, 1


# -- tlql sync ------------------------------------------------------------------

def test_sync_toy_trace_examples():
    rep = golden_trace()
    assert rep.ok, rep.lines()
    high = rep.snapshots["tlql-high"]
    assert high[4][S2, 1] == pytest.approx(-0.1, abs=1e-12)
    assert high[5][S1, 0] == high[5][S1, 1] == pytest.approx(0.0171, abs=1e-12)
    assert EXPECTED["tlql-high"][5][(S1, 0)] == EXPECTED["tlql-high"][5][(S1, 1)]


def test_sync_on_zero_tables_is_identity():
    low, high = QTable(3, 1, 2), QTable(3, 1, 3)
    tlql_sync(low, high, 1, 0, 0, 0, (0, 1))
    assert np.all(high.to_array() == 0)


def test_sync_rules():
    low, high = QTable(1, 1, 2), QTable(1, 1, 4)
    low.data[0][0] = [0.2, 0.7]
    tlql_sync(low, high, 0, 0, 0, 1, (0, 0, 1))
    assert high.data[0][0] == [0.2, 0.2, 0.0, 0.7]
    tlql_sync(low, high, 0, 0, 1, None)
    assert high.data[0][0] == [0.2, 0.2, 0.0, 0.7]


def test_sync_invariant_over_training():
    env = ToyAdvisorGrid()
    ag = TLQLAgent(0, env, [AlwaysAction(0, 2), UniformRandom(2)],
                   AgentConfig(exploration=ExplorationPolicy(0.5)))
    bad = []

    def check(tr, s, ja, out):
        if ag.high.data[s][0][-1] != max(ag.low.data[s][0]):
            bad.append(s)

    tr = Trainer(env, [ag], np.random.default_rng(0), on_step=check)
    steps = 0
    ep = 0
    while steps < 100_000:
        steps += tr.run_episode(0.6 if ep % 2 else 0.2).steps
        ep += 1
    assert not bad


# -- independent q ----------------------------------------------------------------

def test_independent_q_examples():
    q = np.zeros((2, 2))
    assert independent_q_update(q, 0, 1, 1.0, 1, 0.1, 0.9, True) == pytest.approx(0.1)
    q[1] = [3.0, 4.0]
    assert independent_q_update(q, 0, 0, -2.5, 1, 1.0, 0.0, False) == -2.5


def test_independent_q_matches_low_update():
    rng = np.random.default_rng(0)
    arr = np.zeros((5, 3))
    tbl = QTable(5, 1, 3)
    for _ in range(1000):
        s, s2, a = int(rng.integers(5)), int(rng.integers(5)), int(rng.integers(3))
        r, alpha, term = float(rng.normal()), float(rng.random()), bool(rng.random() < 0.2)
        x = independent_q_update(arr, s, a, r, s2, alpha, 0.9, term)
        y = update_low_q(tbl, s, 0, a, r, s2, 0, alpha, 0.9, term)
        assert x == y
    np.testing.assert_array_equal(arr, tbl.to_array()[:, 0, :])


# -- weighted random ----------------------------------------------------------------

def test_weighted_random_frequency():
    rng = np.random.default_rng(0)
    n = 100_000
    hits = sum(weighted_random_advisor_action({0: 1, 1: 1, 2: 0, 3: 1}, rng) == 1 for _ in range(n))
    lo, hi = binomial_band(n, 0.75)
    assert lo <= hits <= hi


def test_weighted_random_edge_cases():
    rng = np.random.default_rng(0)
    assert {weighted_random_advisor_action([2, 2, 2], rng) for _ in range(100)} == {2}
    with pytest.raises(UndefinedVote):
        weighted_random_advisor_action({}, rng)


def test_weighted_agent_defers_to_advisors():
    env = ToyAdvisorGrid()
    ag = WeightedAdvisorAgent(0, env, [AlwaysAction(1, 2)] * 3)
    rng = np.random.default_rng(0)
    assert all(ag.act(0, 0, rng, 1.0).action == 1 for _ in range(50))
    with pytest.raises(ConfigurationError):
        IndependentQAgent(0, env).act(0, 0, rng, 1.0)


# -- ablations ------------------------------------------------------------------

@pytest.mark.parametrize("name,flags", [
    ("tlql", (False, False, False)),
    ("tlql+JA", (True, False, False)),
    ("TLQL+em+ae", (False, True, True)),
    ("tlql+JA+EM+AE", (True, True, True)),
])
def test_flag_parsing(name, flags):
    f = AblationFlags.parse(name)
    assert (f.joint_action, f.ensemble, f.advisor_eval) == flags


@pytest.mark.parametrize("name", ["matlql", "tlql+XX"])
def test_flag_parsing_errors(name):
    with pytest.raises(ConfigurationError):
        AblationFlags.parse(name)


def _advisors(n_actions=2):
    return [NoisyAdvisor(AlwaysAction(0, n_actions), 0.8, n_actions), UniformRandom(n_actions), AlwaysAction(1, n_actions)]


def _trace(make, env, steps=1000, seed=5):
    agents = [make(j) for j in range(env.num_agents)]
    log = []
    tr = Trainer(env, agents, np.random.default_rng(seed), on_step=lambda t, s, ja, out: log.append((s, ja)))
    ep = 0
    while len(log) < steps:
        tr.run_episode(max(0.0, 0.8 - 0.01 * ep), max_steps=50)
        ep += 1
    return log[:steps], [a.arrays() for a in agents]


@pytest.mark.parametrize("env", [ToyAdvisorGrid(), coordination_chain()], ids=["toy", "chain"])
def test_all_flags_on_is_matlql(env):
    cfg = AgentConfig(exploration=ExplorationPolicy(0.3))
    a_log, a_tab = _trace(lambda j: MATLQLAgent(j, env, _advisors(), cfg), env)
    b_log, b_tab = _trace(lambda j: build_ablation_learner(AblationFlags(), j, env, _advisors(), cfg), env)
    assert a_log == b_log
    for x, y in zip(a_tab, b_tab):
        for key in x:
            np.testing.assert_array_equal(x[key], y[key])


@pytest.mark.parametrize("env", [ToyAdvisorGrid(), coordination_chain()], ids=["toy", "chain"])
def test_all_flags_off_is_tlql(env):
    cfg = AgentConfig(exploration=ExplorationPolicy(0.3))
    a_log, a_tab = _trace(lambda j: TLQLAgent(j, env, _advisors(), cfg), env)
    b_log, b_tab = _trace(lambda j: AblationAgent(j, env, _advisors(), cfg, AblationFlags(False, False, False)), env)
    assert a_log == b_log
    for x, y in zip(a_tab, b_tab):
        np.testing.assert_array_equal(x["LOW"], y["LOW"])
        np.testing.assert_array_equal(x["HIGH"], y["HIGH"])


def test_joint_flag_is_inert_for_a_single_agent():
    env = ToyAdvisorGrid()
    cfg = AgentConfig(exploration=ExplorationPolicy(0.3))
    a = _trace(lambda j: TLQLAgent(j, env, _advisors(), cfg), env)
    b = _trace(lambda j: AblationAgent(j, env, _advisors(), cfg, AblationFlags.parse("tlql+JA")), env)
    assert a[0] == b[0]


def test_ensemble_flag_is_inert_with_one_advisor():
    env = coordination_chain()
    cfg = AgentConfig(exploration=ExplorationPolicy(0.3))
    one = lambda: [UniformRandom(2)]
    a = _trace(lambda j: AblationAgent(j, env, one(), cfg, AblationFlags.parse("tlql+JA")), env)
    b = _trace(lambda j: AblationAgent(j, env, one(), cfg, AblationFlags.parse("tlql+JA+EM")), env)
    assert a[0] == b[0]


def test_joint_flag_changes_table_keys():
    env = coordination_chain()
    off = AblationAgent(0, env, _advisors(), flags=AblationFlags.parse("tlql"))
    on = AblationAgent(0, env, _advisors(), flags=AblationFlags.parse("tlql+JA"))
    assert off.low.shape[1] == 1 and on.low.shape[1] == 2
    assert off.high.shape[2] == 4 and AblationAgent(0, env, _advisors(), flags=AblationFlags.parse("tlql+AE")).high.shape[2] == 3


def test_evaluation_only_ablation_decouples_high_from_low():
    env = ToyAdvisorGrid()
    flags = AblationFlags.parse("tlql+AE")
    a = AblationAgent(0, env, _advisors(), flags=flags)
    b = AblationAgent(0, env, _advisors(), flags=flags)
    rng = np.random.default_rng(0)
    for _ in range(1000):
        s = int(rng.integers(2))
        act = int(rng.integers(2))
        nxt, r, term = env._table[(s, act)]
        recs = tuple(int(x) for x in rng.integers(2, size=3))
        ad = int(rng.integers(3))
        d = Decision(recs[ad], "advisor", ad, recs) if rng.random() < 0.5 else Decision(act, "greedy")
        act = d.action
        nxt, r, term = env._table[(s, act)]
        for ag in (a, b):
            ag.learn(s, 0, act, r, nxt, 0, term, d)
        b.low.data = rng.normal(size=b.low.shape).tolist()
    np.testing.assert_array_equal(a.high.to_array(), b.high.to_array())
    assert np.any(a.high.to_array() != 0)


def test_sync_ablation_rejects_high_update_mode():
    cfg = AgentConfig(high_update="agreeing")
    AblationAgent(0, ToyAdvisorGrid(), _advisors(), cfg, AblationFlags())
    with pytest.raises(ConfigurationError):
        AblationAgent(0, ToyAdvisorGrid(), _advisors(), cfg, AblationFlags(False, False, False))
