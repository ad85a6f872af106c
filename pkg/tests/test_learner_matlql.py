import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from matlql.advisors import AlwaysAction, UniformRandom
from matlql.game_core import ToyAdvisorGrid, coordination_chain, identical_interest_game
from matlql.learner_matlql import (
    AgentConfig,
    Decision,
    MATLQLAgent,
    UndefinedVote,
    choose_branch,
    greedy,
    select_advisor_action,
    update_high_q,
    update_low_q,
    value_of_vote,
    vote_value,
)
from matlql.schedules import (
    ConfigurationError,
    ExplorationPolicy,
    LearningRateSchedule,
    PPRSchedule,
    learning_rate,
    ppr_epsilon,
)
from matlql.tables import QTable, dump_checkpoint, load_checkpoint
from matlql.theory_oracle import nash_q_oracle
from matlql.trainer import Trainer, pure_equilibria, stage_choice, step_and_learn
from oracles import ensemble_choice, q_learning_trace, vote

S1, S2 = 0, 1
R, D = 0, 1
finite = st.floats(-10, 10, allow_nan=False)


def table(S=6, K=1, A=2):
    return QTable(S, K, A)


# -- update rules ----------------------------------------------------------------

def test_high_update_terminal_example():
    h = table()
    h.set(S2, 0, 1, 0.1)
    assert update_high_q(h, S2, 0, 1, -1.0, 3, 0, 0.1, 0.9, True) == pytest.approx(-0.01, abs=1e-15)


def test_high_update_bootstrap_example():
    h = table()
    h.set(S1, 0, 1, 0.009)
    h.set(S2, 0, 1, -0.01)
    assert update_high_q(h, S1, 0, 1, 0.0, S2, 0, 0.1, 0.9, False) == pytest.approx(0.0072, abs=1e-15)


def test_high_update_zero_fixed_point():
    h = table()
    assert update_high_q(h, S1, 0, 0, 0.0, S2, 0, 0.1, 0.9, False) == 0.0


def test_low_update_examples():
    q = table()
    assert update_low_q(q, S2, 0, R, 1.0, 5, 0, 0.1, 0.9, True) == pytest.approx(0.1)
    q.set(S1, 0, R, 0.009)
    assert update_low_q(q, S1, 0, R, 0.0, S2, 0, 0.1, 0.9, False) == pytest.approx(0.0171, abs=1e-15)
    before = q.get(S1, 0, R)
    assert update_low_q(q, S1, 0, R, 5.0, S2, 0, 0.0, 0.9, False) == before


@settings(max_examples=200, deadline=None)
@given(old=finite, r=finite, alpha=st.floats(0, 0.999), nxt=st.lists(finite, min_size=2, max_size=2))
def test_terminal_target_rule(old, r, alpha, nxt):
    for update, slot in ((update_low_q, R), (update_high_q, 1)):
        t = table()
        t.set(S1, 0, slot, old)
        t.data[S2][0] = list(nxt)
        assert update(t, S1, 0, slot, r, S2, 0, alpha, 0.9, True) == old + alpha * (r - old)


@settings(max_examples=100, deadline=None)
@given(low_values=st.lists(finite, min_size=12, max_size=12), r=finite)
def test_high_update_ignores_low_table(low_values, r):
    high_a, high_b = table(), table()
    for t in (high_a, high_b):
        t.set(S2, 0, 0, 0.3)
    low = table()
    update_low_q(low, S1, 0, R, r, S2, 0, 0.1, 0.9, False)
    a = update_high_q(high_a, S1, 0, 0, r, S2, 0, 0.1, 0.9, False)
    low.data = np.array(low_values).reshape(6, 1, 2).tolist()
    b = update_high_q(high_b, S1, 0, 0, r, S2, 0, 0.1, 0.9, False)
    assert a == b


def test_boundedness_under_random_updates():
    rng = np.random.default_rng(0)
    gamma, rmax = 0.9, 1.0
    qmax = rmax / (1 - gamma)
    low, high = QTable(4, 3, 3), QTable(4, 3, 3)
    n = 1_000_000
    ss = rng.integers(4, size=(n, 2))
    ks = rng.integers(3, size=(n, 2))
    aa = rng.integers(3, size=n)
    rs = rng.uniform(-rmax, rmax, size=n)
    alphas = rng.uniform(0, 1, size=n)
    terms = rng.random(n) < 0.1
    for i in range(n):
        f = update_low_q if i % 2 else update_high_q
        tbl = low if i % 2 else high
        f(tbl, int(ss[i, 0]), int(ks[i, 0]), int(aa[i]), float(rs[i]), int(ss[i, 1]), int(ks[i, 1]),
          float(alphas[i]), gamma, bool(terms[i]))
    for tbl in (low, high):
        arr = tbl.to_array()
        assert np.all(np.abs(arr) <= qmax + 1e-6)


# -- value of vote -----------------------------------------------------------------

def test_vote_single_recommender():
    h = table(K=1, A=3)
    h.set(0, 0, 2, 0.3)
    assert value_of_vote(h, 0, 0, [2], 7) == 0.3


def test_vote_two_recommenders():
    assert vote_value([0.5, 0.3], 2) == pytest.approx(0.65)


def test_vote_limit():
    assert abs(vote_value([0.5, 0.3, 0.2], 10 ** 6) - 0.5) <= 1e-6


def test_vote_errors():
    with pytest.raises(UndefinedVote):
        vote_value([], 1)
    with pytest.raises(ValueError):
        vote_value([0.1], 0)


def test_vote_ties_exclude_exactly_one():
    assert vote_value([0.4, 0.4, 0.4], 4) == pytest.approx(0.4 + 0.8 / 4)


def _crowd_table():
    h = QTable(1, 1, 4)
    h.data[0][0] = [0.1, 0.1, 0.1, 0.25]
    return h, (1, 1, 1, 0)


def test_wisdom_of_crowd():
    h, recs = _crowd_table()
    assert value_of_vote(h, 0, 0, [0, 1, 2], 1) == pytest.approx(0.3)
    assert select_advisor_action(h, 0, 0, recs, 1) == (1, 0)


def test_wisdom_of_individual():
    h, recs = _crowd_table()
    assert value_of_vote(h, 0, 0, [0, 1, 2], 100) == pytest.approx(0.102)
    assert select_advisor_action(h, 0, 0, recs, 100) == (0, 3)


@pytest.mark.parametrize("mu", [1, 2, 50, 10 ** 6])
def test_unanimous_advice(mu):
    h = QTable(1, 1, 3)
    h.data[0][0] = [0.2, -0.4, 0.9]
    assert select_advisor_action(h, 0, 0, {0: 1, 1: 1, 2: 1}, mu) == (1, 2)


@settings(max_examples=300, deadline=None)
@given(vals=st.lists(finite, min_size=1, max_size=6), mu=st.integers(1, 1000), data=st.data())
def test_selection_matches_direct_evaluation(vals, mu, data):
    recs = data.draw(st.lists(st.integers(0, 3), min_size=len(vals), max_size=len(vals)))
    h = QTable(1, 1, len(vals))
    h.data[0][0] = list(vals)
    assert select_advisor_action(h, 0, 0, recs, mu) == ensemble_choice(vals, recs, mu)
    for a in set(recs):
        ids = [i for i, x in enumerate(recs) if x == a]
        assert value_of_vote(h, 0, 0, ids, mu) == pytest.approx(vote({i: vals[i] for i in ids}, mu))


@settings(max_examples=200, deadline=None)
@given(v=finite, mu=st.integers(1, 10 ** 6))
def test_single_recommender_identity(v, mu):
    h = QTable(1, 1, 1)
    h.data[0][0] = [v]
    assert value_of_vote(h, 0, 0, [0], mu) == v


@settings(max_examples=200, deadline=None)
@given(vals=st.lists(st.floats(-5, 5), min_size=4, max_size=4), c=st.floats(-5, 5), mu=st.integers(1, 100))
def test_shift_invariance_equal_groups(vals, c, mu):
    recs = (0, 0, 1, 1)
    h = QTable(1, 1, 4)
    h.data[0][0] = list(vals)
    before = select_advisor_action(h, 0, 0, recs, mu)[0]
    h.data[0][0] = [v + c for v in vals]
    # near-ties can flip under floating point; only assert clear winners
    scores = [vote({0: vals[0], 1: vals[1]}, mu), vote({2: vals[2], 3: vals[3]}, mu)]
    assume(abs(scores[0] - scores[1]) > 1e-9)
    assert select_advisor_action(h, 0, 0, recs, mu)[0] == before


def test_shift_can_flip_unequal_groups():
    h = QTable(1, 1, 3)
    h.data[0][0] = [0.2, 0.2, 0.35]
    recs = (0, 0, 1)
    assert select_advisor_action(h, 0, 0, recs, 1)[0] == 0
    h.data[0][0] = [v - 1.0 for v in h.data[0][0]]
    assert select_advisor_action(h, 0, 0, recs, 1)[0] == 1


# -- action selection ----------------------------------------------------------------

def _agent(advisors=(), eps=0.95, eta=0.9, env=None):
    env = env or ToyAdvisorGrid()
    return MATLQLAgent(0, env, advisors, AgentConfig(exploration=ExplorationPolicy(eps, eta)))


def test_eps_prime_one_always_advisor():
    ag = _agent([AlwaysAction(1, 2)])
    rng = np.random.default_rng(0)
    for _ in range(500):
        d = ag.act(0, 0, rng, 1.0)
        assert d.source == "advisor" and d.action == 1


def test_greedy_when_no_exploration():
    ag = _agent(eps=0.0)
    ag.low.set(0, 0, 1, 0.5)
    rng = np.random.default_rng(0)
    assert all(ag.act(0, 0, rng, 0.0).action == 1 for _ in range(200))


def test_branch_arithmetic():
    assert choose_branch(0.05, 1.0, 0.0, 0.1, 0.9) == "random"
    assert choose_branch(0.05, 0.5, 0.1, 0.2, 0.9) == "ensemble"
    assert choose_branch(0.05, 0.95, 0.1, 0.2, 0.9) == "random-advisor"
    assert choose_branch(0.5, 0.0, 0.1, 0.2, 0.9) == "greedy"
    assert choose_branch(0.15, 0.0, 0.3, 0.2, 0.9) == "ensemble"


def test_advisor_branch_without_advisors():
    ag = _agent()
    with pytest.raises(ConfigurationError):
        ag.select_action(0, 0, 0.0, 0.0, 0.5, np.random.default_rng(0))


def test_greedy_tie_break():
    assert greedy([0.0, 0.0, 0.0]) == 0
    assert greedy([0.0, 1.0, 1.0]) == 1


def test_branch_frequencies():
    rng = np.random.default_rng(11)
    n = 100_000
    for _ in range(10):
        eps, eps_p = rng.uniform(0, 1, size=2)
        counts = {"advisor": 0, "random": 0, "greedy": 0}
        u = rng.random(n)
        up = rng.random(n)
        for a, b in zip(u, up):
            br = choose_branch(a, b, eps_p, eps, 0.9)
            counts["advisor" if br in ("ensemble", "random-advisor") else br] += 1
        expect = {"advisor": eps_p, "random": max(eps, eps_p) - eps_p, "greedy": 1 - max(eps, eps_p)}
        for k, p in expect.items():
            sd = math.sqrt(n * p * (1 - p))
            assert abs(counts[k] - n * p) <= 3 * sd + 1e-9


# -- schedules ------------------------------------------------------------------

@pytest.mark.parametrize("episode,expected", [(0, 1.0), (25, 0.75), (100, 0.0), (250, 0.0)])
def test_ppr(episode, expected):
    assert ppr_epsilon(PPRSchedule(1.0, 100), episode) == pytest.approx(expected)


def test_ppr_scaled_initial():
    assert PPRSchedule(0.6, 10)(5) == pytest.approx(0.3)


@pytest.mark.parametrize("family,count,expected", [
    ("polynomial", 1, 1.0), ("linear", 1, 1.0), ("linear", 4, 0.25), ("constant", 9, 0.1),
])
def test_learning_rate_values(family, count, expected):
    assert learning_rate(LearningRateSchedule(family, 0.1, 0.77), count) == pytest.approx(expected)


def test_polynomial_example():
    assert LearningRateSchedule("polynomial", omega=0.75)(16) == pytest.approx(0.125)


@pytest.mark.parametrize("omega", [0.5, 1.0, 0.3, 1.2])
def test_polynomial_omega_range(omega):
    with pytest.raises(ConfigurationError):
        LearningRateSchedule("polynomial", omega=omega)


def test_rate_rejects_zero_count():
    with pytest.raises(ValueError):
        LearningRateSchedule("linear")(0)


@settings(max_examples=100)
@given(count=st.integers(2, 10 ** 9), omega=st.floats(0.51, 0.99))
def test_rates_in_unit_interval(count, omega):
    for sched in (LearningRateSchedule("polynomial", omega=omega), LearningRateSchedule("linear")):
        assert 0 <= sched(count) < 1


# -- stepping ------------------------------------------------------------------

def test_single_agent_reduces_to_q_learning():
    env = ToyAdvisorGrid()
    ag = MATLQLAgent(0, env, (), AgentConfig(gamma=0.9, exploration=ExplorationPolicy(0.6)))
    log = []
    trainer = Trainer(env, [ag], np.random.default_rng(4),
                      on_step=lambda tr, s, ja, out: log.append((s, ja[0], out.rewards[0], out.next_state, out.terminal)))
    for _ in range(300):
        step_and_learn(trainer, 0.0)
    ref = q_learning_trace(log, 6, 2, 0.1, 0.9)
    np.testing.assert_array_equal(ag.low.to_array()[:, 0, :], ref)


def test_high_updates_only_when_advisor_followed():
    env = ToyAdvisorGrid()
    ag = MATLQLAgent(0, env, [AlwaysAction(0, 2), UniformRandom(2)], AgentConfig())
    before = ag.high.to_array()
    ag.learn(S1, 0, R, 0.0, S2, 0, False, Decision(R, "greedy"))
    np.testing.assert_array_equal(ag.high.to_array(), before)
    ag.learn(S2, 0, R, 1.0, 5, 0, True, Decision(R, "advisor", 1, (0, 0)))
    assert ag.high.get(S2, 0, 1) == pytest.approx(0.1) and ag.high.get(S2, 0, 0) == 0.0


def test_agreeing_mode_updates_all_recommenders():
    env = ToyAdvisorGrid()
    ag = MATLQLAgent(0, env, [AlwaysAction(0, 2)] * 3, AgentConfig(high_update="agreeing"))
    ag.learn(S2, 0, R, 1.0, 5, 0, True, Decision(R, "advisor", 0, (0, 1, 0)))
    assert ag.high.data[S2][0] == pytest.approx([0.1, 0.0, 0.1])


def test_unknown_high_update_mode():
    with pytest.raises(ConfigurationError):
        MATLQLAgent(0, ToyAdvisorGrid(), (), AgentConfig(high_update="all"))


def test_first_visit_rate_is_one():
    env = ToyAdvisorGrid()
    ag = MATLQLAgent(0, env, (), AgentConfig(rate=LearningRateSchedule("linear")))
    ag.learn(S2, 0, R, 1.0, 5, 0, True, Decision(R, "greedy"))
    assert ag.low.get(S2, 0, R) == 1.0
    ag.learn(S2, 0, R, 0.0, 5, 0, True, Decision(R, "greedy"))
    assert ag.low.get(S2, 0, R) == 0.5


def test_mu_counts_visits_before_vote():
    env = ToyAdvisorGrid()
    ag = MATLQLAgent(0, env, [AlwaysAction(0, 2), AlwaysAction(1, 2)], AgentConfig())
    trainer = Trainer(env, [ag], np.random.default_rng(0))
    trainer.run_episode(1.0)
    assert ag.mu[S1] >= 1


def test_matrix_game_converges_to_nash_q():
    env = identical_interest_game([[1.0, 0.0], [0.0, 0.0]], discount=0.5)
    oracle = nash_q_oracle(env)
    cfg = AgentConfig(gamma=0.5, rate=LearningRateSchedule("polynomial", omega=0.77), exploration=ExplorationPolicy(0.5))
    agents = [MATLQLAgent(j, env, (), cfg) for j in range(2)]
    Trainer(env, agents, np.random.default_rng(0), joint_mode="copies").run_steps(100_000)
    for a in agents:
        err = np.abs(a.low.to_array() - oracle.low_q_view(a.index, env.action_sizes)).max()
        assert err <= 1e-2


def test_observed_mode_uses_actual_next_actions():
    env = coordination_chain()
    seen = []

    class Spy(MATLQLAgent):
        def learn(self, s, k, a, r, s_next, k_next, terminal, decision):
            seen.append((self.index, k_next))
            super().learn(s, k, a, r, s_next, k_next, terminal, decision)

    agents = [Spy(j, env, (), AgentConfig(exploration=ExplorationPolicy(1.0))) for j in range(2)]
    joint = []
    tr = Trainer(env, agents, np.random.default_rng(0), on_step=lambda t, s, ja, out: joint.append(ja))
    tr.run_episode(0.0, max_steps=20)
    # the update for step t is keyed on the others' action at step t+1
    for t in range(19):
        for j in range(2):
            assert seen[2 * t + j] == (j, joint[t + 1][1 - j])


def test_pure_equilibria_and_stage_choice():
    coord = np.array([[2.0, 0.0], [0.0, 1.0]])
    eqs = pure_equilibria([coord, coord])
    assert eqs == [(0, 0), (1, 1)]
    assert stage_choice([coord, coord], 0) == (0, 0)
    pennies = np.array([[1.0, -1.0], [-1.0, 1.0]])
    assert pure_equilibria([pennies, -pennies]) == []


def test_copies_mode_matches_numpy_equilibria():
    env = coordination_chain()
    rng = np.random.default_rng(0)
    agents = [MATLQLAgent(j, env, (), AgentConfig()) for j in range(2)]
    tr = Trainer(env, agents, rng, joint_mode="copies")
    for _ in range(50):
        for a in agents:
            a.low.data = rng.integers(-2, 3, size=a.low.shape).astype(float).tolist()
        for s in range(3):
            for j in range(2):
                pay = [np.zeros((2, 2)), np.zeros((2, 2))]
                for i, a in enumerate(agents):
                    for ja in [(0, 0), (0, 1), (1, 0), (1, 1)]:
                        pay[i][ja] = a.low.data[s][ja[1 - i]][ja[i]]
                expected = stage_choice(pay, j)
                got = tr._copies_joint(s, j)
                assert got == expected


@settings(max_examples=100)
@given(st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=8, max_size=8))
def test_checkpoint_round_trip_bit_exact(values):
    t = QTable.from_array(np.array(values).reshape(2, 2, 2))
    text = dump_checkpoint({"LOW": t, "HIGH": t})
    back = load_checkpoint(text)
    assert np.array_equal(back["LOW"], t.to_array())
    lines = text.splitlines()
    assert lines == sorted(lines, key=lambda l: (l.split()[0], int(l.split()[1]), int(l.split()[2]), int(l.split()[3])))
