import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from matlql.advisors import AlwaysAction
from matlql.game_core import ToyAdvisorGrid, identical_interest_game
from matlql.learner_matlac import (
    ActorCriticConfig,
    MATLACAgent,
    actor_update,
    advantage,
    critic_target,
    softmax,
)
from matlql.learner_matlql import Decision
from matlql.schedules import ExplorationPolicy, LearningRateSchedule
from matlql.trainer import Trainer
from oracles import TOY_TABLE, finite_difference, softmax_ref

S1, S2 = 0, 1
R, D = 0, 1
logit_lists = st.lists(st.floats(-20, 20), min_size=2, max_size=6)


@pytest.mark.parametrize("level,slot", [("low", None), ("high", 0)])
def test_terminal_critic_target(level, slot):
    assert critic_target(level, 1.0, [5.0, 7.0], slot, 0.9, True) == 1.0


def test_critic_target_examples():
    assert critic_target("low", 0.5, [0.0, 0.0], None, 0.9, False) == 0.5
    assert critic_target("high", 0.0, [0.0, 2.0], 1, 0.9, False) == pytest.approx(1.8)
    with pytest.raises(ValueError):
        critic_target("middle", 0.0, [0.0], None, 0.9, False)


def test_advantage_examples():
    assert advantage(4.0, np.array([0.5, 0.5]), [1.0, 3.0]) == 2.0
    assert advantage(2.0, np.array([0.5, 0.5]), [1.0, 3.0]) == 0.0
    assert advantage(3.0, np.array([0.0, 1.0]), [1.0, 3.0]) == 0.0


def test_actor_update_examples():
    logits = np.zeros(2)
    actor_update(logits, 0, 1.0, 0.1)
    np.testing.assert_allclose(logits, [0.05, -0.05], atol=1e-15)
    before = np.array([0.3, -1.2, 2.0])
    after = actor_update(before.copy(), 1, 0.0, 0.1)
    np.testing.assert_array_equal(after, before)
    with pytest.raises(ValueError):
        actor_update(np.zeros(2), 0, 1.0, 0.0)


def test_positive_advantage_is_monotone():
    logits = np.zeros(3)
    probs = []
    for _ in range(100):
        actor_update(logits, 0, 1.0, 0.5)
        probs.append(softmax(logits)[0])
    assert all(b > a for a, b in zip(probs, probs[1:]))
    assert probs[-1] > 0.95


@settings(max_examples=200)
@given(z=logit_lists)
def test_softmax_normalized(z):
    p = softmax(np.array(z))
    assert abs(p.sum() - 1.0) <= 1e-12
    np.testing.assert_allclose(p, softmax_ref(z), rtol=1e-12, atol=1e-300)


@settings(max_examples=200)
@given(z=st.lists(st.floats(-3, 3), min_size=2, max_size=5), adv=st.floats(-2, 2), data=st.data())
def test_update_matches_finite_difference(z, adv, data):
    x = np.array(z)
    chosen = data.draw(st.integers(0, len(z) - 1))
    rate = 0.1
    delta = actor_update(x.copy(), chosen, adv, rate) - x
    numeric = rate * finite_difference(lambda v: adv * np.log(softmax_ref(v)[chosen]), x)
    np.testing.assert_allclose(delta, numeric, rtol=1e-6, atol=1e-8)


@settings(max_examples=200)
@given(z=st.lists(st.floats(-5, 5), min_size=2, max_size=5), data=st.data())
def test_advantage_is_centred(z, data):
    pi = softmax(np.array(z))
    q = data.draw(st.lists(st.floats(-5, 5), min_size=len(z), max_size=len(z)))
    total = sum(pi[a] * advantage(q[a], pi, q) for a in range(len(z)))
    assert abs(total) <= 1e-9


def test_actors_ignore_others_actions():
    from matlql.game_core import coordination_chain
    env = coordination_chain()
    ag = MATLACAgent(0, env, [AlwaysAction(1, 2), AlwaysAction(0, 2)])
    ag.actor_low[:] = np.random.default_rng(0).normal(size=ag.actor_low.shape)
    assert ag.actor_low.shape == (env.num_states, 2)
    for explore in (True, False):
        seen = set()
        for k in range(2):
            rng = np.random.default_rng(42)
            seen.add(tuple((d.action, d.source, d.advisor) for d in
                           (ag.act(0, k, rng, 0.5, explore, last_joint=(k, 1 - k)) for _ in range(30))))
        assert len(seen) == 1


def test_golden_micro_trace():
    env = ToyAdvisorGrid()
    cfg = ActorCriticConfig(gamma=0.9, rate=LearningRateSchedule("constant", alpha=0.1), actor_rate=0.01)
    ag = MATLACAgent(0, env, [AlwaysAction(0, 2), AlwaysAction(0, 2)], cfg)
    # step 1: S1 -R-> S2, r=0. zero critics so y=0, A=0
    ag.learn(S1, 0, R, 0.0, S2, 0, False, Decision(R, "greedy"))
    np.testing.assert_array_equal(ag.actor_low, 0.0)
    # step 2: S2 -R-> G, r=1, advisor 1 followed
    ag.learn(S2, 0, R, 1.0, 5, 0, True, Decision(R, "advisor", 1, (0, 0)))
    a2 = 1.0 - 0.5 * 0.1
    assert ag.low.get(S2, 0, R) == pytest.approx(0.1, abs=1e-12)
    np.testing.assert_allclose(ag.actor_low[S2], [0.005 * a2, -0.005 * a2], atol=1e-12)
    np.testing.assert_allclose(ag.actor_high[S2], [-0.005 * a2, 0.005 * a2], atol=1e-12)
    # step 3: S1 -R-> S2, r=0 bootstraps through Q(S2,R)=0.1
    ag.learn(S1, 0, R, 0.0, S2, 0, False, Decision(R, "greedy"))
    y = 0.9 * 0.1
    q = 0.1 * y
    a3 = y - 0.5 * q
    assert ag.low.get(S1, 0, R) == pytest.approx(q, abs=1e-12)
    np.testing.assert_allclose(ag.actor_low[S1], [0.005 * a3, -0.005 * a3], atol=1e-12)
    np.testing.assert_array_equal(ag.actor_high[S1], 0.0)


def test_zero_advisors_is_plain_actor_critic():
    env = ToyAdvisorGrid()
    cfg = ActorCriticConfig(gamma=0.9, actor_rate=0.05, exploration=ExplorationPolicy(0.3))
    ag = MATLACAgent(0, env, (), cfg)
    log = []
    tr = Trainer(env, [ag], np.random.default_rng(1),
                 on_step=lambda t, s, ja, out: log.append((s, ja[0], out.rewards[0], out.next_state, out.terminal)))
    for _ in range(200):
        tr.run_episode(0.0)
    q = np.zeros((6, 2))
    theta = np.zeros((6, 2))
    for s, a, r, s2, term in log:
        y = r if term else r + 0.9 * q[s2].max()
        q[s, a] += 0.1 * (y - q[s, a])
        pi = softmax_ref(theta[s])
        adv = y - pi @ q[s]
        g = -pi
        g[a] += 1
        theta[s] += 0.05 * adv * g
    np.testing.assert_allclose(ag.low.to_array()[:, 0, :], q, atol=1e-12)
    np.testing.assert_allclose(ag.actor_low, theta, atol=1e-12)
    np.testing.assert_array_equal(ag.high.to_array(), 0.0)


def test_toy_grid_actor_learns_right():
    env = ToyAdvisorGrid()
    ag = MATLACAgent(0, env, (), ActorCriticConfig(actor_rate=0.1, exploration=ExplorationPolicy(0.2)))
    tr = Trainer(env, [ag], np.random.default_rng(0))
    for _ in range(2000):
        tr.run_episode(0.0)
    for s in (S1, S2):
        assert np.argmax(ag.actor_low[s]) == R
        assert TOY_TABLE[(s, R)][1] >= TOY_TABLE[(s, D)][1]


def test_matrix_game_greedy_policy_is_optimal():
    from matlql.theory_oracle import nash_q_oracle
    env = identical_interest_game([[1.0, 0.0], [0.0, 0.5]], discount=0.9, horizon=10)
    oracle = nash_q_oracle(env)
    cfg = ActorCriticConfig(actor_rate=0.05, exploration=ExplorationPolicy(0.2))
    agents = [MATLACAgent(j, env, (), cfg) for j in range(2)]
    tr = Trainer(env, agents, np.random.default_rng(3))
    tr.run_steps(100_000)
    greedy_joint = tuple(int(np.argmax(a.actor_low[0])) for a in agents)
    assert greedy_joint == oracle.stage_policy[0]
    ep = tr.run_episode(0.0, learn=False)
    assert ep.returns[0] == pytest.approx(10.0)


def test_checkpoint_sections():
    ag = MATLACAgent(0, ToyAdvisorGrid(), [AlwaysAction(0, 2)])
    assert set(ag.checkpoint_sections()) == {"ACTOR_LOW", "ACTOR_HIGH", "CRITIC_LOW", "CRITIC_HIGH"}
