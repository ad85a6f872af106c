"""Two learners converging to the Nash Q-values of a small stochastic game.

Both agents run the two-level learner without advisors on a three-state
coordination game. Exact Q* comes from value iteration on the joint-action
Bellman operator. We track the sup-norm error of each agent's low table
and compare the polynomial learning rate (count^-0.77) with the linear one
(1/count).
"""
import numpy as np

from matlql.game_core import coordination_chain
from matlql.learner_matlql import AgentConfig, MATLQLAgent
from matlql.schedules import ExplorationPolicy, LearningRateSchedule
from matlql.theory_oracle import ConvergenceMonitor, nash_q_oracle
from matlql.trainer import Trainer

env = coordination_chain()
oracle = nash_q_oracle(env)
print("state values v*:", np.round(oracle.v[0], 4))
print("equilibrium joint action per state:", oracle.stage_policy)
print()

for family in ("polynomial", "linear"):
    steps = []
    for seed in range(1, 11):
        cfg = AgentConfig(gamma=env.discount, rate=LearningRateSchedule(family, omega=0.77),
                          exploration=ExplorationPolicy(0.5))
        agents = [MATLQLAgent(j, env, (), cfg) for j in range(2)]
        mon = ConvergenceMonitor(agents, oracle, env, eps=0.05)
        tr = Trainer(env, agents, np.random.default_rng(seed), on_step=mon, joint_mode="copies")
        while tr.total_steps < 200_000 and not mon.confirmed:
            tr.run_episode(0.0)
        steps.append(mon.step if mon.step is not None else float("inf"))
    print(f"{family:>10} rate: median steps to stay within 0.05 of Q* = {np.median(steps):g}")
