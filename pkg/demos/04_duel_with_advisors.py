"""Learning a grid duel with one useful and one useless advisor.

The learner's opponent moves at random. One advisor plays a noisy version
of the one-step-optimal move, the other picks uniformly at random. We train
the two-level learner, plain independent Q-learning and vanilla two-level
Q-learning for 500 episodes on a handful of seeds, then report the training
return, the frozen execution win rate, and how often the learner listened
to each advisor near the end of training.
"""
import os

import numpy as np

from matlql.harness.config import load_config
from matlql.harness.outputs import listening_fractions
from matlql.harness.runner import run_experiment

cfg = load_config(os.path.join(os.path.dirname(__file__), "configs", "duel.cfg"))
result = run_experiment(cfg)

print("algorithm       train return   execution win rate")
for name, s in result.summaries.items():
    tr = np.mean(list(s.seed_train_return.values()))
    win = np.mean(list(s.seed_exec_win.values()))
    print(f"{name:<15} {tr:12.3f}   {win:18.3f}")
print()
for line in result.report_lines():
    print(line)
print()
fr = listening_fractions(result.records["matlql"], first_episode=450)
print("share of advisor consultations, episodes 450-499 (random, noisy-optimal):")
for seed, (rand, good) in fr.items():
    if rand is None:
        print(f"  seed {seed}: no consultations")
    else:
        print(f"  seed {seed}: {rand:.2f}  {good:.2f}")
