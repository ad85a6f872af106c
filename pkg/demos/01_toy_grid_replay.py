"""Why evaluating advisors beats copying values into them.

A single agent on the six-cell toy grid is advised by A1 (always right) and
A2 (right, except once when it says down and walks the agent into a pit).
We replay five scripted steps through the two-level learner and through
vanilla two-level Q-learning and print the advisor ratings at S1 after
every step.

With synchronization, S1's rating of A2 is overwritten by the low table,
so the one bad recommendation leaves no trace at S1: both advisors end up
tied. The evaluation update bootstraps from A2's own rating at the next
state, so the mistake propagates back and A1 ends up ahead.
"""
from matlql.harness.golden import golden_trace

S1 = 0

report = golden_trace()
print("step  two-level (A1, A2)      synchronized (A1, A2)")
for t in range(1, 6):
    ev = report.snapshots["matlql-high"][t][S1]
    sy = report.snapshots["tlql-high"][t][S1]
    print(f"{t:>4}  {ev[0]:+.4f}  {ev[1]:+.4f}      {sy[0]:+.4f}  {sy[1]:+.4f}")
print()
print("hand-worked tables reproduced:", "yes" if report.ok else "NO")
