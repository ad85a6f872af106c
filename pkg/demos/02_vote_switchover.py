"""Wisdom of the crowd turning into wisdom of the individual.

Three advisors recommend action 1 and are each rated 0.1. A fourth advisor
recommends action 0 and is rated 0.25. The vote for an action is its best
rating plus the remaining ratings divided by mu, the number of visits to
the state. Early on the crowd wins; as the state becomes familiar the
single stronger advisor takes over.
"""
from matlql.learner_matlql import select_advisor_action, value_of_vote
from matlql.tables import QTable

high = QTable(1, 1, 4)
high.data[0][0] = [0.1, 0.1, 0.1, 0.25]
recs = (1, 1, 1, 0)

print("  mu  vote(a1)  vote(a0)  chosen action (advisor)")
for mu in (1, 2, 3, 5, 10, 100):
    crowd = value_of_vote(high, 0, 0, [0, 1, 2], mu)
    solo = value_of_vote(high, 0, 0, [3], mu)
    action, advisor = select_advisor_action(high, 0, 0, recs, mu)
    print(f"{mu:>4}  {crowd:8.4f}  {solo:8.4f}  a{action} (advisor {advisor})")
