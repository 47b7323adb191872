"""miakit: mission impact assessment toolkit.

Two halves that meet in the middle: dependency discovery learns an
infrastructure model from network flow records (direct channels, lagged
cross-correlation for indirect dependencies, retry-chain misconfigurations),
and a stochastic discrete-event simulation quantifies what a cyber attack
on that infrastructure does to a mission workflow, next to a static
propagation baseline.
"""

__version__ = "0.1.0"
