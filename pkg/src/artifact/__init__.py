"""Byzantine-robust personalized federated learning simulator.

Robust aggregation, attack models, interpolated personalized gradient
descent, mean-estimation experiments and the associated bound evaluators.
"""

__version__ = "0.1.0"
