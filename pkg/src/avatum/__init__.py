"""Avascular tumor growth toolkit.

Two simulators of the same minimal tumor model — a stochastic lattice
cell simulator and its mean-field PDE counterpart — together with the
reduced radially symmetric model and the boundary-mode linear-stability
analytics that predict both simulators' morphology.
"""

__version__ = "0.1.0"
