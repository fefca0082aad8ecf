"""Analytical models of heterogeneous edge NN accelerators.

Pipeline: model graph -> per-unit profiles -> cluster assignment -> two-phase
mapping -> event-driven simulation on a platform.
"""

__version__ = "0.1.0"
