"""Velocity-free integral sliding-surface super-twisting control of hydraulic actuators.

Gain synthesis by LMI pole-region placement, a nonlinear cylinder model,
closed-loop simulation against a variable-gain super-twisting baseline,
and numerical verification tools.
"""

__version__ = "0.1.0"
