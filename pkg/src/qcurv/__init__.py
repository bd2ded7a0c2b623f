"""Numerical laboratory for the bubble calculus of the higher-order
Q-curvature problem on the round sphere and its antipodal quotient."""

__version__ = "0.1.0"
