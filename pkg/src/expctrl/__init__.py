"""Box-constrained optimal control of an exponential semilinear elliptic
equation with point sources, plus a battery of certified inequalities."""

__version__ = "0.1.0"
