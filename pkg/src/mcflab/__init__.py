"""Mean curvature flow of mean-convex sets through elliptic regularization.

The package solves the translating-graph Dirichlet problem on structured
grids, turns its solutions into arrival-time functions, and evaluates the
curvature diagnostics, singularity classification and boundary-motion
experiments built on top of them.
"""

__version__ = "0.1.0"
