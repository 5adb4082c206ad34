"""Exact solution of integer quadratic programs with linear equalities by
convex reformulation: an SDP relaxation, a bundle method for its partial
Lagrangian dual, and branch-and-bound on the reformulated concave MIQP."""

__version__ = "0.1.0"
