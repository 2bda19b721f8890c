"""Average number of common zeros of Laplace eigenfunctions on homogeneous model spaces.

Monte Carlo over random subspaces of an eigenspace, checked against the
closed forms derived from the spherical Crofton formula.
"""

__version__ = "0.1.0"
