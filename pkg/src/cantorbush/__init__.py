"""Numerical companion for maximal estimates over Lambda(p) Cantor sets.

Submodules
----------
cantor       exact digit trees and their measures
lambdap      Sidon / Singer sets, additive energy, Lambda(p) ratios
spectral     grid functions, smooth cutoffs, Fourier transforms of the measures
operators    averages, maximal functions, multipliers and kernels
decoupling   weights, frames, Cantor-bush geometry and decoupling ratios
geometry     box counts of unions of scaled Cantor copies
cli          the ``cantorbush`` command line
"""

__version__ = "0.1.0"

from . import cantor, decoupling, geometry, lambdap, operators, spectral  # noqa: F401
from .cantor import CantorParams, CantorTree, build_self_similar  # noqa: F401
from .lambdap import DigitSet, singer_difference_set  # noqa: F401
