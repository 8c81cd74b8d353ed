"""Averaging and maximal operators, the multipliers ``m~_j`` and their kernels."""

from .averaging import *  # noqa: F401,F403
from .averaging import __all__ as _avg
from .kernels import *  # noqa: F401,F403
from .kernels import __all__ as _ker
from .multipliers import *  # noqa: F401,F403
from .multipliers import __all__ as _mul

__all__ = list(_avg) + list(_mul) + list(_ker)
