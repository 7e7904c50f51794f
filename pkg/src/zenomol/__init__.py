"""Collision-induced Zeno dynamics in a two-ladder molecule.

Submodules: ``model`` (levels, operators, scales), ``stochastic`` (collision
times and unitaries), ``trajectory`` (Monte Carlo), ``lindblad`` (master
equations), ``analytic`` (closed forms) and ``cli`` (experiment runner).
"""

__version__ = "0.1.0"

from .model import Case, Convention, ModelParams, ParameterError, build_level_scheme  # noqa: E402
from .series import SeriesResult  # noqa: E402

__all__ = ["Case", "Convention", "ModelParams", "ParameterError", "SeriesResult", "build_level_scheme", "__version__"]
