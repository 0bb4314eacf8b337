"""Numerical toolkit for local rigidity of nilpotent toral actions.

Submodules:
  intmat      exact unimodular integer matrices, characteristic polynomials, ergodicity
  spectral    certified spectral splits, growth rates, Lyapunov tables
  algebra     action specs, commutators, nilpotency and higher-rank predicates
  orbits      dual orbits, minimal points and the displacement verifiers
  fourier     trigonometric maps, automorphic and nonlinear composition
  cohomology  twisted coboundary solver and obstructions
  kam         perturbed actions, splittings and the KAM iteration
  families    example families, the reciprocal-polynomial search and recipes
  verify      growth, displacement, E-set and obstruction suites
  kernels     numba hot loops with a numpy fallback (TORIKAM_NUMBA=0)
"""

__version__ = "0.1.0"

from .algebra import ActionSpec, PreconditionError, is_genuinely_partially_hyperbolic, is_higher_rank  # noqa: E402
from .cohomology import ObstructionError, obstruction, solve_twisted  # noqa: E402
from .fourier import FourierMap, compose_auto, compose_nonlinear  # noqa: E402
from .intmat import CAT, IntMatrix, char_poly, is_ergodic, is_hyperbolic, is_unipotent  # noqa: E402
from .spectral import split  # noqa: E402

__all__ = [
    "ActionSpec", "CAT", "FourierMap", "IntMatrix", "ObstructionError", "PreconditionError", "char_poly",
    "compose_auto", "compose_nonlinear", "is_ergodic", "is_genuinely_partially_hyperbolic", "is_higher_rank",
    "is_hyperbolic", "is_unipotent", "obstruction", "solve_twisted", "split",
]
