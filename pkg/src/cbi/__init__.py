"""Multi-type continuous-state branching processes with immigration.

Admissible parameters, Lévy measure functionals, the Riccati system behind
the affine Laplace transform, boundary classification and Euler simulation.
"""
__version__ = "0.1.0"

from .levy import (  # noqa: E402
    AnisotropicStable,
    CompoundExponential,
    FiniteAtomic,
    OrthantPowerLaw,
    Sum,
    Zero,
    stable_constant,
)
from .params import (  # noqa: E402
    AdmissibilityError,
    AdmissibleParams,
    RawParams,
    StructureError,
    drift_matrices,
    validate,
)

__all__ = [
    "__version__",
    "AnisotropicStable",
    "CompoundExponential",
    "FiniteAtomic",
    "OrthantPowerLaw",
    "Sum",
    "Zero",
    "stable_constant",
    "AdmissibilityError",
    "AdmissibleParams",
    "RawParams",
    "StructureError",
    "drift_matrices",
    "validate",
]
