"""Uniqueness certificates and phase-transition tools for sparse and TV recovery.

The functional API lives in the submodules:

* :mod:`certilab.linalg` for operators, ranks and the CSV matrix format
* :mod:`certilab.solver` for LPs and projections
* :mod:`certilab.objectives` for the six objective cases
* :mod:`certilab.certify` for dual certificates, the oracle and recovery
* :mod:`certilab.signals` and :mod:`certilab.sensing` for test instances
* :mod:`certilab.statdim` for the statistical-dimension estimate
* :mod:`certilab.phase` for phase-diagram sweeps

:mod:`certilab.estimators` wraps the main entry points as scikit-learn style
estimators.
"""

__version__ = "0.1.0"

from certilab.certify import (INDETERMINATE, NOT_UNIQUE, UNIQUE, CertificateResult,  # noqa: E402
                              certify_general, certify_specialized, descent_cone_oracle,
                              recover, strict_feasibility)
from certilab.objectives import make_objective  # noqa: E402
from certilab.statdim import j_approx, j_closed_form, minimize_j  # noqa: E402

__all__ = [
    "__version__",
    "UNIQUE", "NOT_UNIQUE", "INDETERMINATE", "CertificateResult",
    "certify_general", "certify_specialized", "descent_cone_oracle", "recover",
    "strict_feasibility", "make_objective", "j_approx", "j_closed_form", "minimize_j",
]
