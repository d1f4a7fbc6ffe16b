"""Numerical bifurcation multiplicities for parameter families of elliptic boundary value problems.

The pipeline runs from principal symbols to a divisibility verdict:

* :mod:`bifindex.symbols` and :mod:`bifindex.halfline` hold the symbol data,
  the half-line reduction and the comparison maps ``sigma`` and ``tau``;
* :mod:`bifindex.degree` computes degrees of matrix-valued maps;
* :mod:`bifindex.jtheory` supplies ``n(q)`` and the verdict;
* :mod:`bifindex.multiplicity` ties them together.
"""
__version__ = "0.1.0"

from .degree import DegreeResult, InconclusiveDegree, MatrixMap, SphereMap, bott_fedosov_degree, brouwer_degree, degree_prime
from .jtheory import adams_m, jgroup_info, n_of_q, verdict
from .manifolds import Product, QuadratureRule, Sphere, Torus, integrate_top_form
from .multiplicity import check_hypotheses, total_multiplicity
from .symbols import SamplingPlan, SymbolFamily

__all__ = [
    "DegreeResult",
    "InconclusiveDegree",
    "MatrixMap",
    "Product",
    "QuadratureRule",
    "SamplingPlan",
    "Sphere",
    "SphereMap",
    "SymbolFamily",
    "Torus",
    "adams_m",
    "bott_fedosov_degree",
    "brouwer_degree",
    "check_hypotheses",
    "degree_prime",
    "integrate_top_form",
    "jgroup_info",
    "n_of_q",
    "total_multiplicity",
    "verdict",
]
