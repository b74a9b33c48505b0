__version__ = "0.1.0"
__all__ = [
    'ProblemParams',
    'derive_constants',
    'build_sphere_quadrature',
    'FieldEvaluator',
    'integrate_radial',
    'integrate_lower_critical',
    'kappa_of',
    'classify_field',
]
from lanemden.core import ProblemParams, build_sphere_quadrature, derive_constants
from lanemden.transforms import FieldEvaluator
from lanemden.dynamics import integrate_lower_critical, integrate_radial
from lanemden.invariants import kappa_of
from lanemden.classify import classify_field
