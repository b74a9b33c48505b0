__all__ = [
    'Regime',
    'ProblemParams',
    'DerivedConstants',
    'SphereQuadrature',
    'regime_of',
    'derive_constants',
    'build_sphere_quadrature',
    'integrate_sphere',
    'apriori_amplitude',
    'lower_critical_amplitude',
    'critical_kappa_floor',
    'lower_critical_energy_levels',
]

import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Callable, Optional, Tuple, Union

import numpy as np
from scipy.special import roots_gegenbauer

from .errors import CapabilityError, NumericError, RangeError, ValidationError

REGIME_TOL = 1e-12
DEFAULT_ORDER = 16
MAX_QUADRATURE_DIM = 6


class Regime(str, Enum):
    """Position of the exponent relative to the Serrin and Sobolev exponents."""

    BELOW_SERRIN = "BelowSerrin"
    SERRIN = "Serrin"
    INTERMEDIATE = "Intermediate"
    CRITICAL = "Critical"


def _exponent_bounds(n: int) -> Tuple[Fraction, Fraction]:
    return Fraction(n, n - 2), Fraction(n + 2, n - 2)


def _classify_alpha(n: int, alpha: float, tol: float = REGIME_TOL) -> Regime:
    # exact comparison of the float's rational value against the rational bounds
    serrin, sobolev = _exponent_bounds(n)
    a = Fraction(alpha)
    tol_ = Fraction(tol)
    if abs(a - sobolev) <= tol_:
        return Regime.CRITICAL
    if abs(a - serrin) <= tol_:
        return Regime.SERRIN
    if a < serrin:
        return Regime.BELOW_SERRIN
    return Regime.INTERMEDIATE


@dataclass(frozen=True)
class ProblemParams:
    """Spatial dimension `n`, number of components `m` and exponent `alpha`."""

    n: int
    m: int
    alpha: float

    def __post_init__(self):
        if isinstance(self.n, bool) or not isinstance(self.n, (int, np.integer)):
            raise ValidationError("n must be an integer.", {"n": self.n})
        if isinstance(self.m, bool) or not isinstance(self.m, (int, np.integer)):
            raise ValidationError("m must be an integer.", {"m": self.m})
        if self.n < 3:
            raise RangeError("n must be at least 3.", {"n": self.n})
        if self.m < 1:
            raise RangeError("m must be at least 1.", {"m": self.m})
        alpha = float(self.alpha)
        if not math.isfinite(alpha):
            raise RangeError("alpha must be finite.", {"alpha": self.alpha})
        sobolev = Fraction(self.n + 2, self.n - 2)
        if alpha <= 1 or Fraction(alpha) - sobolev > Fraction(REGIME_TOL):
            raise RangeError(
                f"alpha must satisfy 1 < alpha <= (n+2)/(n-2) = {float(sobolev):.6g}.",
                {"n": self.n, "alpha": alpha},
            )
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "m", int(self.m))
        object.__setattr__(self, "alpha", alpha)

    @property
    def regime(self) -> Regime:
        return _classify_alpha(self.n, self.alpha)

    @classmethod
    def critical(cls, n: int, m: int = 1) -> "ProblemParams":
        """Parameters at the Sobolev exponent (n+2)/(n-2)."""
        return cls(n, m, (n + 2) / (n - 2))

    @classmethod
    def serrin(cls, n: int, m: int = 1) -> "ProblemParams":
        """Parameters at the Serrin exponent n/(n-2)."""
        return cls(n, m, n / (n - 2))

    def to_dict(self):
        return {"n": self.n, "m": self.m, "alpha": self.alpha}


@dataclass(frozen=True)
class DerivedConstants:
    """Constants shared by every formula of the system.

    `lambda_bar` is `None` when `lambda_ < 0` (exponents below the Serrin exponent)."""

    params: ProblemParams
    regime: Regime
    lambda_: float
    mu: float
    lambda_bar: Optional[float]
    serrin_exponent: float
    sobolev_exponent: float
    ball_volume: float
    sphere_area: float

    @property
    def n(self) -> int:
        return self.params.n

    @property
    def m(self) -> int:
        return self.params.m

    @property
    def alpha(self) -> float:
        return self.params.alpha

    @property
    def scaling_exponent(self) -> float:
        """Homogeneity degree 2/(alpha-1) of the invariance scaling."""
        return 2.0 / (self.params.alpha - 1.0)

    def to_dict(self):
        return {
            "n": self.n,
            "m": self.m,
            "alpha": self.alpha,
            "regime": self.regime.value,
            "lambda": self.lambda_,
            "mu": self.mu,
            "lambda_bar": self.lambda_bar,
            "serrin_exponent": self.serrin_exponent,
            "sobolev_exponent": self.sobolev_exponent,
            "ball_volume": self.ball_volume,
            "sphere_area": self.sphere_area,
        }


def regime_of(params: ProblemParams) -> Regime:
    """Regime tag of `params`; boundaries are matched within `REGIME_TOL`."""
    return _classify_alpha(params.n, params.alpha)


def derive_constants(params: ProblemParams) -> DerivedConstants:
    """Compute lambda, mu, lambda bar and the sphere normalizations for `params`."""
    n = params.n
    regime = regime_of(params)
    serrin, sobolev = _exponent_bounds(n)
    alpha = params.alpha
    # snap boundary exponents so that mu (resp. lambda) vanishes exactly
    if regime is Regime.CRITICAL:
        alpha = float(sobolev)
    elif regime is Regime.SERRIN:
        alpha = float(serrin)
    p = 2.0 / (alpha - 1.0)
    lam = p * (n - 2 - p)
    mu = 2.0 * p - n + 2
    if regime is Regime.CRITICAL:
        mu = 0.0
    elif regime is Regime.SERRIN:
        lam = 0.0
    if lam >= 0:
        lambda_bar: Optional[float] = (alpha - 1) / (alpha + 1) * lam ** (
            (alpha + 1) / (alpha - 1)
        )
    else:
        lambda_bar = None
    ball_volume = math.pi ** (n / 2) / math.gamma(n / 2 + 1)
    return DerivedConstants(
        params=params,
        regime=regime,
        lambda_=lam,
        mu=mu,
        lambda_bar=lambda_bar,
        serrin_exponent=float(serrin),
        sobolev_exponent=float(sobolev),
        ball_volume=ball_volume,
        sphere_area=n * ball_volume,
    )


def apriori_amplitude(params: ProblemParams) -> float:
    """Constant C of the bound u_i(x) <= C |x|^(-2/(alpha-1)) for singular solutions."""
    alpha = params.alpha
    return ((alpha - 1) / (2 * params.n)) ** (-1.0 / (alpha - 1))


def lower_critical_amplitude(n: int) -> float:
    return ((n - 2) ** 2 / 2) ** ((n - 2) / 2)


def critical_kappa_floor(n: int) -> float:
    """Smallest admissible first Pohozaev invariant, attained by the homogeneous solution."""
    return -(2.0 / n) * ((n - 2) / 2) ** n


def lower_critical_energy_levels(n: int) -> Tuple[float, float]:
    """The two possible limits of the lower-critical energy: regular and singular."""
    return 0.0, -((n - 2) ** 2 / 2) ** (n - 1) / (n - 1)


@dataclass(frozen=True, eq=False)
class SphereQuadrature:
    """Product rule on the unit sphere of R^n.

    `nodes` has shape (n_nodes, n) and `weights` has shape (n_nodes,).
    The rule is exact on polynomials of degree at most `degree`."""

    n: int
    order: int
    degree: int
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return self.weights.size

    def __repr__(self) -> str:
        return (
            f"{self.__class__.__name__}(n={self.n}, order={self.order}, "
            f"n_nodes={len(self)})"
        )


def build_sphere_quadrature(n: int, order: int = DEFAULT_ORDER) -> SphereQuadrature:
    """Build a product rule on S^(n-1) in iterated spherical coordinates.

    Each polar angle uses Gauss nodes in its cosine with the Jacobian weight
    (1-c^2)^((j-1)/2) absorbed into the rule (plain Gauss-Legendre for j=1),
    the azimuth uses `order` equispaced nodes."""
    if n < 3:
        raise ValidationError("The sphere rule needs n >= 3.", {"n": n})
    if n > MAX_QUADRATURE_DIM:
        raise CapabilityError(
            f"Angular integration is only supported up to n={MAX_QUADRATURE_DIM}.",
            {"n": n},
        )
    if order < 2:
        raise ValidationError("order must be at least 2.", {"order": order})
    factors_nodes = []
    factors_weights = []
    for k in range(n - 2):
        j = n - 2 - k
        c, w = roots_gegenbauer(order, j / 2)
        factors_nodes.append(np.asarray(c, dtype=np.float64))
        factors_weights.append(np.asarray(w, dtype=np.float64))
    psi = 2 * np.pi * np.arange(order) / order
    grids = np.meshgrid(*[np.arange(order)] * (n - 1), indexing="ij")
    idxs = [g.ravel() for g in grids]
    n_nodes = idxs[0].size
    nodes = np.empty((n_nodes, n))
    weights = np.full(n_nodes, 2 * np.pi / order)
    prefix = np.ones(n_nodes)
    for k in range(n - 2):
        c = factors_nodes[k][idxs[k]]
        nodes[:, k] = prefix * c
        prefix = prefix * np.sqrt(np.clip(1.0 - c * c, 0.0, None))
        weights *= factors_weights[k][idxs[k]]
    azimuth = psi[idxs[-1]]
    nodes[:, n - 2] = prefix * np.cos(azimuth)
    nodes[:, n - 1] = prefix * np.sin(azimuth)
    nodes /= np.linalg.norm(nodes, axis=1, keepdims=True)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return SphereQuadrature(
        n=n, order=order, degree=order - 1, nodes=nodes, weights=weights
    )


def integrate_sphere(
    q: SphereQuadrature, f: Union[Callable[[np.ndarray], np.ndarray], np.ndarray]
) -> Union[float, np.ndarray]:
    """Weighted sum of `f` over the nodes of `q`.

    `f` is either a function taking the (n_nodes, n) array of nodes or the array of
    values at the nodes; extra trailing axes are kept."""
    values = np.asarray(f(q.nodes) if callable(f) else f, dtype=np.float64)
    if values.shape[:1] != (len(q),):
        raise ValidationError(
            f"Expected {len(q)} values, got an array of shape {values.shape}."
        )
    finite = np.isfinite(values.reshape(len(q), -1)).all(axis=1)
    if not finite.all():
        bad = int(np.flatnonzero(~finite)[0])
        raise NumericError(
            f"Non-finite integrand at node {bad}.",
            {"node_index": bad, "node": q.nodes[bad].tolist()},
        )
    out = np.tensordot(q.weights, values, axes=(0, 0))
    if out.ndim == 0:
        return float(out)
    return out
