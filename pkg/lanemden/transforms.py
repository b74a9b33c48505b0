__all__ = [
    'FD_STEP',
    'Domain',
    'FieldEvaluator',
    'CylinderPoint',
    'to_cylindrical',
    'from_cylindrical',
    'lower_critical_to_phi',
    'lower_critical_from_phi',
    'cylindrical_field',
    'kelvin',
    'rescale',
    'fd_gradient',
    'fd_laplacian',
    'residual',
]

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from .core import DerivedConstants, ProblemParams, Regime
from .errors import (
    CapabilityError,
    DomainError,
    RangeError,
    RegimeError,
    SingularPointError,
    ValidationError,
)

FD_STEP = 1e-2
FD_GRADIENT_STEP = 1e-3
_DOMAIN_KINDS = ("whole", "punctured_space", "punctured_ball", "annulus")

ArrayFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Domain:
    """Region where a field is defined.

    `whole` is all of R^n, `punctured_space` is R^n minus `center`, `punctured_ball`
    is the ball of radius `radius` minus its center and `annulus` is the open shell
    `inner < |x - center| < radius`."""

    kind: str = "whole"
    radius: float = math.inf
    inner: float = 0.0
    center: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        if self.kind not in _DOMAIN_KINDS:
            raise ValidationError(
                f"kind must be one of {_DOMAIN_KINDS}.", {"kind": self.kind}
            )
        if self.radius <= self.inner:
            raise ValidationError(
                "radius must be greater than inner.",
                {"radius": self.radius, "inner": self.inner},
            )
        if self.center is not None:
            object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    def distance(self, x: np.ndarray) -> np.ndarray:
        if self.center is None:
            return np.linalg.norm(x, axis=-1)
        return np.linalg.norm(x - np.asarray(self.center), axis=-1)

    def margin(self, x: np.ndarray) -> np.ndarray:
        """Distance from each point to the boundary of the domain."""
        if self.kind == "whole":
            return np.full(x.shape[:-1], np.inf)
        d = self.distance(x)
        if self.kind == "punctured_space":
            return d
        return np.minimum(d - self.inner, self.radius - d)

    def check(self, x: np.ndarray) -> None:
        if self.kind == "whole":
            return
        d = self.distance(x)
        singular = d == 0
        if singular.any():
            idx = int(np.flatnonzero(singular.ravel())[0])
            raise SingularPointError(
                "Evaluation at the singular point.",
                {"point": x.reshape(-1, x.shape[-1])[idx].tolist()},
            )
        outside = (d >= self.radius) | (d <= self.inner)
        if outside.any():
            idx = int(np.flatnonzero(outside.ravel())[0])
            raise DomainError(
                "Point outside the domain of the field.",
                {"point": x.reshape(-1, x.shape[-1])[idx].tolist(), "domain": self.kind},
            )

    def scaled(self, r: float) -> "Domain":
        """Domain of x -> u(r x) when this is the domain of u."""
        center = None if self.center is None else tuple(c / r for c in self.center)
        return Domain(self.kind, self.radius / r, self.inner / r, center)


class FieldEvaluator:
    """Vector field u: R^n -> R^m defined on `domain`.

    Parameters
    ----------
    n : int
        Spatial dimension.
    m : int
        Number of components.
    alpha : float
        Exponent of the equation the field relates to.
    value : callable
        Vectorized map from an (K, n) array of points to the (K, m) array of values.
    gradient : callable, optional (default=None)
        Map from (K, n) points to the (K, m, n) Jacobians.
        If None the gradient is obtained by finite differences.
    laplacian : callable, optional (default=None)
        Map from (K, n) points to the (K, m) Laplacians.
    domain : Domain, optional (default=None)
        Region of definition, the whole space when None.
    radial : bool (default=False)
        Whether the field only depends on |x|.
    regular_at_origin : bool (default=False)
        Whether the field extends smoothly to the origin.
    source_weight : callable, optional (default=None)
        Weight w(x) in -Δu = w |u|^(alpha-1) u, 1 when None.
    allow_fd_gradient : bool (default=True)
        Whether finite differences may replace a missing analytic gradient.
    name : str (default='field')
        Label used in reprs and outputs.
    """

    def __init__(
        self,
        n: int,
        m: int,
        alpha: float,
        value: ArrayFn,
        gradient: Optional[ArrayFn] = None,
        laplacian: Optional[ArrayFn] = None,
        domain: Optional[Domain] = None,
        radial: bool = False,
        regular_at_origin: bool = False,
        source_weight: Optional[ArrayFn] = None,
        allow_fd_gradient: bool = True,
        name: str = "field",
    ):
        self.params = ProblemParams(n, m, alpha)
        self._value = value
        self._gradient = gradient
        self._laplacian = laplacian
        self.domain = Domain() if domain is None else domain
        self.radial = radial
        self.regular_at_origin = regular_at_origin
        self.source_weight = source_weight
        self.allow_fd_gradient = allow_fd_gradient
        self.name = name

    @classmethod
    def zero(cls, n: int, m: int, alpha: float) -> "FieldEvaluator":
        """The trivial solution u = 0."""
        return cls(
            n,
            m,
            alpha,
            value=lambda x: np.zeros((x.shape[0], m)),
            gradient=lambda x: np.zeros((x.shape[0], m, n)),
            laplacian=lambda x: np.zeros((x.shape[0], m)),
            radial=True,
            regular_at_origin=True,
            name="zero",
        )

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
    def has_gradient(self) -> bool:
        return self._gradient is not None or self.allow_fd_gradient

    @property
    def has_analytic_gradient(self) -> bool:
        return self._gradient is not None

    @property
    def has_laplacian(self) -> bool:
        return self._laplacian is not None

    def __repr__(self) -> str:
        return (
            f"{self.__class__.__name__}(name={self.name!r}, n={self.n}, m={self.m}, "
            f"alpha={self.alpha:.6g}, domain={self.domain.kind!r})"
        )

    def _prepare(self, x) -> Tuple[np.ndarray, Tuple[int, ...]]:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 0 or x.shape[-1] != self.n:
            raise ValidationError(
                f"Points must have {self.n} coordinates.", {"shape": list(x.shape)}
            )
        points = x.reshape(-1, self.n)
        self.domain.check(points)
        return points, x.shape[:-1]

    def __call__(self, x) -> np.ndarray:
        points, lead = self._prepare(x)
        return np.asarray(self._value(points)).reshape(lead + (self.m,))

    def gradient(self, x) -> np.ndarray:
        points, lead = self._prepare(x)
        if self._gradient is not None:
            out = np.asarray(self._gradient(points))
        elif self.allow_fd_gradient:
            out = _fd_gradient(self, points, FD_GRADIENT_STEP)
        else:
            raise CapabilityError(
                f"The field {self.name!r} has no gradient.", {"field": self.name}
            )
        return out.reshape(lead + (self.m, self.n))

    def laplacian(self, x) -> np.ndarray:
        if self._laplacian is None:
            raise CapabilityError(
                f"The field {self.name!r} has no closed-form Laplacian.",
                {"field": self.name},
            )
        points, lead = self._prepare(x)
        return np.asarray(self._laplacian(points)).reshape(lead + (self.m,))

    def weight(self, x) -> np.ndarray:
        points, lead = self._prepare(x)
        if self.source_weight is None:
            return np.ones(lead)
        return np.asarray(self.source_weight(points)).reshape(lead)


@dataclass(frozen=True, eq=False)
class CylinderPoint:
    """Point (t, theta) of the cylinder R x S^(n-1), with x = exp(-t) theta."""

    t: float
    theta: np.ndarray = field(repr=False)

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=np.float64).ravel()
        if abs(np.linalg.norm(theta) - 1.0) > 1e-14:
            raise ValidationError(
                "theta must be a unit vector.", {"theta": theta.tolist()}
            )
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "theta", theta)

    @classmethod
    def from_point(cls, x: Sequence[float]) -> "CylinderPoint":
        x = np.asarray(x, dtype=np.float64)
        r = np.linalg.norm(x)
        if r == 0:
            raise SingularPointError("The origin has no cylindrical coordinates.")
        return cls(-math.log(r), x / r)

    def to_point(self) -> np.ndarray:
        return math.exp(-self.t) * self.theta


def to_cylindrical(u: FieldEvaluator, p: CylinderPoint, c: DerivedConstants) -> np.ndarray:
    """v(t, theta) = |x|^(2/(alpha-1)) u(x) at x = exp(-t) theta."""
    if p.theta.size != u.n:
        raise ValidationError(
            f"theta must have {u.n} coordinates.", {"theta": p.theta.tolist()}
        )
    x = p.to_point()
    return math.exp(-c.scaling_exponent * p.t) * u(x)


def from_cylindrical(
    v: Callable[[CylinderPoint], np.ndarray], x: Sequence[float], c: DerivedConstants
) -> np.ndarray:
    """u(x) = |x|^(-2/(alpha-1)) v(-log|x|, x/|x|)."""
    x = np.asarray(x, dtype=np.float64)
    r = float(np.linalg.norm(x))
    if r == 0:
        raise SingularPointError("from_cylindrical is undefined at the origin.")
    p = CylinderPoint(-math.log(r), x / r)
    return r ** (-c.scaling_exponent) * np.asarray(v(p), dtype=np.float64)


def _require_serrin(params: ProblemParams) -> None:
    if params.regime is not Regime.SERRIN:
        raise RegimeError(
            "The lower-critical transformation needs alpha = n/(n-2).",
            {"n": params.n, "alpha": params.alpha},
        )


def lower_critical_to_phi(u: FieldEvaluator, p: CylinderPoint) -> np.ndarray:
    """phi(t, theta) = |x|^(n-2) (-log|x|)^((n-2)/2) u(x) at x = exp(-t) theta, for t > 0."""
    _require_serrin(u.params)
    if p.t <= 0:
        raise DomainError("The lower-critical transformation needs t > 0.", {"t": p.t})
    n = u.n
    return math.exp(-(n - 2) * p.t) * p.t ** ((n - 2) / 2) * u(p.to_point())


def lower_critical_from_phi(
    phi: Callable[[CylinderPoint], np.ndarray], x: Sequence[float], n: int
) -> np.ndarray:
    """Inverse of `lower_critical_to_phi` on the punctured unit ball."""
    x = np.asarray(x, dtype=np.float64)
    r = float(np.linalg.norm(x))
    if r == 0:
        raise SingularPointError("lower_critical_from_phi is undefined at the origin.")
    if r >= 1:
        raise DomainError("The lower-critical transformation needs |x| < 1.", {"r": r})
    t = -math.log(r)
    return r ** (2 - n) * t ** ((2 - n) / 2) * np.asarray(phi(CylinderPoint(t, x / r)))


def cylindrical_field(
    v: Callable[..., np.ndarray],
    c: DerivedConstants,
    dv: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    radial: bool = False,
    t_range: Optional[Tuple[float, float]] = None,
    name: str = "cylindrical",
) -> FieldEvaluator:
    """Field u(x) = |x|^(-2/(alpha-1)) v(-log|x|, x/|x|) built from a cylinder map.

    When `radial` is True, `v` and `dv` take the (K,) array of times and return (K, m)
    arrays; otherwise `v` takes the times and the (K, n) array of directions.
    `dv` (radial only) gives an analytic gradient. `t_range` restricts the field to the
    annulus exp(-t1) < |x| < exp(-t0)."""
    n, m = c.n, c.m
    p = c.scaling_exponent

    def value(x):
        r = np.linalg.norm(x, axis=1)
        t = -np.log(r)
        prof = v(t) if radial else v(t, x / r[:, None])
        return r[:, None] ** (-p) * np.asarray(prof).reshape(-1, m)

    gradient = None
    if radial and dv is not None:

        def gradient(x):
            r = np.linalg.norm(x, axis=1)
            t = -np.log(r)
            prof = np.asarray(v(t)).reshape(-1, m)
            dprof = np.asarray(dv(t)).reshape(-1, m)
            coef = r ** (-p - 2)
            return coef[:, None, None] * (-p * prof - dprof)[:, :, None] * x[:, None, :]

    if t_range is None:
        domain = Domain("punctured_space")
    else:
        t0, t1 = t_range
        domain = Domain("annulus", radius=math.exp(-t0), inner=math.exp(-t1))
    return FieldEvaluator(
        n, m, c.alpha, value, gradient=gradient, domain=domain, radial=radial, name=name
    )


def kelvin(u: FieldEvaluator, z: Sequence[float], r: float) -> FieldEvaluator:
    """Kelvin transform (r/|y-z|)^(n-2) u(z + r^2 (y-z)/|y-z|^2).

    The result solves the weighted equation -Δu* = (r/|y-z|)^((alpha-1) mu) |u*|^(alpha-1) u*."""
    if not r > 0 or not math.isfinite(r):
        raise RangeError("The Kelvin radius must be positive.", {"r": r})
    z = np.asarray(z, dtype=np.float64).ravel()
    if z.size != u.n:
        raise ValidationError(f"z must have {u.n} coordinates.", {"z": z.tolist()})
    n = u.n
    alpha = u.alpha
    # (alpha-1) mu = n + 2 - (n-2) alpha
    weight_exponent = n + 2 - (n - 2) * alpha

    def _invert(y):
        d = y - z
        d2 = np.einsum("ij,ij->i", d, d)
        return z + r * r * d / d2[:, None], np.sqrt(d2)

    def value(y):
        x, dist = _invert(y)
        return (r / dist)[:, None] ** (n - 2) * u(x)

    def source_weight(y):
        x, dist = _invert(y)
        w = (r / dist) ** weight_exponent
        if u.source_weight is not None:
            w = w * u.weight(x)
        return w

    return FieldEvaluator(
        n,
        u.m,
        alpha,
        value,
        domain=Domain("punctured_space", center=tuple(z)),
        radial=u.radial and not z.any(),
        source_weight=source_weight,
        allow_fd_gradient=u.allow_fd_gradient,
        name=f"kelvin({u.name})",
    )


def rescale(u: FieldEvaluator, r: float) -> FieldEvaluator:
    """Scaling u_r(x) = r^(2/(alpha-1)) u(r x), which maps solutions to solutions."""
    if not r > 0 or not math.isfinite(r):
        raise RangeError("The scaling factor must be positive.", {"r": r})
    p = 2.0 / (u.alpha - 1.0)
    amp = r**p

    def value(x):
        return amp * u._value(r * x)

    gradient = laplacian = source_weight = None
    if u._gradient is not None:

        def gradient(x):
            return amp * r * u._gradient(r * x)

    if u._laplacian is not None:

        def laplacian(x):
            return amp * r * r * u._laplacian(r * x)

    if u.source_weight is not None:

        def source_weight(x):
            return u.source_weight(r * x)

    return FieldEvaluator(
        u.n,
        u.m,
        u.alpha,
        value,
        gradient=gradient,
        laplacian=laplacian,
        domain=u.domain.scaled(r),
        radial=u.radial,
        regular_at_origin=u.regular_at_origin,
        source_weight=source_weight,
        allow_fd_gradient=u.allow_fd_gradient,
        name=f"rescale({u.name}, {r:g})",
    )


def _axis_stencil(
    u: FieldEvaluator, points: np.ndarray, h: np.ndarray, offsets: Sequence[int]
) -> np.ndarray:
    # values at points + s*h*e_i, shape (len(offsets), n, K, m)
    n = u.n
    eye = np.eye(n)
    shifted = (
        points[None, None, :, :]
        + np.asarray(offsets, dtype=np.float64)[:, None, None, None]
        * h[None, None, :, None]
        * eye[None, :, None, :]
    )
    vals = np.asarray(u._value(shifted.reshape(-1, n)))
    return vals.reshape(len(offsets), n, points.shape[0], u.m)


def _fd_gradient(u: FieldEvaluator, points: np.ndarray, h: float) -> np.ndarray:
    margin = u.domain.margin(points)
    step = np.minimum(h, margin / 4)
    f = _axis_stencil(u, points, step, (-2, -1, 1, 2))
    grad = (f[0] - 8 * f[1] + 8 * f[2] - f[3]) / (12 * step[None, :, None])
    # (n, K, m) -> (K, m, n)
    return np.transpose(grad, (1, 2, 0))


def fd_gradient(u: FieldEvaluator, x, h: float = FD_GRADIENT_STEP) -> np.ndarray:
    """Fourth order central-difference Jacobian, shape (..., m, n).

    The step shrinks near the boundary so that the stencil stays inside the domain."""
    points, lead = u._prepare(x)
    return _fd_gradient(u, points, h).reshape(lead + (u.m, u.n))


def _fd_laplacian(u: FieldEvaluator, points: np.ndarray, h: float) -> np.ndarray:
    step = np.full(points.shape[0], h)
    f = _axis_stencil(u, points, step, (-2, -1, 0, 1, 2))
    second = (-f[0] + 16 * f[1] - 30 * f[2] + 16 * f[3] - f[4]) / (12 * h * h)
    return second.sum(axis=0)


def fd_laplacian(u: FieldEvaluator, x, h: float = FD_STEP, richardson: bool = True) -> np.ndarray:
    """Fourth order central-difference Laplacian, shape (..., m).

    With `richardson` the results for h and h/2 are combined as (16 L(h/2) - L(h)) / 15."""
    if not h > 0:
        raise RangeError("The finite-difference step must be positive.", {"h": h})
    points, lead = u._prepare(x)
    margin = u.domain.margin(points)
    if (margin <= 2 * h).any():
        idx = int(np.flatnonzero(margin <= 2 * h)[0])
        raise DomainError(
            "The finite-difference stencil leaves the domain.",
            {"point": points[idx].tolist(), "h": h},
        )
    lap = _fd_laplacian(u, points, h)
    if richardson:
        lap = (16 * _fd_laplacian(u, points, h / 2) - lap) / 15
    return lap.reshape(lead + (u.m,))


def residual(u: FieldEvaluator, x, h: float = FD_STEP) -> np.ndarray:
    """-Δu - w |u|^(alpha-1) u evaluated with the finite-difference Laplacian."""
    lap = fd_laplacian(u, x, h)
    val = u(x)
    norm = np.linalg.norm(val, axis=-1, keepdims=True)
    nonlinear = np.where(norm > 0, norm ** (u.alpha - 1), 0.0) * val
    return -lap - u.weight(x)[..., None] * nonlinear
