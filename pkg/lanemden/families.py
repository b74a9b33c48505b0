__all__ = [
    'FowlerData',
    'NoOscillation',
    'bubble',
    'homogeneous_singular',
    'critical_homogeneous',
    'lower_critical_profile',
    'fowler_q',
    'check_admissible',
    'fowler_roots',
    'fowler_orbit',
    'spiral',
    'check_apriori_bound',
]

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from numba import njit
from scipy.optimize import minimize_scalar
from scipy.special import roots_legendre

from .core import (
    ProblemParams,
    Regime,
    apriori_amplitude,
    critical_kappa_floor,
    derive_constants,
    lower_critical_amplitude,
)
from .dynamics import (
    _FOWLER,
    _RADIAL,
    DEFAULT_STEP,
    RadialTrajectory,
    _derivatives,
    _rk4,
)
from .errors import (
    ConfigurationError,
    InadmissibleError,
    NumericError,
    RangeError,
    RegimeError,
)
from .transforms import Domain, FieldEvaluator
from .utils import unit_nonneg_vector

N_BRACKET_POINTS = 10_000
BRACKET_FLOOR = 1e-6
ROOT_XTOL = 1e-13
MAX_BISECTIONS = 200
DOUBLE_ROOT_TOL = 1e-8
PERIOD_NODES = 64


def bubble(
    n: int, m: int, z: Sequence[float], r: float, e: Sequence[float]
) -> FieldEvaluator:
    """Entire solution (n(n-2))^((n-2)/4) (r/(r^2+|x-z|^2))^((n-2)/2) e at the critical exponent.

    `r = 0` gives the trivial solution."""
    alpha = (n + 2) / (n - 2)
    e = unit_nonneg_vector(e, m)
    z = np.asarray(z, dtype=np.float64).ravel()
    if z.size != n:
        raise RangeError(f"z must have {n} coordinates.", {"z": z.tolist()})
    if not r >= 0 or not math.isfinite(r):
        raise RangeError("The bubble scale must be nonnegative.", {"r": r})
    if r == 0:
        zero = FieldEvaluator.zero(n, m, alpha)
        zero.name = "bubble"
        return zero
    amp = (n * (n - 2)) ** ((n - 2) / 4)
    k = (n - 2) / 2

    def value(x):
        s = r * r + np.einsum("ij,ij->i", x - z, x - z)
        return (amp * (r / s) ** k)[:, None] * e

    def gradient(x):
        d = x - z
        s = r * r + np.einsum("ij,ij->i", d, d)
        coef = -2 * k * amp * (r / s) ** k / s
        return coef[:, None, None] * e[None, :, None] * d[:, None, :]

    def laplacian(x):
        s = r * r + np.einsum("ij,ij->i", x - z, x - z)
        return (-n * (n - 2) * amp * r ** (k + 2) * s ** (-k - 2))[:, None] * e

    return FieldEvaluator(
        n,
        m,
        alpha,
        value,
        gradient=gradient,
        laplacian=laplacian,
        radial=not z.any(),
        regular_at_origin=True,
        name="bubble",
    )


def _power_field(
    n: int, m: int, alpha: float, amp: float, p: float, e: np.ndarray, name: str
) -> FieldEvaluator:
    # amp |x|^p e on the punctured space
    def value(x):
        r = np.linalg.norm(x, axis=1)
        return (amp * r**p)[:, None] * e

    def gradient(x):
        r = np.linalg.norm(x, axis=1)
        coef = amp * p * r ** (p - 2)
        return coef[:, None, None] * e[None, :, None] * x[:, None, :]

    def laplacian(x):
        r = np.linalg.norm(x, axis=1)
        return (amp * p * (p + n - 2) * r ** (p - 2))[:, None] * e

    return FieldEvaluator(
        n,
        m,
        alpha,
        value,
        gradient=gradient,
        laplacian=laplacian,
        domain=Domain("punctured_space"),
        radial=True,
        name=name,
    )


def homogeneous_singular(params: ProblemParams, e: Sequence[float]) -> FieldEvaluator:
    """Singular solution lambda^(1/(alpha-1)) |x|^(-2/(alpha-1)) e, defined for lambda > 0."""
    c = derive_constants(params)
    if c.regime not in (Regime.INTERMEDIATE, Regime.CRITICAL):
        raise RegimeError(
            "The homogeneous singular solution needs alpha > n/(n-2).",
            {"n": params.n, "alpha": params.alpha, "lambda": c.lambda_},
        )
    e = unit_nonneg_vector(e, params.m)
    amp = c.lambda_ ** (1.0 / (params.alpha - 1.0))
    return _power_field(
        params.n, params.m, params.alpha, amp, -c.scaling_exponent, e, "homogeneous"
    )


def critical_homogeneous(n: int, m: int, e: Sequence[float]) -> FieldEvaluator:
    """((n-2)/2)^((n-2)/2) |x|^(-(n-2)/2) e, the singular solution at the critical exponent."""
    e = unit_nonneg_vector(e, m)
    k = (n - 2) / 2
    return _power_field(n, m, (n + 2) / (n - 2), k**k, -k, e, "critical_homogeneous")


def lower_critical_profile(n: int, m: int, e: Sequence[float]) -> FieldEvaluator:
    """Leading singular profile ((n-2)^2/2)^((n-2)/2) |x|^(2-n) (-log|x|)^((2-n)/2) e on B_1 minus 0.

    This is the asymptotic law at the Serrin exponent, not an exact solution."""
    e = unit_nonneg_vector(e, m)
    amp = lower_critical_amplitude(n)
    q = (2 - n) / 2

    def value(x):
        r = np.linalg.norm(x, axis=1)
        L = -np.log(r)
        return (amp * r ** (2 - n) * L**q)[:, None] * e

    def gradient(x):
        r = np.linalg.norm(x, axis=1)
        L = -np.log(r)
        coef = amp * r ** (-n) * L**q * ((2 - n) - q / L)
        return coef[:, None, None] * e[None, :, None] * x[:, None, :]

    def laplacian(x):
        r = np.linalg.norm(x, axis=1)
        L = -np.log(r)
        lap = r ** (-n) * (-((n - 2) ** 2) / 2 * L ** (q - 1) + q * (q - 1) * L ** (q - 2))
        return (amp * lap)[:, None] * e

    return FieldEvaluator(
        n,
        m,
        n / (n - 2),
        value,
        gradient=gradient,
        laplacian=laplacian,
        domain=Domain("punctured_ball", radius=1.0),
        radial=True,
        name="lower_critical_profile",
    )


@dataclass(frozen=True)
class FowlerData:
    """Two strict positive roots of Q and the period of the orbit oscillating between them."""

    n: int
    kappa: float
    kappa_star: float
    rho_min: float
    rho_max: float
    period: float

    def to_dict(self):
        return {
            "n": self.n,
            "kappa": self.kappa,
            "kappa_star": self.kappa_star,
            "rho_min": self.rho_min,
            "rho_max": self.rho_max,
            "period": self.period,
        }


@dataclass(frozen=True)
class NoOscillation:
    """Returned by `fowler_roots` when Q has no positive band.

    `reason` is 'double_root' when the two roots merge (an equilibrium orbit, stored
    in `roots`) and 'missing_root' when fewer than two strict roots exist."""

    n: int
    kappa: float
    kappa_star: float
    reason: str
    roots: Tuple[float, ...] = ()


def fowler_q(n: int, kappa: float, kappa_star: float, rho):
    """Q(rho) = (n-2)^2/4 rho^2 - (n-2)/n rho^(2n/(n-2)) + kappa + kappa_star/rho^2."""
    rho = np.asarray(rho, dtype=np.float64)
    out = (
        (n - 2) ** 2 / 4 * rho**2
        - (n - 2) / n * rho ** (2 * n / (n - 2))
        + kappa
        + kappa_star / rho**2
    )
    return float(out) if out.ndim == 0 else out


@njit
def _rho2_q(rho, a, b, e, kappa, kappa_star):
    # rho^2 Q(rho), smooth at 0
    r2 = rho * rho
    return a * r2 * r2 - b * rho**e + kappa * r2 + kappa_star


@njit
def _bisect(lo, hi, a, b, e, kappa, kappa_star, xtol, max_iters):
    flo = _rho2_q(lo, a, b, e, kappa, kappa_star)
    for _ in range(max_iters):
        mid = 0.5 * (lo + hi)
        fmid = _rho2_q(mid, a, b, e, kappa, kappa_star)
        if fmid == 0.0:
            return mid, True
        if (fmid > 0.0) == (flo > 0.0):
            lo = mid
            flo = fmid
        else:
            hi = mid
        if hi - lo < xtol:
            return 0.5 * (lo + hi), True
    return 0.5 * (lo + hi), False


def _admissibility_violation(
    n: int, kappa: float, kappa_star: float, tol: float
) -> Optional[str]:
    floor = critical_kappa_floor(n)
    if kappa < floor - tol:
        return f"kappa >= -(2/n)((n-2)/2)^n = {floor:.10g}"
    if kappa_star > tol:
        return "kappa_star <= 0"
    kstar_floor = -(kappa - floor) * ((n - 2) / 2) ** (n - 2)
    if kappa_star < kstar_floor - tol:
        return f"kappa_star >= -((2/n)((n-2)/2)^n + kappa)((n-2)/2)^(n-2) = {kstar_floor:.10g}"
    return None


def check_admissible(n: int, kappa: float, kappa_star: float, tol: float = 0.0) -> None:
    """Raises `InadmissibleError` naming the violated lower bound of the invariant pair."""
    violated = _admissibility_violation(n, kappa, kappa_star, tol)
    if violated is not None:
        raise InadmissibleError(
            f"Invariant pair violates {violated}.",
            {"n": n, "kappa": kappa, "kappa_star": kappa_star, "bound": violated},
        )


def _fowler_period(n: int, kappa: float, kappa_star: float, lo: float, hi: float) -> float:
    # rho = lo + (hi-lo)(1-cos psi)/2 removes the inverse square root at both ends
    psi, w = roots_legendre(PERIOD_NODES)
    psi = 0.5 * np.pi * (psi + 1.0)
    w = 0.5 * np.pi * w
    delta = hi - lo
    rho = lo + delta * (1 - np.cos(psi)) / 2
    q = fowler_q(n, kappa, kappa_star, rho)
    if (q <= 0).any():
        raise NumericError(
            "Q is not positive between its roots.",
            {"n": n, "kappa": kappa, "kappa_star": kappa_star},
        )
    return float(2 * np.sum(w * 0.5 * delta * np.sin(psi) / np.sqrt(q)))


def fowler_roots(
    n: int, kappa: float, kappa_star: float
) -> Union[FowlerData, NoOscillation]:
    """Locate the band [rho_min, rho_max] where Q > 0 and the period of the orbit in it."""
    violated = _admissibility_violation(n, kappa, kappa_star, 0.0)
    if violated is not None:
        raise RangeError(
            f"Invariant pair violates {violated}.",
            {"n": n, "kappa": kappa, "kappa_star": kappa_star},
        )
    a = (n - 2) ** 2 / 4
    b = (n - 2) / n
    e = (4 * n - 4) / (n - 2)
    cap = 2 * (n * (n - 2) / 4) ** ((n - 2) / 4)
    while _rho2_q(cap, a, b, e, kappa, kappa_star) >= 0:
        cap *= 2
    grid = np.geomspace(BRACKET_FLOOR, cap, N_BRACKET_POINTS)
    vals = a * grid**4 - b * grid**e + kappa * grid**2 + kappa_star
    sign = np.sign(vals)
    brackets = np.flatnonzero(sign[:-1] * sign[1:] < 0)
    roots = []
    for i in brackets:
        root, converged = _bisect(
            grid[i], grid[i + 1], a, b, e, kappa, kappa_star, ROOT_XTOL, MAX_BISECTIONS
        )
        if not converged:
            raise NumericError(
                "Root refinement did not converge.",
                {"bracket": [float(grid[i]), float(grid[i + 1])]},
            )
        roots.append(root)
    roots.extend(float(x) for x in grid[sign == 0])
    roots = sorted(roots)
    if len(roots) < 2:
        # look for a tangency that the sign scan cannot see
        if len(roots) == 0 and vals.max() < 0:
            i = int(np.argmax(vals / grid**2))
            lo, hi = grid[max(i - 2, 0)], grid[min(i + 2, grid.size - 1)]
            res = minimize_scalar(
                lambda r: -_rho2_q(r, a, b, e, kappa, kappa_star),
                bounds=(lo, hi),
                method="bounded",
                options={"xatol": 1e-12},
            )
            if -res.fun > -1e-12:
                return NoOscillation(n, kappa, kappa_star, "double_root", (float(res.x),))
        return NoOscillation(n, kappa, kappa_star, "missing_root", tuple(roots))
    rho_min, rho_max = roots[-2], roots[-1]
    if rho_max - rho_min < DOUBLE_ROOT_TOL:
        return NoOscillation(
            n, kappa, kappa_star, "double_root", (0.5 * (rho_min + rho_max),)
        )
    period = _fowler_period(n, kappa, kappa_star, rho_min, rho_max)
    return FowlerData(n, kappa, kappa_star, rho_min, rho_max, period)


def _integrate_fowler(
    n: int,
    kappa_star: float,
    rho0: float,
    period: Optional[float],
    t0: float,
    span: Optional[float],
    h: float,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    if not h > 0 or (period is not None and h > period / 100):
        raise ConfigurationError(
            "The step must be positive and at most period/100.",
            {"h": h, "period": period},
        )
    if span is None:
        if period is None:
            raise ConfigurationError("An equilibrium orbit needs an explicit span.")
        span = period
    span = float(span)
    if not span >= h:
        raise ConfigurationError("The span must be at least one step.", {"span": span, "h": h})
    n_steps = int(round(span / h))
    y0 = np.array([rho0, 0.0, 0.0])
    ys, dys, n_valid = _rk4(
        _FOWLER,
        float(t0),
        y0,
        h,
        n_steps,
        1,
        (n - 2) ** 2 / 4,
        (n + 2) / (n - 2),
        float(kappa_star),
        np.inf,
    )
    if n_valid < n_steps + 1:
        raise NumericError("The Fowler orbit became non-finite.", {"t": t0 + (n_valid - 1) * h})
    ts = t0 + h * np.arange(n_steps + 1)
    return ts, ys, dys


def fowler_orbit(
    data: Union[FowlerData, NoOscillation],
    t0: float = 0.0,
    span: Optional[float] = None,
    h: float = DEFAULT_STEP,
) -> RadialTrajectory:
    """Periodic orbit rho'' = (n-2)^2/4 rho - rho^((n+2)/(n-2)) - kappa_star/rho^3
    started at rho(t0) = rho_min, rho'(t0) = 0. `span` defaults to one period.

    A double root gives the constant orbit at the root, which needs an explicit `span`."""
    n = data.n
    if isinstance(data, NoOscillation):
        if data.reason != "double_root":
            raise RangeError(f"No periodic orbit ({data.reason}).", {"reason": data.reason})
        ts, ys, dys = _integrate_fowler(n, data.kappa_star, data.roots[0], None, t0, span, h)
    else:
        ts, ys, dys = _integrate_fowler(
            n, data.kappa_star, data.rho_min, data.period, t0, span, h
        )
    return RadialTrajectory(
        ProblemParams.critical(n, 1),
        h,
        ts,
        ys[:, :1].copy(),
        ys[:, 1:2].copy(),
        dys[:, 1:2].copy(),
        system="fowler",
        kernel=(_FOWLER, (n - 2) ** 2 / 4, (n + 2) / (n - 2), float(data.kappa_star)),
    )


def spiral(
    n: int,
    kappa: float,
    kappa_star: float,
    t0: float = 0.0,
    span: Optional[float] = None,
    h: float = DEFAULT_STEP,
) -> RadialTrajectory:
    """Two-component solution v = rho (cos Theta, sin Theta) of the critical radial system,
    with Theta' = sqrt(-kappa_star)/rho^2. `span` defaults to two periods."""
    if not kappa_star < 0:
        raise RangeError("A spiral needs kappa_star < 0.", {"kappa_star": kappa_star})
    data = fowler_roots(n, kappa, kappa_star)
    if isinstance(data, NoOscillation):
        raise RangeError(
            f"No periodic orbit for this invariant pair ({data.reason}).",
            {"n": n, "kappa": kappa, "kappa_star": kappa_star},
        )
    span = 2 * data.period if span is None else span
    ts, ys, dys = _integrate_fowler(n, kappa_star, data.rho_min, data.period, t0, span, h)
    rho, drho, theta = ys[:, 0], ys[:, 1], ys[:, 2]
    dtheta = dys[:, 2]
    cos, sin = np.cos(theta), np.sin(theta)
    v = np.column_stack([rho * cos, rho * sin])
    dv = np.column_stack([drho * cos - rho * dtheta * sin, drho * sin + rho * dtheta * cos])
    params = ProblemParams.critical(n, 2)
    c = derive_constants(params)
    kernel = (_RADIAL, c.lambda_, c.mu, params.alpha)
    ddv = _derivatives(_RADIAL, ts, np.hstack([v, dv]), 2, c.lambda_, c.mu, params.alpha)[:, 2:]
    return RadialTrajectory(params, h, ts, v, dv, ddv, system="spiral", kernel=kernel)


def check_apriori_bound(u: FieldEvaluator, points, params: Optional[ProblemParams] = None) -> float:
    """Largest ratio u_i(x) |x|^(2/(alpha-1)) / C over the points and components.

    C is the a priori constant, so values at most 1 mean the bound holds."""
    params = u.params if params is None else params
    points = np.asarray(points, dtype=np.float64).reshape(-1, u.n)
    vals = u(points)
    r = np.linalg.norm(points, axis=1)
    scaled = vals * (r ** (2.0 / (params.alpha - 1.0)))[:, None]
    return float(scaled.max() / apriori_amplitude(params))
