__all__ = [
    'DEFAULT_STEP',
    'RadialState',
    'RadialTrajectory',
    'integrate_radial',
    'integrate_lower_critical',
    'lower_critical_threshold',
    'cylindrical_residual',
    'restep_error',
    'trajectory_field',
]

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from numba import njit
from scipy.interpolate import CubicHermiteSpline

from .core import ProblemParams, apriori_amplitude, derive_constants
from .errors import (
    CapabilityError,
    ConfigurationError,
    DivergenceError,
    NegativeComponentWarning,
    RangeError,
    ValidationError,
)
from .transforms import FieldEvaluator, cylindrical_field


DEFAULT_STEP = 1e-3
GUARD_FACTOR = 10.0
NEGATIVE_TOL = -1e-10

# kernel system codes
_RADIAL = 0
_LOWER_CRITICAL = 1
_FOWLER = 2


@njit(nogil=True)
def _power_norm(y, m, exponent):
    # |y[:m]|^exponent, 0 at the origin
    s = 0.0
    for i in range(m):
        s += y[i] * y[i]
    if s == 0.0:
        return 0.0
    return math.exp(0.5 * exponent * math.log(s))


@njit(nogil=True)
def _deriv(system, t, y, out, m, p0, p1, p2):
    if system == _RADIAL:
        # v'' = -mu v' + lambda v - |v|^(alpha-1) v ; p0=lambda, p1=mu, p2=alpha
        factor = _power_norm(y, m, p2 - 1.0)
        for i in range(m):
            out[i] = y[m + i]
            out[m + i] = -p1 * y[m + i] + p0 * y[i] - factor * y[i]
    elif system == _LOWER_CRITICAL:
        # p0=n
        n = p0
        factor = _power_norm(y, m, 2.0 / (n - 2.0))
        damp = (n - 2.0) * (1.0 - 1.0 / t)
        lin = (n - 2.0) / (2.0 * t) * (n - 2.0 - n / (2.0 * t))
        for i in range(m):
            out[i] = y[m + i]
            out[m + i] = -damp * y[m + i] + lin * y[i] - factor * y[i] / t
    else:
        # state (rho, rho', theta); p0=(n-2)^2/4, p1=(n+2)/(n-2), p2=kappa_star
        rho = y[0]
        out[0] = y[1]
        out[1] = p0 * rho - rho**p1 - p2 / (rho * rho * rho)
        out[2] = math.sqrt(-p2) / (rho * rho) if p2 < 0.0 else 0.0


@njit(nogil=True)
def _rk4(system, t0, y0, step, n_steps, m, p0, p1, p2, guard):
    """Classical Runge-Kutta on a first order system.

    Returns the states, their derivatives and the number of valid samples, which is
    smaller than n_steps + 1 when the first `m` entries leave the guard."""
    d = y0.size
    ys = np.empty((n_steps + 1, d))
    dys = np.empty((n_steps + 1, d))
    k1 = np.empty(d)
    k2 = np.empty(d)
    k3 = np.empty(d)
    k4 = np.empty(d)
    tmp = np.empty(d)
    ys[0] = y0
    _deriv(system, t0, ys[0], dys[0], m, p0, p1, p2)
    for i in range(n_steps):
        t = t0 + i * step
        y = ys[i]
        k1[:] = dys[i]
        for j in range(d):
            tmp[j] = y[j] + 0.5 * step * k1[j]
        _deriv(system, t + 0.5 * step, tmp, k2, m, p0, p1, p2)
        for j in range(d):
            tmp[j] = y[j] + 0.5 * step * k2[j]
        _deriv(system, t + 0.5 * step, tmp, k3, m, p0, p1, p2)
        for j in range(d):
            tmp[j] = y[j] + step * k3[j]
        _deriv(system, t + step, tmp, k4, m, p0, p1, p2)
        norm = 0.0
        finite = True
        for j in range(d):
            ys[i + 1, j] = y[j] + step / 6.0 * (k1[j] + 2.0 * (k2[j] + k3[j]) + k4[j])
            if not np.isfinite(ys[i + 1, j]):
                finite = False
        for j in range(m):
            norm += ys[i + 1, j] * ys[i + 1, j]
        if not finite or math.sqrt(norm) > guard:
            return ys, dys, i + 1
        _deriv(system, t0 + (i + 1) * step, ys[i + 1], dys[i + 1], m, p0, p1, p2)
    return ys, dys, n_steps + 1


@njit(nogil=True)
def _derivatives(system, ts, ys, m, p0, p1, p2):
    out = np.empty_like(ys)
    for i in range(ts.size):
        _deriv(system, ts[i], ys[i], out[i], m, p0, p1, p2)
    return out


@dataclass(frozen=True, eq=False)
class RadialState:
    t: float
    v: np.ndarray = field(repr=False)
    dv: np.ndarray = field(repr=False)

    def __repr__(self) -> str:
        return f"RadialState(t={self.t:.6g}, v={self.v.tolist()}, dv={self.dv.tolist()})"


class RadialTrajectory:
    """Sampled orbit t -> (v(t), v'(t)) on a uniform grid.

    Parameters
    ----------
    params : ProblemParams
        Parameters of the system that produced the orbit.
    h : float
        Grid spacing (positive). The grid runs backwards when `t[1] < t[0]`.
    t : numpy array
        Sample times, shape (N,).
    v, dv, ddv : numpy arrays
        Values and first two derivatives, shape (N, m).
    system : str (default='radial')
        One of 'radial', 'lower_critical', 'fowler' or 'spiral'.
    negative_component : bool (default=False)
        Whether some component went below zero.
    """

    def __init__(
        self,
        params: ProblemParams,
        h: float,
        t: np.ndarray,
        v: np.ndarray,
        dv: np.ndarray,
        ddv: np.ndarray,
        system: str = "radial",
        negative_component: bool = False,
        kernel: Optional[Tuple[int, float, float, float]] = None,
    ):
        if system not in ("radial", "lower_critical", "fowler", "spiral"):
            raise ValidationError("Unknown trajectory system.", {"system": system})
        self.params = params
        self.h = float(h)
        self.t = t
        self.v = v
        self.dv = dv
        self.ddv = ddv
        self.system = system
        self.negative_component = negative_component
        self._kernel = kernel
        for arr in (t, v, dv, ddv):
            arr.setflags(write=False)

    @property
    def m(self) -> int:
        return self.v.shape[1]

    @property
    def step(self) -> float:
        """Signed grid spacing."""
        if self.t.size > 1 and self.t[1] < self.t[0]:
            return -self.h
        return self.h

    @property
    def span(self) -> Tuple[float, float]:
        return float(self.t.min()), float(self.t.max())

    def __len__(self) -> int:
        return self.t.size

    def __getitem__(self, idx: int) -> RadialState:
        return RadialState(float(self.t[idx]), self.v[idx].copy(), self.dv[idx].copy())

    @property
    def states(self):
        return [self[i] for i in range(len(self))]

    @property
    def final_state(self) -> RadialState:
        return self[len(self) - 1]

    def __repr__(self) -> str:
        lo, hi = self.span
        return (
            f"{self.__class__.__name__}(system={self.system!r}, m={self.m}, "
            f"h={self.h:g}, span=[{lo:g}, {hi:g}], n_samples={len(self)})"
        )

    @cached_property
    def _splines(self) -> Tuple[CubicHermiteSpline, CubicHermiteSpline]:
        # abscissae must increase
        order = slice(None, None, -1) if self.step < 0 else slice(None)
        t = self.t[order]
        return (
            CubicHermiteSpline(t, self.v[order], self.dv[order], axis=0),
            CubicHermiteSpline(t, self.dv[order], self.ddv[order], axis=0),
        )

    def _interp(self, t, which: int) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        lo, hi = self.span
        slack = 1e-12 * max(1.0, abs(lo), abs(hi))
        if (t < lo - slack).any() or (t > hi + slack).any():
            raise RangeError(
                "Time outside the trajectory span.",
                {"t": t.tolist(), "span": [lo, hi]},
            )
        if len(self) == 1:
            y = (self.v, self.dv)[which]
            return np.broadcast_to(y[0], t.shape + y.shape[1:]).copy()
        return self._splines[which](np.clip(t, lo, hi))

    def value(self, t) -> np.ndarray:
        """Cubic Hermite interpolation of v, shape (..., m)."""
        return self._interp(t, 0)

    def derivative(self, t) -> np.ndarray:
        return self._interp(t, 1)

    def at(self, t: float) -> RadialState:
        return RadialState(float(t), self.value(t), self.derivative(t))

    def __call__(self, t) -> np.ndarray:
        return self.value(t)

    def to_frame(self) -> pd.DataFrame:
        """Samples as a frame with columns t, v_1..v_m, dv_1..dv_m."""
        data = {"t": self.t}
        for i in range(self.m):
            data[f"v_{i + 1}"] = self.v[:, i]
        for i in range(self.m):
            data[f"dv_{i + 1}"] = self.dv[:, i]
        return pd.DataFrame(data)


def _as_state(x: Sequence[float], m: int, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64).ravel()
    if arr.size != m:
        raise ValidationError(f"{name} must have {m} components.", {name: arr.tolist()})
    if not np.isfinite(arr).all():
        raise ValidationError(f"{name} must be finite.", {name: arr.tolist()})
    return arr


def _grid(t0: float, t1: float, h: float) -> Tuple[float, int]:
    if not h > 0 or not math.isfinite(h):
        raise ConfigurationError("The step must be positive.", {"h": h})
    if t1 == t0:
        raise ConfigurationError("The time span is empty.", {"t_span": [t0, t1]})
    n_steps = int(round(abs(t1 - t0) / h))
    if n_steps < 1:
        raise ConfigurationError(
            "The step is larger than the time span.", {"h": h, "t_span": [t0, t1]}
        )
    return math.copysign(h, t1 - t0), n_steps


def _run_kernel(
    kernel: Tuple[int, float, float, float],
    t0: float,
    y0: np.ndarray,
    step: float,
    n_steps: int,
    m: int,
    guard: float,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    system, p0, p1, p2 = kernel
    if np.linalg.norm(y0[:m]) > guard:
        raise DivergenceError(
            "The initial state is beyond the blowup guard.",
            context={"guard": guard, "v0": y0[:m].tolist()},
        )
    ys, dys, n_valid = _rk4(system, t0, y0, step, n_steps, m, p0, p1, p2, guard)
    ts = t0 + step * np.arange(n_steps + 1)
    if n_valid < n_steps + 1:
        last = n_valid - 1
        raise DivergenceError(
            f"The orbit left the blowup guard |v| <= {guard:.6g} after t={ts[last]:.6g}.",
            last_state=RadialState(float(ts[last]), ys[last, :m].copy(), ys[last, m : 2 * m].copy()),
            context={"guard": guard, "t": float(ts[last]), "step": last},
        )
    return ts, ys, dys


def _check_sign(v: np.ndarray) -> bool:
    negative = bool((v < NEGATIVE_TOL).any())
    if negative:
        warnings.warn(
            f"A component of the orbit became negative (min={v.min():.3g}).",
            NegativeComponentWarning,
        )
    return negative


def integrate_radial(
    params: ProblemParams,
    v0: Sequence[float],
    dv0: Sequence[float],
    t_span: Tuple[float, float],
    h: float = DEFAULT_STEP,
) -> RadialTrajectory:
    """Integrate v'' = -mu v' + lambda v - |v|^(alpha-1) v with fixed step RK4.

    The grid is t0 + k*h, k = 0..round(|t1-t0|/h), running backwards when t1 < t0.
    Raises `DivergenceError` when |v| exceeds ten times the a priori amplitude."""
    m = params.m
    v0 = _as_state(v0, m, "v0")
    dv0 = _as_state(dv0, m, "dv0")
    t0, t1 = map(float, t_span)
    step, n_steps = _grid(t0, t1, h)
    c = derive_constants(params)
    kernel = (_RADIAL, c.lambda_, c.mu, params.alpha)
    guard = GUARD_FACTOR * apriori_amplitude(params)
    ts, ys, dys = _run_kernel(kernel, t0, np.concatenate([v0, dv0]), step, n_steps, m, guard)
    v, dv, ddv = ys[:, :m], ys[:, m:], dys[:, m:]
    return RadialTrajectory(
        params,
        h,
        ts,
        v,
        dv,
        ddv,
        system="radial",
        negative_component=_check_sign(v),
        kernel=kernel,
    )


def lower_critical_threshold(n: int) -> float:
    """Time (2n-3)/(2n-4) beyond which the lower-critical energy is non-increasing."""
    return (2 * n - 3) / (2 * n - 4)


def integrate_lower_critical(
    n: int,
    m: int,
    phi0: Sequence[float],
    dphi0: Sequence[float],
    t0: float,
    t1: float,
    h: float = DEFAULT_STEP,
) -> RadialTrajectory:
    """Integrate the radial lower-critical system

    phi'' = -(n-2)(1-1/t) phi' + (n-2)/(2t) (n-2-n/(2t)) phi - |phi|^(2/(n-2)) phi / t

    on the grid t0 + k*h. Both ends must lie beyond `lower_critical_threshold(n)`."""
    params = ProblemParams.serrin(n, m)
    threshold = lower_critical_threshold(n)
    if min(t0, t1) <= threshold:
        raise ConfigurationError(
            f"The lower-critical system needs t > {threshold:.6g}.",
            {"t0": t0, "t1": t1, "threshold": threshold},
        )
    phi0 = _as_state(phi0, m, "phi0")
    dphi0 = _as_state(dphi0, m, "dphi0")
    step, n_steps = _grid(float(t0), float(t1), h)
    kernel = (_LOWER_CRITICAL, float(n), 0.0, 0.0)
    guard = GUARD_FACTOR * apriori_amplitude(params)
    ts, ys, dys = _run_kernel(
        kernel, float(t0), np.concatenate([phi0, dphi0]), step, n_steps, m, guard
    )
    v, dv, ddv = ys[:, :m], ys[:, m:], dys[:, m:]
    return RadialTrajectory(
        params,
        h,
        ts,
        v,
        dv,
        ddv,
        system="lower_critical",
        negative_component=_check_sign(v),
        kernel=kernel,
    )


def cylindrical_residual(traj: RadialTrajectory) -> np.ndarray:
    """Residual of the stored samples in their second order system, shape (N-4, m).

    v'' is recovered from the samples by fourth order central differences."""
    if len(traj) < 5:
        raise ValidationError("At least 5 samples are needed.", {"n_samples": len(traj)})
    v = traj.v
    h = traj.h
    second = (-v[4:] + 16 * v[3:-1] - 30 * v[2:-2] + 16 * v[1:-3] - v[:-4]) / (12 * h * h)
    return second - traj.ddv[2:-2]


def restep_error(traj: RadialTrajectory, i: int) -> float:
    """Local error estimate at sample `i`: one step versus two half steps."""
    if traj._kernel is None:
        raise CapabilityError("The trajectory carries no integrator.")
    if not 0 <= i < len(traj) - 1:
        raise RangeError("Index outside the trajectory.", {"i": i, "n_samples": len(traj)})
    system, p0, p1, p2 = traj._kernel
    m = traj.m
    y0 = np.concatenate([traj.v[i], traj.dv[i]])
    if system == _FOWLER:
        y0 = np.append(y0, 0.0)
    t0 = float(traj.t[i])
    step = traj.step
    full, _, _ = _rk4(system, t0, y0, step, 1, m, p0, p1, p2, np.inf)
    half, _, _ = _rk4(system, t0, y0, step / 2, 2, m, p0, p1, p2, np.inf)
    return float(np.abs(full[-1, : 2 * m] - half[-1, : 2 * m]).max())


def trajectory_field(traj: RadialTrajectory) -> FieldEvaluator:
    """The radial solution u(x) = |x|^(-2/(alpha-1)) v(-log|x|) on the annulus the orbit covers."""
    if traj.system == "lower_critical":
        raise CapabilityError("Only cylindrical orbits define a field through from_cylindrical.")
    c = derive_constants(traj.params)
    return cylindrical_field(
        traj.value,
        c,
        dv=traj.derivative,
        radial=True,
        t_range=traj.span,
        name=f"{traj.system}_orbit",
    )
