__all__ = [
    'TAIL_FLOOR',
    'InvariantReport',
    'psi',
    'psi_series',
    'psi_star_series',
    'angular_momenta',
    'kappa_of',
    'phi_surface',
    'phi_derivative_surface',
    'phi_star_surface',
    'estimate_phi_limit',
    'energy_E',
    'energy_E_series',
    'energy_E_derivative',
    'angular_discrepancy',
    'pohozaev_closure',
    'check_critical_bounds',
    'drift_frame',
]

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.integrate import simpson

from .core import DerivedConstants, Regime, SphereQuadrature, derive_constants, integrate_sphere
from .dynamics import RadialTrajectory
from .errors import CapabilityError, ConfigurationError, ConvergenceWarning, RegimeError
from .families import _admissibility_violation
from .transforms import FieldEvaluator

TAIL_FLOOR = 1e-4
TAIL_REFINED_FLOOR = 1e-5
TAIL_TOL = 1e-11
TAIL_AGREEMENT = 1e-8
TAIL_MIN_INTERVALS = 32
TAIL_MAX_INTERVALS = 4096
MIN_NORM = 1e-6


@dataclass(frozen=True, eq=False)
class InvariantReport:
    """Pohozaev invariants of a critical radial orbit.

    `kappa` and `kappa_star` are means over the samples, the drifts are the largest
    deviations from the first sample, and `identity_gap` is kappa_star + sum_{i<j} k_ij^2."""

    kappa: float
    kappa_star: float
    k: np.ndarray = field(repr=False)
    kappa_drift: float
    kstar_drift: float
    k_drift: float
    identity_gap: float

    def to_dict(self):
        return {
            "kappa": self.kappa,
            "kappa_star": self.kappa_star,
            "k": self.k.tolist(),
            "kappa_drift": self.kappa_drift,
            "kstar_drift": self.kstar_drift,
            "k_drift": self.k_drift,
            "identity_gap": self.identity_gap,
        }


def _cylindrical(traj: RadialTrajectory) -> DerivedConstants:
    if traj.system == "lower_critical":
        raise ConfigurationError(
            "This functional is defined on cylindrical orbits, not on the lower-critical system."
        )
    return derive_constants(traj.params)


def _lower_critical(traj: RadialTrajectory) -> int:
    if traj.system != "lower_critical":
        raise ConfigurationError(
            "The energy E is defined on lower-critical orbits.", {"system": traj.system}
        )
    return traj.params.n


def _states(traj: RadialTrajectory, t=None):
    if t is None:
        return traj.t, traj.v, traj.dv
    return np.asarray(t, dtype=np.float64), traj.value(t), traj.derivative(t)


def _psi(c: DerivedConstants, v: np.ndarray, dv: np.ndarray) -> np.ndarray:
    norm2 = np.einsum("...i,...i->...", v, v)
    alpha = c.alpha
    return (
        np.einsum("...i,...i->...", dv, dv)
        - c.lambda_ * norm2
        + 2 / (alpha + 1) * norm2 ** ((alpha + 1) / 2)
    )


def psi(traj: RadialTrajectory, t: float) -> float:
    """Psi = |v'|^2 - lambda |v|^2 + 2/(alpha+1) |v|^(alpha+1), interpolated at t."""
    c = _cylindrical(traj)
    _, v, dv = _states(traj, t)
    return float(_psi(c, v, dv))


def psi_series(traj: RadialTrajectory) -> np.ndarray:
    c = _cylindrical(traj)
    return _psi(c, traj.v, traj.dv)


def psi_star_series(traj: RadialTrajectory, kappa: Optional[float] = None) -> np.ndarray:
    """Psi* = g'^2/4 - (n-2)^2/4 g^2 - kappa g + (n-2)/n g^((2n-2)/(n-2)) with g = |v|^2.

    `kappa` defaults to the mean of Psi along the orbit."""
    c = _cylindrical(traj)
    n = c.n
    if kappa is None:
        kappa = float(_psi(c, traj.v, traj.dv).mean())
    g = np.einsum("ij,ij->i", traj.v, traj.v)
    dg = 2 * np.einsum("ij,ij->i", traj.v, traj.dv)
    return (
        dg**2 / 4
        - (n - 2) ** 2 / 4 * g**2
        - kappa * g
        + (n - 2) / n * g ** ((2 * n - 2) / (n - 2))
    )


def angular_momenta(traj: RadialTrajectory) -> np.ndarray:
    """k_ij(t) = v_i v_j' - v_j v_i' at every sample, shape (N, m, m).

    A scalar orbit has no angular momenta and gives shape (N, 0, 0)."""
    if traj.m == 1:
        return np.zeros((len(traj), 0, 0))
    outer = traj.v[:, :, None] * traj.dv[:, None, :]
    return outer - np.transpose(outer, (0, 2, 1))


def _pair_squares(k: np.ndarray) -> np.ndarray:
    iu = np.triu_indices(k.shape[-1], 1)
    return (k[..., iu[0], iu[1]] ** 2).sum(axis=-1)


def kappa_of(traj: RadialTrajectory) -> InvariantReport:
    """First and second Pohozaev invariants and angular momenta of a critical orbit."""
    c = _cylindrical(traj)
    if c.regime is not Regime.CRITICAL:
        raise RegimeError(
            "The Pohozaev invariants are conserved only at the critical exponent.",
            {"n": c.n, "alpha": c.alpha, "regime": c.regime.value},
        )
    lo, hi = traj.span
    if hi - lo < 1.0:
        raise ConfigurationError(
            "The orbit must span at least one time unit.", {"span": [lo, hi]}
        )
    psi_s = _psi(c, traj.v, traj.dv)
    kappa = float(psi_s.mean())
    pstar = psi_star_series(traj, kappa)
    kappa_star = float(pstar.mean())
    ks = angular_momenta(traj)
    k_mean = ks.mean(axis=0)
    k = 0.5 * (k_mean - k_mean.T)
    return InvariantReport(
        kappa=kappa,
        kappa_star=kappa_star,
        k=k,
        kappa_drift=float(np.abs(psi_s - psi_s[0]).max()),
        kstar_drift=float(np.abs(pstar - pstar[0]).max()),
        k_drift=float(np.abs(ks - ks[0]).max()) if traj.m > 1 else 0.0,
        identity_gap=float(kappa_star + _pair_squares(k)),
    )


def drift_frame(traj: RadialTrajectory, report: Optional[InvariantReport] = None) -> pd.DataFrame:
    """Series t, psi, psi_star, k_ij (i<j) along the orbit."""
    kappa = None if report is None else report.kappa
    data = {"t": traj.t, "psi": psi_series(traj), "psi_star": psi_star_series(traj, kappa)}
    ks = angular_momenta(traj)
    for i in range(traj.m):
        for j in range(i + 1, traj.m):
            data[f"k_{i + 1}{j + 1}"] = ks[:, i, j]
    return pd.DataFrame(data)


def _sphere_data(u: FieldEvaluator, r: float, q: SphereQuadrature):
    if q.n != u.n:
        raise ConfigurationError(
            "The quadrature dimension does not match the field.", {"q_n": q.n, "n": u.n}
        )
    if not u.has_gradient:
        raise CapabilityError(f"The field {u.name!r} has no gradient.", {"field": u.name})
    x = r * q.nodes
    val = u(x)
    grad = u.gradient(x)
    radial_derivative = np.einsum("kij,kj->ki", grad, q.nodes)
    return val, grad, radial_derivative


def phi_surface(
    u: FieldEvaluator, r: float, c: DerivedConstants, q: SphereQuadrature
) -> float:
    """Balanced energy Phi(r, u) on the sphere of radius r.

    The normal derivative points towards the origin, d/dnu = -d/dr."""
    val, grad, du_r = _sphere_data(u, r, q)
    p = c.scaling_exponent
    mu = c.mu
    n = c.n
    area = c.sphere_area
    normal_part = -du_r - p * val / r
    tangential = np.einsum("kij,kij->k", grad, grad) - np.einsum("ki,ki->k", du_r, du_r)
    norm2 = np.einsum("ki,ki->k", val, val)
    first = integrate_sphere(q, np.einsum("ki,ki->k", normal_part, normal_part) - tangential)
    second = integrate_sphere(q, norm2 ** ((c.alpha + 1) / 2))
    third = integrate_sphere(q, norm2)
    scale = r ** (n - 1) / area
    return float(
        r ** (mu + 1) * scale * first
        + 2 * r ** (mu + 1) / (c.alpha + 1) * scale * second
        - c.lambda_ * r ** (mu - 1) * scale * third
    )


def phi_derivative_surface(
    u: FieldEvaluator, r: float, c: DerivedConstants, q: SphereQuadrature
) -> float:
    """dPhi/dr = 2 mu r^mu / (n omega_n) * integral over the sphere of |du/dnu - 2u/((alpha-1)r)|^2."""
    val, _, du_r = _sphere_data(u, r, q)
    normal_part = -du_r - c.scaling_exponent * val / r
    total = integrate_sphere(q, np.einsum("ki,ki->k", normal_part, normal_part))
    return float(2 * c.mu * r**c.mu * r ** (c.n - 1) / c.sphere_area * total)


def _phi_star_terms(u: FieldEvaluator, rho: float, c: DerivedConstants, q: SphereQuadrature):
    # f, rho*f', mean tangential energy, mean |u|^(2n/(n-2)) (sphere of radius rho)
    n = c.n
    val, grad, du_r = _sphere_data(u, rho, q)
    norm2 = np.einsum("ki,ki->k", val, val)
    scale = rho ** (n - 1) / c.sphere_area
    f = rho ** (n - 2) / c.sphere_area * integrate_sphere(q, norm2)
    rho_fdot = -2 * scale * integrate_sphere(
        q, np.einsum("ki,ki->k", val, -du_r) - (n - 2) / (2 * rho) * norm2
    )
    tangential = np.einsum("kij,kij->k", grad, grad) - np.einsum("ki,ki->k", du_r, du_r)
    tang = scale * integrate_sphere(q, tangential)
    crit = scale * integrate_sphere(q, norm2 ** (n / (n - 2)))
    return f, rho_fdot, tang, crit


def _tail_integrand(u, rho, c, q) -> float:
    n = c.n
    f, rho_fdot, tang, crit = _phi_star_terms(u, rho, c, q)
    fdot = rho_fdot / rho
    t1 = rho * tang * fdot
    t2 = (rho * crit - f ** (n / (n - 2))) * fdot
    # d rho = rho ds
    return rho * (-2 * t1 + (2 * n - 2) / n * t2)


def _log_simpson(func, lo: float, hi: float) -> Tuple[float, bool]:
    # composite Simpson in s = log(rho), doubling the intervals with nested reuse
    s0, s1 = np.log(lo), np.log(hi)
    n_int = TAIL_MIN_INTERVALS
    s = np.linspace(s0, s1, n_int + 1)
    y = np.array([func(np.exp(si)) for si in s])
    estimate = simpson(y, x=s)
    while n_int < TAIL_MAX_INTERVALS:
        n_int *= 2
        s_new = np.linspace(s0, s1, n_int + 1)
        y_new = np.empty(n_int + 1)
        y_new[::2] = y
        y_new[1::2] = [func(np.exp(si)) for si in s_new[1::2]]
        refined = simpson(y_new, x=s_new)
        converged = abs(refined - estimate) < TAIL_TOL
        s, y, estimate = s_new, y_new, refined
        if converged:
            return float(estimate), True
    return float(estimate), False


def phi_star_surface(
    u: FieldEvaluator,
    r: float,
    kappa: float,
    c: DerivedConstants,
    q: SphereQuadrature,
) -> float:
    """Second Pohozaev functional Phi*(r, u) at the critical exponent.

    The two integrals over (0, r) vanish identically for radial fields. For fields that
    are regular at the origin they are integrated from `TAIL_FLOOR`; a refinement of the
    floor that changes the result by more than 1e-8 emits a `ConvergenceWarning`."""
    if c.regime is not Regime.CRITICAL:
        raise RegimeError(
            "Phi* is defined at the critical exponent.", {"n": c.n, "alpha": c.alpha}
        )
    if not (u.radial or u.regular_at_origin):
        raise CapabilityError(
            "Phi* needs a radial field or a field regular at the origin.",
            {"field": u.name},
        )
    n = c.n
    f, rho_fdot, _, _ = _phi_star_terms(u, r, c, q)
    local = (
        rho_fdot**2 / 4
        - (n - 2) ** 2 / 4 * f**2
        - kappa * f
        + (n - 2) / n * f ** ((2 * n - 2) / (n - 2))
    )
    if u.radial or r <= TAIL_FLOOR:
        return float(local)

    def integrand(rho):
        return _tail_integrand(u, rho, c, q)

    tail, converged = _log_simpson(integrand, TAIL_FLOOR, r)
    extra, extra_converged = _log_simpson(integrand, TAIL_REFINED_FLOOR, TAIL_FLOOR)
    if not (converged and extra_converged):
        warnings.warn(
            f"The Phi* tail integral did not converge within {TAIL_MAX_INTERVALS} intervals.",
            ConvergenceWarning,
        )
    if abs(extra) > TAIL_AGREEMENT:
        warnings.warn(
            f"Lowering the Phi* tail floor changed the result by {abs(extra):.3g}.",
            ConvergenceWarning,
        )
    return float(local + tail + extra)


def estimate_phi_limit(
    u: FieldEvaluator, c: DerivedConstants, q: SphereQuadrature, radii: Sequence[float]
) -> Tuple[float, float]:
    """Limit of Phi(r, u) as r -> 0 along `radii` (equivalently Phi(1, u_r)).

    Returns the value at the smallest radius and the largest deviation from it."""
    radii = np.sort(np.asarray(radii, dtype=np.float64))
    values = np.array([phi_surface(u, r, c, q) for r in radii])
    limit = float(values[0])
    return limit, float(np.abs(values - limit).max())


def _energy(n: int, t, phi: np.ndarray, dphi: np.ndarray) -> np.ndarray:
    norm2 = np.einsum("...i,...i->...", phi, phi)
    return (
        t * np.einsum("...i,...i->...", dphi, dphi)
        + (n - 2) / (n - 1) * norm2 ** ((n - 1) / (n - 2))
        - (n - 2) / 2 * (n - 2 - n / (2 * t)) * norm2
    )


def energy_E(traj: RadialTrajectory, t: float) -> float:
    """E = t|phi'|^2 + (n-2)/(n-1)|phi|^((2n-2)/(n-2)) - (n-2)/2 (n-2-n/(2t))|phi|^2."""
    n = _lower_critical(traj)
    t, phi, dphi = _states(traj, t)
    return float(_energy(n, t, phi, dphi))


def energy_E_series(traj: RadialTrajectory) -> np.ndarray:
    n = _lower_critical(traj)
    return _energy(n, traj.t, traj.v, traj.dv)


def energy_E_derivative(traj: RadialTrajectory, t=None):
    """dE/dt = -((2n-4)t - 2n + 3)|phi'|^2 - n(n-2)/(4t^2)|phi|^2, at t or at every sample."""
    n = _lower_critical(traj)
    t, phi, dphi = _states(traj, t)
    out = -((2 * n - 4) * t - 2 * n + 3) * np.einsum(
        "...i,...i->...", dphi, dphi
    ) - n * (n - 2) / (4 * t * t) * np.einsum("...i,...i->...", phi, phi)
    return float(out) if np.ndim(out) == 0 else out


def angular_discrepancy(traj: RadialTrajectory) -> Tuple[np.ndarray, np.ndarray]:
    """Both sides of |v'|^2 - (d|v|/dt)^2 = sum_{i<j} k_ij^2 / |v|^2.

    Samples with |v| <= 1e-6 are NaN."""
    v, dv = traj.v, traj.dv
    norm = np.linalg.norm(v, axis=1)
    ok = norm > MIN_NORM
    safe = np.where(ok, norm, 1.0)
    dnorm = np.einsum("ij,ij->i", v, dv) / safe
    lhs = np.einsum("ij,ij->i", dv, dv) - dnorm**2
    rhs = _pair_squares(angular_momenta(traj)) / safe**2
    return np.where(ok, lhs, np.nan), np.where(ok, rhs, np.nan)


def pohozaev_closure(traj: RadialTrajectory, kappa: float, kappa_star: float) -> np.ndarray:
    """(d|v|/dt)^2 - Q(|v|) along the orbit; NaN where |v| <= 1e-6."""
    c = _cylindrical(traj)
    n = c.n
    v, dv = traj.v, traj.dv
    norm = np.linalg.norm(v, axis=1)
    ok = norm > MIN_NORM
    safe = np.where(ok, norm, 1.0)
    dnorm = np.einsum("ij,ij->i", v, dv) / safe
    q = (
        (n - 2) ** 2 / 4 * safe**2
        - (n - 2) / n * safe ** (2 * n / (n - 2))
        + kappa
        + kappa_star / safe**2
    )
    return np.where(ok, dnorm**2 - q, np.nan)


def check_critical_bounds(n: int, kappa: float, kappa_star: float, tol: float = 1e-8) -> bool:
    """Whether (kappa, kappa_star) satisfies both lower bounds and kappa_star <= 0 within tol."""
    return _admissibility_violation(n, kappa, kappa_star, tol) is None
