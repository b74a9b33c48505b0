__all__ = [
    'DEFAULT_TOL',
    'Tag',
    'AsymptoticLaw',
    'SingularityClass',
    'Evidence',
    'classify_critical',
    'classify_subcritical',
    'classify_by_regime',
    'fit_power_law',
    'classify_field',
]

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np

from .core import (
    DerivedConstants,
    ProblemParams,
    Regime,
    SphereQuadrature,
    build_sphere_quadrature,
    critical_kappa_floor,
    derive_constants,
    lower_critical_amplitude,
    lower_critical_energy_levels,
)
from .errors import (
    ConfigurationError,
    InadmissibleError,
    InconsistencyError,
    RangeError,
    RegimeError,
    ValidationError,
)
from .families import FowlerData, _admissibility_violation, fowler_roots
from .invariants import estimate_phi_limit, phi_star_surface, phi_surface
from .transforms import FieldEvaluator

DEFAULT_TOL = 1e-6
DEFAULT_RADII = (1e-3, 3e-3, 1e-2, 3e-2, 1e-1)


class Tag(str, Enum):
    TRIVIAL = "Trivial"
    REMOVABLE = "Removable"
    SUBCRITICAL_SINGULAR = "SubcriticalSingular"
    CRITICAL_OSCILLATORY = "CriticalOscillatory"
    CRITICAL_HOMOGENEOUS = "CriticalHomogeneous"
    WEAK_SINGULAR = "WeakSingular"
    LOWER_CRITICAL_SINGULAR = "LowerCriticalSingular"


@dataclass(frozen=True)
class AsymptoticLaw:
    """|u(x)| ~ constant * |x|^exponent * (-log|x|)^log_exponent as x -> 0.

    `constant` is None when it depends on the solution and was not measured.
    `band` holds the oscillation band [rho_min, rho_max] of |x|^((n-2)/2) |u| for
    critical oscillatory singularities."""

    exponent: float
    constant: Optional[float]
    log_exponent: float = 0.0
    solution_dependent: bool = False
    band: Optional[Tuple[float, float]] = None


@dataclass(frozen=True)
class SingularityClass:
    tag: Tag
    law: Optional[AsymptoticLaw] = None

    def to_dict(self):
        law = self.law
        out = {
            "tag": self.tag.value,
            "exponent": None if law is None else law.exponent,
            "constant": None if law is None else law.constant,
            "log_exponent": None if law is None else law.log_exponent,
            "solution_dependent": False if law is None else law.solution_dependent,
        }
        if law is not None and law.band is not None:
            out["band"] = list(law.band)
        return out


@dataclass(frozen=True)
class Evidence:
    """Measurements a classification can rest on; which ones are needed depends on the regime."""

    kappa: Optional[float] = None
    kappa_star: Optional[float] = None
    phi_limit: Optional[float] = None
    amplitude: Optional[float] = None
    energy_limit: Optional[float] = None


def _fowler_band(n: int, kappa: float, kappa_star: float) -> Optional[Tuple[float, float]]:
    floor = critical_kappa_floor(n)
    try:
        data = fowler_roots(n, max(kappa, floor), min(kappa_star, 0.0))
    except RangeError:
        return None
    if isinstance(data, FowlerData):
        return data.rho_min, data.rho_max
    if data.reason == "double_root":
        return data.roots[0], data.roots[0]
    return None


def classify_critical(
    kappa: float, kappa_star: float, n: int, tol: float = DEFAULT_TOL
) -> SingularityClass:
    """Classify an isolated singularity at the critical exponent from its two invariants."""
    violated = _admissibility_violation(n, kappa, kappa_star, tol)
    if violated is not None:
        raise InadmissibleError(
            f"Invariant pair violates {violated}.",
            {"n": n, "kappa": kappa, "kappa_star": kappa_star, "bound": violated},
        )
    if abs(kappa) <= tol and abs(kappa_star) <= tol:
        return SingularityClass(Tag.REMOVABLE)
    k = (n - 2) / 2
    if abs(kappa - critical_kappa_floor(n)) <= tol and abs(kappa_star) <= tol:
        return SingularityClass(Tag.CRITICAL_HOMOGENEOUS, AsymptoticLaw(-k, k**k, 0.0))
    return SingularityClass(
        Tag.CRITICAL_OSCILLATORY,
        AsymptoticLaw(
            -k,
            None,
            0.0,
            solution_dependent=True,
            band=_fowler_band(n, kappa, kappa_star),
        ),
    )


def classify_subcritical(
    phi_limit: float, params: ProblemParams, tol: float = DEFAULT_TOL
) -> SingularityClass:
    """Classify from the limit of Phi at the origin, which is either 0 or -lambda_bar."""
    c = derive_constants(params)
    if c.regime is not Regime.INTERMEDIATE:
        raise RegimeError(
            "The Phi limit rule applies to n/(n-2) < alpha < (n+2)/(n-2).",
            {"n": params.n, "alpha": params.alpha, "regime": c.regime.value},
        )
    if abs(phi_limit) <= tol:
        return SingularityClass(Tag.REMOVABLE)
    if abs(phi_limit + c.lambda_bar) <= tol:
        return SingularityClass(
            Tag.SUBCRITICAL_SINGULAR,
            AsymptoticLaw(-c.scaling_exponent, c.lambda_ ** (1 / (params.alpha - 1)), 0.0),
        )
    raise InconsistencyError(
        f"Phi(0+) = {phi_limit:.10g} is neither 0 nor -lambda_bar = {-c.lambda_bar:.10g}.",
        {"phi_limit": phi_limit, "lambda_bar": c.lambda_bar, "tol": tol},
    )


def _require(evidence: Evidence, regime: Regime, *names: str) -> None:
    missing = [name for name in names if getattr(evidence, name) is None]
    if missing:
        raise ConfigurationError(
            f"Regime {regime.value} needs evidence {missing}.",
            {"regime": regime.value, "missing": missing},
        )


def classify_by_regime(
    params: ProblemParams, evidence: Evidence, tol: float = DEFAULT_TOL
) -> SingularityClass:
    """Dispatch to the classification rule of the regime of `params`."""
    regime = params.regime
    n = params.n
    if regime is Regime.CRITICAL:
        _require(evidence, regime, "kappa", "kappa_star")
        return classify_critical(evidence.kappa, evidence.kappa_star, n, tol)
    if regime is Regime.INTERMEDIATE:
        _require(evidence, regime, "phi_limit")
        return classify_subcritical(evidence.phi_limit, params, tol)
    if regime is Regime.BELOW_SERRIN:
        _require(evidence, regime, "amplitude")
        if abs(evidence.amplitude) <= tol:
            return SingularityClass(Tag.REMOVABLE)
        return SingularityClass(
            Tag.WEAK_SINGULAR,
            AsymptoticLaw(2.0 - n, float(evidence.amplitude), 0.0, solution_dependent=True),
        )
    _require(evidence, regime, "energy_limit")
    regular, singular = lower_critical_energy_levels(n)
    energy = evidence.energy_limit
    if abs(energy - regular) <= tol:
        return SingularityClass(Tag.REMOVABLE)
    if abs(energy - singular) <= tol:
        return SingularityClass(
            Tag.LOWER_CRITICAL_SINGULAR,
            AsymptoticLaw(2.0 - n, lower_critical_amplitude(n), (2.0 - n) / 2),
        )
    raise InconsistencyError(
        f"E(infinity) = {energy:.10g} is neither 0 nor {singular:.10g}.",
        {"energy_limit": energy, "levels": [regular, singular], "tol": tol},
    )


def fit_power_law(
    radii: Sequence[float], amplitudes: Sequence[float], exponent: Optional[float] = None
) -> Tuple[float, float]:
    """Least squares fit of log a = log c + p log r over the innermost decade of radii.

    With `exponent` given only the constant is fitted. Returns (p, c)."""
    radii = np.asarray(radii, dtype=np.float64)
    amplitudes = np.asarray(amplitudes, dtype=np.float64)
    if radii.shape != amplitudes.shape or radii.size == 0:
        raise ValidationError(
            "radii and amplitudes must be nonempty and of the same length.",
            {"radii": radii.size, "amplitudes": amplitudes.size},
        )
    if (radii <= 0).any() or (amplitudes < 0).any():
        raise ValidationError("Radii must be positive and amplitudes nonnegative.")
    mask = radii <= 10 * radii.min()
    r, a = radii[mask], amplitudes[mask]
    if not (a > 0).any():
        return (0.0 if exponent is None else float(exponent)), 0.0
    if (a <= 0).any():
        raise ValidationError("Amplitudes in the innermost decade must all be positive.")
    logr, loga = np.log(r), np.log(a)
    if exponent is not None:
        return float(exponent), float(np.exp(np.mean(loga - exponent * logr)))
    if r.size < 2:
        raise ValidationError("Fitting the exponent needs two radii in the innermost decade.")
    slope, intercept = np.polyfit(logr, loga, 1)
    return float(slope), float(np.exp(intercept))


def _sphere_mean_norm(u: FieldEvaluator, r: float, q: SphereQuadrature) -> float:
    vals = u(r * q.nodes)
    return float(np.dot(q.weights, np.linalg.norm(vals, axis=1)) / q.weights.sum())


def _lower_critical_energy(u: FieldEvaluator, r: float, q: SphereQuadrature) -> float:
    # sphere mean of E in the variables phi(t) = e^(-(n-2)t) t^((n-2)/2) u, t = -log r
    n = u.n
    t = -np.log(r)
    x = r * q.nodes
    val = u(x)
    du_dt = -np.einsum("kij,kj->ki", u.gradient(x), x)
    factor = np.exp(-(n - 2) * t) * t ** ((n - 2) / 2)
    dfactor = factor * ((n - 2) / (2 * t) - (n - 2))
    phi = factor * val
    dphi = dfactor * val + factor * du_dt
    norm2 = np.einsum("ki,ki->k", phi, phi)
    energy = (
        t * np.einsum("ki,ki->k", dphi, dphi)
        + (n - 2) / (n - 1) * norm2 ** ((n - 1) / (n - 2))
        - (n - 2) / 2 * (n - 2 - n / (2 * t)) * norm2
    )
    return float(np.dot(q.weights, energy) / q.weights.sum())


def classify_field(
    u: FieldEvaluator,
    c: DerivedConstants,
    q: Optional[SphereQuadrature] = None,
    radii: Sequence[float] = DEFAULT_RADII,
    tol: float = DEFAULT_TOL,
) -> SingularityClass:
    """Gather the evidence of the regime of `c` from the field and classify its singularity at 0.

    At the Serrin exponent E(t) is extrapolated to t = infinity from a fit in 1/t."""
    q = build_sphere_quadrature(u.n) if q is None else q
    radii = np.sort(np.asarray(radii, dtype=np.float64).ravel())
    if radii.size == 0 or not (radii > 0).all():
        raise ValidationError("radii must be nonempty and positive.", {"radii": radii.tolist()})
    if max(_sphere_mean_norm(u, r, q) for r in radii) == 0:
        return SingularityClass(Tag.TRIVIAL)
    regime = c.regime
    if regime is Regime.CRITICAL:
        pairs = []
        for r in radii[:2]:
            kappa = phi_surface(u, float(r), c, q)
            pairs.append((kappa, phi_star_surface(u, float(r), kappa, c, q)))
        kappa, kappa_star = pairs[0]
        drift = max(abs(kappa - k) for k, _ in pairs), max(abs(kappa_star - ks) for _, ks in pairs)
        if max(drift) > tol:
            raise InconsistencyError(
                "Phi and Phi* are not constant in r, the field is not a critical solution.",
                {"radii": radii[:2].tolist(), "kappa_drift": drift[0], "kappa_star_drift": drift[1]},
            )
        evidence = Evidence(kappa=kappa, kappa_star=kappa_star)
    elif regime is Regime.INTERMEDIATE:
        evidence = Evidence(phi_limit=estimate_phi_limit(u, c, q, radii)[0])
    elif regime is Regime.BELOW_SERRIN:
        amps = [_sphere_mean_norm(u, r, q) for r in radii]
        evidence = Evidence(amplitude=fit_power_law(radii, amps, exponent=2.0 - u.n)[1])
    else:
        if not (radii < 1).all():
            raise ValidationError(
                "The energy is sampled at radii below 1.", {"radii": radii.tolist()}
            )
        inv_t = 1.0 / -np.log(radii)
        energies = [_lower_critical_energy(u, r, q) for r in radii]
        _, limit = np.polyfit(inv_t, energies, 1)
        evidence = Evidence(energy_limit=float(limit))
    return classify_by_regime(c.params, evidence, tol)
