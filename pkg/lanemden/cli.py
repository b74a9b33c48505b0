"""Command line interface: `lanemden <command> [options]`.

Commands
    constants       derived constants of (n, alpha)
    family          sample a closed-form solution (CSV)
    simulate        integrate the radial or lower-critical system (CSV)
    invariants      Pohozaev invariants of a critical orbit (JSON, optional drift CSV)
    classify        classify the singularity from evidence or a family (JSON)
    sweep           grid over (kappa, kappa_star) or alpha (JSON lines)
    residual-check  finite-difference residual of a family (JSON)

Exit status is 0 on success, 1 on numerical failure and 2 on usage errors.
"""

__all__ = ['COMMANDS', 'FAMILIES', 'RunConfig', 'parse_config', 'run', 'main']

import argparse
import concurrent.futures
import dataclasses
import io
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, TextIO, Tuple

import numpy as np
import pandas as pd

from . import __version__
from .classify import DEFAULT_TOL, Evidence, classify_by_regime, classify_critical, classify_field
from .core import (
    DEFAULT_ORDER,
    ProblemParams,
    apriori_amplitude,
    build_sphere_quadrature,
    derive_constants,
)
from .dynamics import (
    DEFAULT_STEP,
    RadialTrajectory,
    integrate_lower_critical,
    integrate_radial,
    lower_critical_threshold,
)
from .errors import LaneEmdenError, RangeError, UsageError
from .families import (
    FowlerData,
    bubble,
    check_admissible,
    critical_homogeneous,
    fowler_roots,
    homogeneous_singular,
    lower_critical_profile,
    spiral,
)
from .invariants import drift_frame, kappa_of
from .transforms import FD_STEP, FieldEvaluator, residual
from .utils import config_hash, generate_sample_points

logger = logging.getLogger(__name__)

COMMANDS = ("constants", "family", "simulate", "invariants", "classify", "sweep", "residual-check")
FAMILIES = ("bubble", "homogeneous", "critical-homogeneous", "lower-critical-profile", "spiral")
SYSTEMS = ("radial", "lower-critical")
FLOAT_FORMAT = "%.17g"


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved options of one command line run."""

    command: str
    n: Optional[int] = None
    m: int = 1
    alpha: Optional[float] = None
    h: float = DEFAULT_STEP
    tol: float = DEFAULT_TOL
    order: int = DEFAULT_ORDER
    system: str = "radial"
    family: Optional[str] = None
    v0: Optional[Tuple[float, ...]] = None
    dv0: Optional[Tuple[float, ...]] = None
    t0: float = 0.0
    span: Optional[float] = None
    z: Optional[Tuple[float, ...]] = None
    r: float = 1.0
    e: Optional[Tuple[float, ...]] = None
    kappa: Optional[float] = None
    kappa_star: Optional[float] = None
    phi_limit: Optional[float] = None
    amplitude: Optional[float] = None
    energy_limit: Optional[float] = None
    points: int = 100
    r_min: float = 0.1
    r_max: float = 1.0
    seed: int = 0
    fd_step: float = FD_STEP
    kappa_range: Optional[Tuple[float, ...]] = None
    kappa_star_range: Optional[Tuple[float, ...]] = None
    alpha_range: Optional[Tuple[float, ...]] = None
    jobs: int = 1
    output: Optional[str] = None
    drift_output: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        out = dataclasses.asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in out.items()}

    @property
    def params(self) -> Optional[ProblemParams]:
        """Problem parameters implied by the options, None when the command needs none."""
        if self.n is None:
            return None
        if self.family in ("bubble", "critical-homogeneous", "spiral"):
            return ProblemParams.critical(self.n, 2 if self.family == "spiral" else self.m)
        if self.family == "lower-critical-profile" or (
            self.command == "simulate" and self.system == "lower-critical"
        ):
            return ProblemParams.serrin(self.n, self.m)
        if self.alpha is None:
            if self.command in ("classify", "invariants"):
                return ProblemParams.critical(self.n, self.m)
            return None
        return ProblemParams(self.n, self.m, self.alpha)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message, {"prog": self.prog})


def _floats(text: str) -> Tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got {text!r}")


def _grid_spec(text: str) -> Tuple[float, ...]:
    values = _floats(text)
    if len(values) != 3 or values[2] < 1 or values[2] != int(values[2]):
        raise argparse.ArgumentTypeError("expected start,stop,count with an integer count >= 1")
    return values


def _add_problem(p: argparse.ArgumentParser, alpha: bool = True) -> None:
    p.add_argument("--n", type=int, help="spatial dimension")
    p.add_argument("--m", type=int, default=1, help="number of components")
    if alpha:
        p.add_argument("--alpha", type=float, help="nonlinearity exponent")


def _add_family(p: argparse.ArgumentParser) -> None:
    p.add_argument("--family", choices=FAMILIES)
    p.add_argument("--z", type=_floats, help="bubble center")
    p.add_argument("--r", type=float, default=1.0, help="bubble scale")
    p.add_argument("--e", type=_floats, help="unit nonnegative direction")
    p.add_argument("--kappa", type=float)
    p.add_argument("--kappa-star", dest="kappa_star", type=float)
    p.add_argument("--span", type=float)
    p.add_argument("--h", type=float, default=DEFAULT_STEP)


def _add_sampling(p: argparse.ArgumentParser) -> None:
    p.add_argument("--points", type=int, default=100)
    p.add_argument("--r-min", dest="r_min", type=float, default=0.1)
    p.add_argument("--r-max", dest="r_max", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lanemden", description="Lane-Emden system laboratory")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", help="JSON document with the full run configuration")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("constants", help="derived constants of (n, alpha)")
    _add_problem(p)

    p = sub.add_parser("family", help="sample a closed-form solution")
    _add_problem(p)
    _add_family(p)
    _add_sampling(p)

    p = sub.add_parser("simulate", help="integrate the radial cylindrical system")
    _add_problem(p)
    p.add_argument("--system", choices=SYSTEMS, default="radial")
    p.add_argument("--v0", type=_floats)
    p.add_argument("--dv0", type=_floats)
    p.add_argument("--t0", type=float, default=0.0)
    p.add_argument("--span", type=float)
    p.add_argument("--h", type=float, default=DEFAULT_STEP)

    p = sub.add_parser("invariants", help="Pohozaev invariants of a critical orbit")
    _add_problem(p)
    _add_family(p)
    p.add_argument("--v0", type=_floats)
    p.add_argument("--dv0", type=_floats)
    p.add_argument("--t0", type=float, default=0.0)
    p.add_argument("--drift-output", dest="drift_output")

    p = sub.add_parser("classify", help="classify the singularity at the origin")
    _add_problem(p)
    _add_family(p)
    p.add_argument("--phi-limit", dest="phi_limit", type=float)
    p.add_argument("--amplitude", type=float)
    p.add_argument("--energy-limit", dest="energy_limit", type=float)
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)
    p.add_argument("--order", type=int, default=DEFAULT_ORDER)

    p = sub.add_parser("sweep", help="grid over (kappa, kappa_star) or alpha")
    _add_problem(p, alpha=False)
    p.add_argument("--kappa-range", dest="kappa_range", type=_grid_spec)
    p.add_argument("--kappa-star-range", dest="kappa_star_range", type=_grid_spec)
    p.add_argument("--alpha-range", dest="alpha_range", type=_grid_spec)
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("residual-check", help="finite-difference residual of a family")
    _add_problem(p)
    _add_family(p)
    _add_sampling(p)
    p.add_argument("--fd-step", dest="fd_step", type=float, default=FD_STEP)

    for sub_parser in sub.choices.values():
        sub_parser.add_argument("--output", "-o", help="output path, standard output when absent")
    return parser


_FIELDS = {f.name for f in dataclasses.fields(RunConfig)}
_TUPLE_FIELDS = {"v0", "dv0", "z", "e", "kappa_range", "kappa_star_range", "alpha_range"}


def _from_mapping(doc: Dict[str, Any]) -> RunConfig:
    doc = {k.replace("-", "_"): v for k, v in doc.items()}
    unknown = sorted(set(doc) - _FIELDS)
    if unknown:
        raise UsageError(f"Unknown configuration keys: {unknown}.", {"keys": unknown})
    if "command" not in doc:
        raise UsageError("The configuration needs a command.")
    for key in _TUPLE_FIELDS & set(doc):
        if doc[key] is not None:
            doc[key] = tuple(float(x) for x in doc[key])
    try:
        return RunConfig(**doc)
    except TypeError as exc:
        raise UsageError(str(exc))


def _require(config: RunConfig, *names: str) -> None:
    missing = [name for name in names if getattr(config, name) is None]
    if missing:
        flags = ", ".join("--" + name.replace("_", "-") for name in missing)
        raise UsageError(f"{config.command} needs {flags}.", {"missing": missing})


def _validate(config: RunConfig) -> RunConfig:
    if config.command not in COMMANDS:
        raise UsageError(f"Unknown command {config.command!r}.", {"commands": list(COMMANDS)})
    if config.family is not None and config.family not in FAMILIES:
        raise UsageError(f"Unknown family {config.family!r}.", {"families": list(FAMILIES)})
    if config.system not in SYSTEMS:
        raise UsageError(f"Unknown system {config.system!r}.", {"systems": list(SYSTEMS)})
    for name in ("h", "tol", "fd_step", "r_max"):
        if not getattr(config, name) > 0:
            raise UsageError(f"{name} must be positive.", {name: getattr(config, name)})
    if config.order < 2 or config.points < 1 or config.jobs < 1:
        raise UsageError("order, points and jobs must be positive.")
    _require(config, "n")
    if not 0 < config.r_min < config.r_max:
        raise UsageError(
            "Sampling radii need 0 < r_min < r_max.", {"r_min": config.r_min, "r_max": config.r_max}
        )
    if config.z is not None and len(config.z) != config.n:
        raise UsageError(f"--z needs {config.n} coordinates.", {"z": list(config.z)})
    if config.e is not None and config.family != "spiral" and len(config.e) != config.m:
        raise UsageError(f"--e needs {config.m} components.", {"e": list(config.e)})
    cmd = config.command
    if cmd == "constants":
        _require(config, "alpha")
    elif cmd == "family" or cmd == "residual-check":
        _require(config, "family")
        if config.family == "homogeneous":
            _require(config, "alpha")
        if config.family == "spiral":
            if cmd == "residual-check":
                raise UsageError("residual-check applies to field families, not to spirals.")
            _require(config, "kappa", "kappa_star")
    elif cmd == "simulate":
        _require(config, "v0", "dv0", "span")
        if config.system == "radial":
            _require(config, "alpha")
        elif config.alpha is not None and abs(config.alpha - config.n / (config.n - 2)) > 1e-12:
            raise UsageError("The lower-critical system has alpha = n/(n-2).")
        if config.system == "lower-critical" and config.n > 2:
            threshold = lower_critical_threshold(config.n)
            if min(config.t0, config.t0 + config.span) <= threshold:
                raise UsageError(
                    f"The lower-critical system needs --t0 > {threshold:.6g}.",
                    {"t0": config.t0, "threshold": threshold},
                )
    elif cmd == "invariants":
        if config.family == "spiral":
            _require(config, "kappa", "kappa_star")
        elif config.family is None:
            _require(config, "v0", "dv0", "span")
        else:
            raise UsageError("invariants takes --family spiral or an initial state.")
    elif cmd == "classify":
        if config.family == "spiral":
            _require(config, "kappa", "kappa_star")
        elif config.family == "homogeneous":
            _require(config, "alpha")
    elif cmd == "sweep":
        kappa_grid = config.kappa_range is not None or config.kappa_star_range is not None
        if kappa_grid == (config.alpha_range is not None):
            raise UsageError("sweep takes either kappa ranges or --alpha-range.")
        if kappa_grid:
            _require(config, "kappa_range", "kappa_star_range")
    try:
        config.params
    except LaneEmdenError as exc:
        raise UsageError(exc.message, exc.context)
    return config


def _parse(argv: Optional[Sequence[str]]) -> Tuple[RunConfig, bool]:
    args = _build_parser().parse_args(argv)
    if args.config is not None:
        try:
            doc = json.loads(Path(args.config).read_text())
        except (OSError, ValueError) as exc:
            raise UsageError(f"Cannot read configuration: {exc}.", {"path": args.config})
        return _validate(_from_mapping(doc)), args.verbose
    if args.command is None:
        raise UsageError("A command is required.", {"commands": list(COMMANDS)})
    values = {k: v for k, v in vars(args).items() if k in _FIELDS}
    return _validate(RunConfig(**values)), args.verbose


def parse_config(argv: Optional[Sequence[str]] = None) -> RunConfig:
    """Resolve command line flags, or the JSON document named by --config, into a RunConfig.

    Raises `UsageError` for unknown flags, malformed values or missing options."""
    return _parse(argv)[0]


def _header(config: RunConfig) -> Dict[str, Any]:
    params = config.params
    resolved = config.to_dict()
    return {
        "config": resolved,
        "config_hash": config_hash(resolved),
        "version": __version__,
        "regime": None if params is None else params.regime.value,
    }


def _dumps(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, allow_nan=True)


def _write_json(config: RunConfig, result: Dict[str, Any], out: TextIO) -> None:
    out.write(_dumps({"header": _header(config), "result": result}) + "\n")


def _write_csv(config: RunConfig, frame: pd.DataFrame, out: TextIO) -> None:
    out.write("# " + _dumps(_header(config)) + "\n")
    frame.to_csv(out, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def _direction(config: RunConfig, m: int) -> Tuple[float, ...]:
    if config.e is not None:
        return config.e
    return (1.0,) + (0.0,) * (m - 1)


def _build_field(config: RunConfig) -> FieldEvaluator:
    n, m = config.n, config.m
    e = _direction(config, m)
    if config.family == "bubble":
        z = config.z if config.z is not None else (0.0,) * n
        return bubble(n, m, z, config.r, e)
    if config.family == "homogeneous":
        return homogeneous_singular(config.params, e)
    if config.family == "critical-homogeneous":
        return critical_homogeneous(n, m, e)
    return lower_critical_profile(n, m, e)


def _spiral(config: RunConfig) -> RadialTrajectory:
    return spiral(config.n, config.kappa, config.kappa_star, config.t0, config.span, config.h)


def _simulate(config: RunConfig) -> RadialTrajectory:
    t1 = config.t0 + config.span
    if config.system == "lower-critical":
        return integrate_lower_critical(
            config.n, config.m, config.v0, config.dv0, config.t0, t1, config.h
        )
    return integrate_radial(config.params, config.v0, config.dv0, (config.t0, t1), config.h)


def _cmd_constants(config: RunConfig, out: TextIO) -> None:
    params = config.params
    result = derive_constants(params).to_dict()
    result["apriori_amplitude"] = apriori_amplitude(params)
    _write_json(config, result, out)


def _sample_frame(u: FieldEvaluator, values: np.ndarray, points: np.ndarray) -> pd.DataFrame:
    data = {f"x_{i + 1}": points[:, i] for i in range(u.n)}
    data.update({f"u_{i + 1}": values[:, i] for i in range(u.m)})
    return pd.DataFrame(data)


def _sample_points(config: RunConfig) -> np.ndarray:
    return generate_sample_points(
        config.n, config.points, config.r_min, config.r_max, config.z, config.seed
    )


def _cmd_family(config: RunConfig, out: TextIO) -> None:
    if config.family == "spiral":
        _write_csv(config, _spiral(config).to_frame(), out)
        return
    u = _build_field(config)
    points = _sample_points(config)
    _write_csv(config, _sample_frame(u, u(points), points), out)


def _cmd_simulate(config: RunConfig, out: TextIO) -> None:
    _write_csv(config, _simulate(config).to_frame(), out)


def _cmd_invariants(config: RunConfig, out: TextIO) -> None:
    result: Dict[str, Any] = {}
    if config.family == "spiral":
        traj = _spiral(config)
        data = fowler_roots(config.n, config.kappa, config.kappa_star)
        if isinstance(data, FowlerData):
            result["fowler"] = data.to_dict()
    else:
        traj = _simulate(config)
    report = kappa_of(traj)
    result.update(report.to_dict())
    _write_json(config, result, out)
    if config.drift_output is not None:
        with open(config.drift_output, "w", encoding="utf-8", newline="") as f:
            _write_csv(config, drift_frame(traj, report), f)


def _cmd_classify(config: RunConfig, out: TextIO) -> None:
    params = config.params
    if config.family == "spiral":
        report = kappa_of(_spiral(config))
        result = classify_critical(report.kappa, report.kappa_star, config.n, config.tol)
    elif config.family is not None:
        u = _build_field(config)
        q = build_sphere_quadrature(config.n, config.order)
        result = classify_field(u, derive_constants(u.params), q, tol=config.tol)
    else:
        evidence = Evidence(
            kappa=config.kappa,
            kappa_star=config.kappa_star,
            phi_limit=config.phi_limit,
            amplitude=config.amplitude,
            energy_limit=config.energy_limit,
        )
        result = classify_by_regime(params, evidence, config.tol)
    _write_json(config, result.to_dict(), out)


def _linspace(spec: Tuple[float, ...]) -> np.ndarray:
    start, stop, count = spec
    return np.linspace(start, stop, int(count))


def _kappa_cell(n: int, kappa: float, kappa_star: float, tol: float) -> Dict[str, Any]:
    cell: Dict[str, Any] = {"kappa": kappa, "kappa_star": kappa_star}
    try:
        check_admissible(n, kappa, kappa_star)
    except LaneEmdenError as exc:
        cell.update(status=exc.code, message=exc.message)
        return cell
    data = fowler_roots(n, kappa, kappa_star)
    if isinstance(data, FowlerData):
        cell.update(
            status="oscillatory", rho_min=data.rho_min, rho_max=data.rho_max, period=data.period
        )
    else:
        cell.update(status=data.reason, roots=list(data.roots))
    cell["tag"] = classify_critical(kappa, kappa_star, n, tol).tag.value
    return cell


def _alpha_cell(n: int, m: int, alpha: float) -> Dict[str, Any]:
    cell: Dict[str, Any] = {"alpha": alpha}
    try:
        params = ProblemParams(n, m, alpha)
    except RangeError as exc:
        cell.update(status=exc.code, message=exc.message)
        return cell
    cell.update(status="ok", **derive_constants(params).to_dict())
    return cell


def _cmd_sweep(config: RunConfig, out: TextIO) -> None:
    if config.alpha_range is not None:
        cells = [(_alpha_cell, (config.n, config.m, float(a))) for a in _linspace(config.alpha_range)]
    else:
        cells = [
            (_kappa_cell, (config.n, float(k), float(ks), config.tol))
            for k in _linspace(config.kappa_range)
            for ks in _linspace(config.kappa_star_range)
        ]
    results: Dict[int, Dict[str, Any]] = {}
    with concurrent.futures.ThreadPoolExecutor(config.jobs) as executor:
        future_to_idx = {executor.submit(fn, *args): i for i, (fn, args) in enumerate(cells)}
        for future in concurrent.futures.as_completed(future_to_idx):
            idx = future_to_idx[future]
            results[idx] = future.result()
            logger.info("sweep cell %d/%d done", len(results), len(cells))
    out.write(_dumps({"header": _header(config)}) + "\n")
    for idx in range(len(cells)):
        out.write(_dumps({"index": idx, **results[idx]}) + "\n")


def _cmd_residual_check(config: RunConfig, out: TextIO) -> None:
    u = _build_field(config)
    points = _sample_points(config)
    res = np.linalg.norm(residual(u, points, config.fd_step), axis=-1)
    scale = np.linalg.norm(u(points), axis=-1) ** u.alpha
    relative = res / np.where(scale > 0, scale, 1.0)
    result = {
        "family": config.family,
        "n_points": int(points.shape[0]),
        "max_residual": float(res.max()),
        "mean_residual": float(res.mean()),
        "max_relative": float(relative.max()),
    }
    _write_json(config, result, out)


_HANDLERS = {
    "constants": _cmd_constants,
    "family": _cmd_family,
    "simulate": _cmd_simulate,
    "invariants": _cmd_invariants,
    "classify": _cmd_classify,
    "sweep": _cmd_sweep,
    "residual-check": _cmd_residual_check,
}


def run(config: RunConfig, out: Optional[TextIO] = None) -> int:
    """Execute `config`, writing to `config.output` (or `out`, standard output by default).

    Library errors are reported as a JSON document {code, message, context} on standard
    error; the return value is the exit status."""
    logger.info("running %s", config.command)
    buffer = io.StringIO()
    try:
        _HANDLERS[config.command](config, buffer)
    except UsageError as exc:
        sys.stderr.write(_dumps(exc.to_dict()) + "\n")
        return 2
    except LaneEmdenError as exc:
        sys.stderr.write(_dumps(exc.to_dict()) + "\n")
        return 1
    if config.output is not None:
        Path(config.output).write_text(buffer.getvalue(), encoding="utf-8")
    else:
        (sys.stdout if out is None else out).write(buffer.getvalue())
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    try:
        config, verbose = _parse(argv)
    except UsageError as exc:
        sys.stderr.write(_dumps(exc.to_dict()) + "\n")
        return 2
    logging.basicConfig(
        level=logging.INFO if verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s: %(message)s",
    )
    logging.captureWarnings(True)
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
