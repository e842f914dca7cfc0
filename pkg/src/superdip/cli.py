"""Command line front end: scenario runner and pattern exporter.

Scenarios are TOML files describing one array experiment: carrier, element
dimensions, array layout, link budget, matching mode, and a sweep over one
variable (antenna count, spacing, length or radius).  ``run`` solves every
sweep point and writes one CSV row per point; ``pattern`` solves a
single-point scenario and writes gain cuts.  A handful of scenario files
mirroring the experiments the package was built around ship inside the
package and can be addressed by bare name (``fig1a`` .. ``fig4``).

Exit codes: 0 on success, 2 for configuration problems, 3 for numerical
failures.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np

from . import design, mom
from .coupling import ImpedanceSet, input_impedance_matrix, uncoupled_impedance_set
from .elements import ArrayGeometry, CarrierSpec, DipoleSpec, Direction, Z_0, element_pattern
from .errors import ConfigError, NumericalError, SuperdipError

OUT_DIR_ENV = "SUPERDIP_OUT_DIR"

_MODELS = ("scd", "mom", "both")
_MATCH_MODES = (design.ACTIVE_CONJUGATE, design.INPUT_CONJUGATE)
_SWEEP_VARS = ("n", "d_over_lambda", "ell_over_lambda", "rho_over_lambda")
_CUTS = ("azimuth", "elevation", "grid")
# Bookkeeping re-verified before anything is written out.
_ETA_CEILING = 0.5 + 1e-12
_POWER_RTOL = 1e-9
# Sweep points are independent; a small thread pool keeps the runner snappy
# without oversubscribing the BLAS threads underneath.
_MAX_WORKERS = 4

_RESULT_COLUMNS = (
    "g_max_dbi", "g_max_linear", "eta", "p_rad_w", "p_loss_w", "p_in_w",
    "p_total_w", "rate_bit_per_s", "i_abs_a", "gamma_abs", "g_mom_dbi",
)


@dataclass(frozen=True)
class ScenarioConfig:
    """One validated scenario: base parameters plus a single sweep."""

    label: str
    model: str
    frequency: float
    ell_over_lambda: float
    rho_over_lambda: float
    conductivity: float
    n: int
    d_over_lambda: float
    distance: float
    theta_deg: float
    phi_deg: float
    power_budget: float
    bandwidth: float
    noise_dbm_per_hz: float
    matching: str
    mom_samples: int
    sweep_variable: str
    sweep_values: tuple
    uncoupled: bool
    pattern_cuts: tuple
    pattern_step_deg: float


def _get(table: dict, section: str, key: str, kind, default=None):
    """Fetch table[section][key] with a field-precise error message."""
    sub = table.get(section, {})
    if not isinstance(sub, dict):
        raise ConfigError(f"[{section}] must be a table")
    if key not in sub:
        if default is not None:
            return default
        raise ConfigError(f"[{section}].{key}: required key is missing")
    value = sub[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, kind) or isinstance(value, bool):
        raise ConfigError(
            f"[{section}].{key}: expected {kind.__name__}, got {value!r}")
    return value


def _positive(name: str, value):
    if not value > 0.0:
        raise ConfigError(f"{name}: must be positive, got {value}")
    return value


def load_scenario(path) -> ScenarioConfig:
    """Parse and validate one scenario file."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read scenario file {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    label = raw.get("label", path.stem)
    if not isinstance(label, str) or not label:
        raise ConfigError("label: must be a non-empty string")
    model = raw.get("model", "scd")
    if model not in _MODELS:
        raise ConfigError(f"model: expected one of {_MODELS}, got {model!r}")

    sweep_variable = _get(raw, "sweep", "variable", str)
    if sweep_variable not in _SWEEP_VARS:
        raise ConfigError(
            f"[sweep].variable: expected one of {_SWEEP_VARS}, got {sweep_variable!r}")
    values = _get(raw, "sweep", "values", list)
    if not values:
        raise ConfigError("[sweep].values: need at least one value")
    if sweep_variable == "n":
        if not all(isinstance(v, int) and not isinstance(v, bool) and v >= 1
                   for v in values):
            raise ConfigError("[sweep].values: antenna counts must be integers >= 1")
        sweep_values = tuple(int(v) for v in values)
    else:
        if not all(isinstance(v, (int, float)) and not isinstance(v, bool) and v > 0
                   for v in values):
            raise ConfigError("[sweep].values: values must be positive numbers")
        sweep_values = tuple(float(v) for v in values)

    matching = _get(raw, "matching", "mode", str, default=design.ACTIVE_CONJUGATE)
    if matching not in _MATCH_MODES:
        raise ConfigError(
            f"[matching].mode: expected one of {_MATCH_MODES}, got {matching!r}")

    mom_samples = _get(raw, "mom", "samples", int, default=401)
    if mom_samples < 21 or mom_samples % 2 == 0:
        raise ConfigError(
            f"[mom].samples: need an odd sample count 2M+1 with M >= 10, got {mom_samples}")

    cuts = raw.get("pattern", {}).get("cuts", [])
    if not isinstance(cuts, list) or not all(c in _CUTS for c in cuts):
        raise ConfigError(f"[pattern].cuts: expected names from {_CUTS}, got {cuts!r}")
    step = _get(raw, "pattern", "step_deg", float, default=1.0)
    _positive("[pattern].step_deg", step)

    uncoupled = raw.get("array", {}).get("uncoupled", False)
    if not isinstance(uncoupled, bool):
        raise ConfigError("[array].uncoupled: expected a boolean")

    n = _get(raw, "array", "n", int, default=10)
    if n < 1:
        raise ConfigError(f"[array].n: need at least one element, got {n}")

    config = ScenarioConfig(
        label=label,
        model=model,
        frequency=_positive("[carrier].frequency_hz",
                            _get(raw, "carrier", "frequency_hz", float, default=1.0e10)),
        ell_over_lambda=_positive("[element].ell_over_lambda",
                                  _get(raw, "element", "ell_over_lambda", float)),
        rho_over_lambda=_positive("[element].rho_over_lambda",
                                  _get(raw, "element", "rho_over_lambda", float)),
        conductivity=_positive("[element].conductivity",
                               _get(raw, "element", "conductivity", float, default=5.7e7)),
        n=n,
        d_over_lambda=_positive("[array].d_over_lambda",
                                _get(raw, "array", "d_over_lambda", float)),
        distance=_positive("[link].distance_m",
                           _get(raw, "link", "distance_m", float, default=500.0)),
        theta_deg=_get(raw, "link", "theta_deg", float, default=90.0),
        phi_deg=_get(raw, "link", "phi_deg", float, default=0.0),
        power_budget=_positive("[link].power_budget_w",
                               _get(raw, "link", "power_budget_w", float, default=0.2)),
        bandwidth=_positive("[link].bandwidth_hz",
                            _get(raw, "link", "bandwidth_hz", float, default=1.0e9)),
        noise_dbm_per_hz=_get(raw, "link", "noise_dbm_per_hz", float, default=-174.0),
        matching=matching,
        mom_samples=mom_samples,
        sweep_variable=sweep_variable,
        sweep_values=sweep_values,
        uncoupled=uncoupled,
        pattern_cuts=tuple(cuts),
        pattern_step_deg=step,
    )
    if not 0.0 <= config.theta_deg <= 180.0:
        raise ConfigError(f"[link].theta_deg: expected 0..180, got {config.theta_deg}")
    return config


def resolve_scenario_path(name: str) -> Path:
    """Accept a filesystem path or the bare name of a bundled scenario."""
    direct = Path(name)
    if direct.exists():
        return direct
    stem = name[:-5] if name.endswith(".toml") else name
    bundled = Path(__file__).resolve().parent / "scenarios" / f"{stem}.toml"
    if bundled.exists():
        return bundled
    raise ConfigError(
        f"scenario {name!r} is neither a file nor a bundled scenario name")


@dataclass(frozen=True)
class _Point:
    """Runtime objects of one sweep point."""

    geometry: ArrayGeometry
    carrier: CarrierSpec
    direction: Direction
    match: design.MatchSpec
    link: design.LinkSpec
    disc: mom.MomDiscretization


def _point_setup(config: ScenarioConfig, sweep_value) -> _Point:
    over = {config.sweep_variable: sweep_value}
    n = int(over.get("n", config.n))
    d_ol = over.get("d_over_lambda", config.d_over_lambda)
    ell_ol = over.get("ell_over_lambda", config.ell_over_lambda)
    rho_ol = over.get("rho_over_lambda", config.rho_over_lambda)

    carrier = CarrierSpec(config.frequency)
    lam = carrier.wavelength
    dipole = DipoleSpec(ell_ol * lam, rho_ol * lam, config.conductivity)
    geometry = ArrayGeometry.uniform_linear(n, d_ol * lam, dipole)
    direction = Direction(math.radians(config.theta_deg), math.radians(config.phi_deg))
    link = design.LinkSpec(
        bandwidth=config.bandwidth,
        noise_density=10.0 ** ((config.noise_dbm_per_hz - 30.0) / 10.0),
        power_budget=config.power_budget,
        distance=config.distance,
        direction=direction,
    )
    disc = mom.MomDiscretization((config.mom_samples - 1) // 2, dipole.length)
    return _Point(geometry=geometry, carrier=carrier, direction=direction,
                  match=design.MatchSpec(config.matching), link=link, disc=disc)


def _impedances(point: _Point, uncoupled: bool) -> ImpedanceSet:
    if uncoupled:
        return uncoupled_impedance_set(point.geometry, point.carrier)
    return input_impedance_matrix(point.geometry, point.carrier)


def _check_books(solution: design.ExcitationSolution, matching: str) -> None:
    """Re-verify the power bookkeeping at the output boundary.

    The one-half ceiling on the matching efficiency is a theorem only under
    active-impedance conjugate matching (delivered power equals the power
    burnt in the matched sources).  Self-conjugate loads on strongly coupled
    ports routinely deliver more than half of the total power - the coupled
    cross-terms do not burn in any source resistance - so there only the
    physical 0..1 range is enforced.
    """
    if matching == design.ACTIVE_CONJUGATE:
        if solution.eta > _ETA_CEILING:
            raise NumericalError(
                f"matching efficiency {solution.eta} exceeds the 1/2 conjugate bound")
    elif not 0.0 <= solution.eta < 1.0 + 1e-12:
        raise NumericalError(
            f"matching efficiency {solution.eta} is outside the physical range")
    budget = abs(solution.p_in - (solution.p_rad + solution.p_loss))
    if budget > _POWER_RTOL * max(solution.p_in, 1e-30):
        raise NumericalError(
            f"input power budget violated by {budget:.3e} W")


def _solve_point(config: ScenarioConfig, sweep_value):
    """Solve one sweep point; returns (solution, rate, g_mom, point, iset)."""
    point = _point_setup(config, sweep_value)
    iset = _impedances(point, config.uncoupled)
    solution = design.solve_excitation(iset, point.match, point.direction,
                                       config.power_budget)
    _check_books(solution, config.matching)
    _, rate = design.received_power_and_rate(point.link, point.carrier,
                                             solution.eta, solution.gain)
    g_mom = None
    mom_solution = None
    if config.model in ("mom", "both"):
        g_mom, mom_solution = mom.mom_gain_pipeline(
            point.geometry, point.carrier, point.direction,
            config.power_budget, point.disc, iset=iset)
    return point, iset, solution, rate, g_mom, mom_solution


def _fmt(value: float) -> str:
    return f"{value:.12g}"


def _result_row(sweep_value, solution: design.ExcitationSolution, rate: float,
                g_mom) -> str:
    # NaN reflections (ports carrying no current) stay NaN in the output.
    gamma = np.abs(solution.reflection)
    fields = [
        _fmt(sweep_value),
        _fmt(design.dbi(solution.gain)),
        _fmt(solution.gain),
        _fmt(solution.eta),
        _fmt(solution.p_rad),
        _fmt(solution.p_loss),
        _fmt(solution.p_in),
        _fmt(solution.p_total),
        _fmt(rate),
        ";".join(_fmt(v) for v in np.abs(solution.currents)),
        ";".join(_fmt(v) for v in gamma),
        _fmt(design.dbi(g_mom)) if g_mom is not None else "",
    ]
    return ",".join(fields)


def _write_text_atomic(path: Path, text: str) -> None:
    directory = str(path.parent or Path("."))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def run_scenario(config: ScenarioConfig, out_dir) -> list[Path]:
    """Solve every sweep point and write the result table (plus extras).

    Returns the list of files written.  Single-point scenarios additionally
    dump the method-of-moments current samples (when the model includes mom)
    and any configured pattern cuts.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    with ThreadPoolExecutor(max_workers=min(_MAX_WORKERS, len(config.sweep_values))) \
            as pool:
        solved = list(pool.map(lambda v: _solve_point(config, v),
                               config.sweep_values))

    header = config.sweep_variable + "," + ",".join(_RESULT_COLUMNS)
    lines = [header]
    for sweep_value, (_, _, solution, rate, g_mom, _) in zip(config.sweep_values,
                                                             solved):
        lines.append(_result_row(sweep_value, solution, rate, g_mom))
    written = []
    results_path = out_dir / f"{config.label}_results.csv"
    _write_text_atomic(results_path, "\n".join(lines) + "\n")
    written.append(results_path)

    if len(config.sweep_values) == 1:
        point, _, solution, _, _, mom_solution = solved[0]
        if mom_solution is not None:
            currents_path = out_dir / f"{config.label}_currents.csv"
            mom.dump_currents(currents_path, mom_solution.currents, point.disc)
            written.append(currents_path)
        for cut in config.pattern_cuts:
            written.append(emit_pattern(
                solution, cut, point=point, label=config.label, out_dir=out_dir,
                step_deg=config.pattern_step_deg, mom_solution=mom_solution))
    elif config.pattern_cuts:
        raise ConfigError("[pattern].cuts: pattern export needs a single-point sweep")
    return written


def _scd_gain_grid(point: _Point, solution: design.ExcitationSolution,
                   theta: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Gain 4 pi U / P_in of the solved currents over a (theta, phi) mesh."""
    k = point.carrier.wavenumber
    sin_t = np.sin(theta)[:, None]
    # Unit direction for every (theta, phi) pair; positions are (N, 3).
    rhat = np.stack([
        np.broadcast_to(sin_t * np.cos(phi)[None, :], (theta.size, phi.size)),
        np.broadcast_to(sin_t * np.sin(phi)[None, :], (theta.size, phi.size)),
        np.broadcast_to(np.cos(theta)[:, None], (theta.size, phi.size)),
    ], axis=-1)
    phases = np.exp(-1j * k * (rhat @ point.geometry.positions.T))
    array_factor = phases @ np.conj(solution.currents)
    f_pat = element_pattern(point.geometry.dipole.length, k, theta)[:, None]
    u = Z_0 / (8.0 * math.pi ** 2) * (f_pat * np.abs(array_factor)) ** 2
    return 4.0 * math.pi * u / solution.p_in


def _mom_gain_grid(point: _Point, mom_solution: mom.MomSolution,
                   theta: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Same mesh evaluated through the integral-equation space factors."""
    k = point.carrier.wavenumber
    factors = np.stack([mom.space_factor(mom_solution.currents[n_], theta,
                                         point.disc, k)
                        for n_ in range(point.geometry.n_elements)], axis=-1)
    sin_t = np.sin(theta)[:, None]
    rhat = np.stack([
        np.broadcast_to(sin_t * np.cos(phi)[None, :], (theta.size, phi.size)),
        np.broadcast_to(sin_t * np.sin(phi)[None, :], (theta.size, phi.size)),
        np.broadcast_to(np.cos(theta)[:, None], (theta.size, phi.size)),
    ], axis=-1)
    phases = np.exp(1j * k * (rhat @ point.geometry.positions.T))
    total = np.einsum("tpn,tn->tp", phases, factors)
    u = Z_0 * k * k / (32.0 * math.pi ** 2) * (sin_t * np.abs(total)) ** 2
    return 4.0 * math.pi * u / (mom_solution.p_rad + mom_solution.p_loss)


def emit_pattern(solution: design.ExcitationSolution, cut: str, *, point: _Point,
                 label: str, out_dir, step_deg: float = 1.0,
                 mom_solution: mom.MomSolution | None = None,
                 use_mom: bool = False) -> Path:
    """Write one gain cut of a solved excitation as CSV.

    ``azimuth`` sweeps phi at theta=90 deg, ``elevation`` sweeps theta at
    phi=0, ``grid`` covers the full sphere.  Gains are in dBi with pattern
    nulls floored at -120 dBi.
    """
    if cut not in _CUTS:
        raise ConfigError(f"--cut: expected one of {_CUTS}, got {cut!r}")
    if use_mom and mom_solution is None:
        raise ConfigError("pattern through the mom model needs a mom solution")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    n_phi = int(round(360.0 / step_deg))
    n_theta = int(round(180.0 / step_deg))
    phi_grid = np.radians(-180.0 + step_deg * np.arange(n_phi + 1))
    theta_grid = np.radians(step_deg * np.arange(n_theta + 1))
    if cut == "azimuth":
        theta = np.array([0.5 * math.pi])
        phi = phi_grid
    elif cut == "elevation":
        theta = theta_grid
        phi = np.array([0.0])
    else:
        theta = theta_grid
        phi = phi_grid

    if use_mom:
        gain = _mom_gain_grid(point, mom_solution, theta, phi)
    else:
        gain = _scd_gain_grid(point, solution, theta, phi)
    gain_dbi = 10.0 * np.log10(np.maximum(gain, 1e-12))

    suffix = "_mom" if use_mom else ""
    path = out_dir / f"{label}_pattern_{cut}{suffix}.csv"
    if cut == "azimuth":
        lines = ["phi_deg,gain_dbi"]
        for j, p in enumerate(np.degrees(phi)):
            lines.append(f"{p:.6g},{gain_dbi[0, j]:.12g}")
    elif cut == "elevation":
        lines = ["theta_deg,gain_dbi"]
        for i, t in enumerate(np.degrees(theta)):
            lines.append(f"{t:.6g},{gain_dbi[i, 0]:.12g}")
    else:
        lines = ["theta_deg,phi_deg,gain_dbi"]
        for i, t in enumerate(np.degrees(theta)):
            for j, p in enumerate(np.degrees(phi)):
                lines.append(f"{t:.6g},{p:.6g},{gain_dbi[i, j]:.12g}")
    _write_text_atomic(path, "\n".join(lines) + "\n")
    return path


def _output_dir(arg_out) -> Path:
    if arg_out:
        return Path(arg_out)
    env = os.environ.get(OUT_DIR_ENV)
    return Path(env) if env else Path(".")


def _apply_overrides(config: ScenarioConfig, args) -> ScenarioConfig:
    if getattr(args, "model", None):
        config = replace(config, model=args.model)
    samples = getattr(args, "samples", None)
    if samples:
        if samples < 21 or samples % 2 == 0:
            raise ConfigError(
                f"--samples: need an odd sample count 2M+1 with M >= 10, got {samples}")
        config = replace(config, mom_samples=samples)
    return config


def _cmd_run(args) -> int:
    config = _apply_overrides(load_scenario(resolve_scenario_path(args.config)), args)
    written = run_scenario(config, _output_dir(args.out))
    for path in written:
        print(path)
    return 0


def _cmd_pattern(args) -> int:
    config = _apply_overrides(load_scenario(resolve_scenario_path(args.config)), args)
    if len(config.sweep_values) != 1:
        raise ConfigError("pattern export needs a single-point scenario")
    use_mom = args.model == "mom"
    if use_mom:
        config = replace(config, model="mom")
    point, _, solution, _, _, mom_solution = _solve_point(config,
                                                          config.sweep_values[0])
    path = emit_pattern(solution, args.cut, point=point, label=config.label,
                        out_dir=_output_dir(args.out),
                        step_deg=args.step or config.pattern_step_deg,
                        mom_solution=mom_solution, use_mom=use_mom)
    print(path)
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="superdip",
        description="Superdirective dipole array solver: scenario sweeps, "
                    "matched-load design and integral-equation validation.")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="solve a scenario sweep and write CSV results")
    run_p.add_argument("config", help="scenario file path or bundled scenario name")
    run_p.add_argument("--model", choices=_MODELS,
                       help="override the scenario's model selector")
    run_p.add_argument("--out", help=f"output directory (default: ${OUT_DIR_ENV} or .)")
    run_p.add_argument("--samples", type=int,
                       help="override the 2M+1 sample count of the mom model")
    run_p.set_defaults(func=_cmd_run)

    pat_p = sub.add_parser("pattern", help="export a gain cut of a single-point scenario")
    pat_p.add_argument("config", help="scenario file path or bundled scenario name")
    pat_p.add_argument("--cut", choices=_CUTS, required=True)
    pat_p.add_argument("--model", choices=("scd", "mom"), default="scd",
                       help="evaluate the cut through either model")
    pat_p.add_argument("--step", type=float, help="angular step in degrees")
    pat_p.add_argument("--out", help=f"output directory (default: ${OUT_DIR_ENV} or .)")
    pat_p.add_argument("--samples", type=int,
                       help="override the 2M+1 sample count of the mom model")
    pat_p.set_defaults(func=_cmd_pattern)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3
    except SuperdipError as exc:  # pragma: no cover - catch-all guard
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
