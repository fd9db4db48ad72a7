"""Command-line surface: config ingestion, command dispatch, report
emission.

Four commands, each driven by a JSON config: solve (one state solve),
optimize (projected gradient plus the optimality reports), verify (the
inequality certifications), taylor (remainder tables).  Reports are
comma-separated files plus key=value summaries; apart from the leading
timestamp line, identical config and seed produce byte-identical files.

Exit codes: 0 success, 1 config or precondition error, 2 solver
failure, 3 iteration budget exhausted, 4 estimate violation.
"""

import argparse
import json
import re
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .estimates import (verify_lipschitz_family, verify_mollified_poisson,
                        verify_poisson_exponential, verify_scalar_exponential,
                        verify_semilinear_exponential)
from .fem import integrate_exp_linear
from .mesh import Domain, build_mesh
from .objective import evaluate_DJ, taylor_remainder_test
from .optimizer import (kkt_residual, projected_gradient,
                        sample_critical_cone, second_order_check)
from .pde import ProblemInstance, solve_state
from .sequences import BoundsPair, Control, compute_separation_radii

_REQUIRED = object()


class ConfigError(Exception):
    """A config file that does not parse to a valid run."""


def _field(cfg, name, default=_REQUIRED):
    if name in cfg:
        return cfg[name]
    if default is _REQUIRED:
        raise ConfigError("field '%s': missing" % name)
    return default


def _float_list(cfg, name, default=_REQUIRED):
    raw = _field(cfg, name, default)
    if raw is default and raw is not _REQUIRED:
        return raw
    try:
        return [float(v) for v in raw]
    except (TypeError, ValueError):
        raise ConfigError("field '%s': expected a list of numbers" % name)


class _StateOf:
    """Deferred target: the state of a fixed control, solved on the
    run's mesh once it exists."""

    def __init__(self, values):
        self.values = np.asarray(values, dtype=float).reshape(-1)


def parse_field(text, where):
    """Parse a named analytic field: "zero", "constant c",
    "gaussian(cx, cy, width, amplitude)", or "state_of(u1, ...)";
    plain numbers count as constants."""
    if text is None:
        return None
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        return float(text)
    if not isinstance(text, str):
        raise ConfigError("field '%s': expected a field description" % where)
    text = text.strip()
    if text == "zero":
        return None
    m = re.fullmatch(r"constant[\s(]+([^\s()]+)\)?", text)
    if m:
        try:
            return float(m.group(1))
        except ValueError:
            raise ConfigError("field '%s': bad constant value" % where)
    m = re.fullmatch(r"(\w+)\s*\((.*)\)", text)
    if m:
        name, body = m.group(1), m.group(2)
        try:
            args = [float(v) for v in body.split(",")] if body.strip() \
                else []
        except ValueError:
            raise ConfigError("field '%s': bad numeric argument" % where)
        if name == "gaussian":
            if len(args) != 4:
                raise ConfigError(
                    "field '%s': gaussian needs (cx, cy, width, amplitude)"
                    % where)
            return _gaussian(*args)
        if name == "state_of":
            if not args:
                raise ConfigError(
                    "field '%s': state_of needs control values" % where)
            return _StateOf(args)
    raise ConfigError("field '%s': unknown field '%s'" % (where, text))


def _gaussian(cx, cy, width, amplitude):
    if width <= 0.0:
        raise ConfigError("field: gaussian width must be positive")

    def field(x):
        x = np.asarray(x, dtype=float).reshape(-1, 2)
        r2 = (x[:, 0] - cx) ** 2 + (x[:, 1] - cy) ** 2
        return amplitude * np.exp(-r2 / (2.0 * width ** 2))
    return field


def _parse_domain(cfg):
    raw = _field(cfg, "domain")
    if not isinstance(raw, dict):
        raise ConfigError("field 'domain': expected an object")
    kind = _field(raw, "kind")
    try:
        if kind == "unit_square":
            return Domain.unit_square()
        if kind == "rectangle":
            x0, y0, x1, y1 = [float(v) for v in _field(raw, "corners")]
            return Domain.rectangle(x0, y0, x1, y1)
        if kind == "disk":
            cx, cy = [float(v) for v in _field(raw, "center")]
            return Domain.disk(cx, cy, float(_field(raw, "radius")))
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError("field 'domain': %s" % exc)
    raise ConfigError("field 'domain.kind': unknown kind '%s'" % kind)


class RunConfig:
    """Parsed run configuration: the problem instance, tolerances,
    seed, output directory, and the raw command-specific entries."""

    def __init__(self, instance, tolerances, seed, out, raw):
        self.instance = instance
        self.tolerances = tolerances
        self.seed = seed
        self.out = out
        self.raw = raw

    @classmethod
    def from_dict(cls, cfg, out=None, seed=None):
        domain = _parse_domain(cfg)
        try:
            points = compute_separation_radii(_field(cfg, "points"), domain)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError("field 'points': %s" % exc)
        try:
            bounds = BoundsPair(_float_list(cfg, "lower"),
                                _float_list(cfg, "upper"))
        except ValueError as exc:
            raise ConfigError("field 'bounds': %s" % exc)
        mesh_cfg = _field(cfg, "mesh", {})
        try:
            instance = ProblemInstance(
                domain, points, bounds, float(_field(cfg, "nu", 0.0)),
                f0=parse_field(_field(cfg, "f0", "zero"), "f0"),
                y_d=parse_field(_field(cfg, "y_d", "zero"), "y_d"),
                resolution=int(_field(mesh_cfg, "resolution", 64)),
                refine_levels=int(_field(mesh_cfg, "refine_levels", 0)))
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError("field 'instance': %s" % exc)
        if isinstance(instance.f0, _StateOf):
            raise ConfigError("field 'f0': state_of is only available "
                              "for y_d")
        tolerances = dict(_field(cfg, "tolerances", {}))
        tolerances.setdefault("newton", 1e-10)
        tolerances.setdefault("kkt", 1e-6)
        tolerances.setdefault("taylor", 1e-12)
        tolerances.setdefault("active", 1e-10)
        for key, value in tolerances.items():
            if not (isinstance(value, (int, float)) and value > 0.0):
                raise ConfigError(
                    "field 'tolerances.%s': must be positive" % key)
        if seed is None:
            seed = int(_field(cfg, "seed", 42))
        if out is None:
            out = str(_field(cfg, "out", "."))
        return cls(instance, tolerances, int(seed), Path(out), cfg)


def load_config(path, out=None, seed=None):
    """Read and validate a JSON config file."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("config %s: %s" % (path, exc))
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("config %s: line %d column %d: %s"
                          % (path, exc.lineno, exc.colno, exc.msg))
    if not isinstance(cfg, dict):
        raise ConfigError("config %s: top level must be an object" % path)
    return RunConfig.from_dict(cfg, out=out, seed=seed)


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return "%.17g" % value
    if isinstance(value, (list, tuple, np.ndarray)):
        return "[" + " ".join(_fmt(v) for v in value) + "]"
    return str(value)


def _stamp():
    return "# generated %s\n" % datetime.now(timezone.utc).strftime(
        "%Y-%m-%dT%H:%M:%SZ")


def _write_csv(path, columns, rows):
    with open(path, "w") as f:
        f.write(_stamp())
        f.write(",".join(columns) + "\n")
        for row in rows:
            f.write(",".join(_fmt(v) for v in row) + "\n")


def _write_summary(path, pairs):
    with open(path, "w") as f:
        f.write(_stamp())
        for key, value in pairs:
            f.write("%s=%s\n" % (key, _fmt(value)))


def _base_control(config):
    raw = _float_list(config.raw, "control",
                      [0.0] * config.instance.points.count)
    if len(raw) != config.instance.points.count:
        raise ConfigError("field 'control': one value per source point")
    return Control(raw)


def _resolve_target(config, mesh):
    instance = config.instance
    if isinstance(instance.y_d, _StateOf):
        if instance.y_d.values.size != instance.points.count:
            raise ConfigError(
                "field 'y_d': state_of needs one value per source point")
        state = solve_state(instance, Control(instance.y_d.values), mesh,
                            tol=config.tolerances["newton"])
        instance.y_d = state.y


def cmd_solve(config):
    """One state solve: nodal solution, Newton history, summary."""
    instance = config.instance
    mesh = instance.make_mesh()
    u = _base_control(config)
    linear = bool(_field(config.raw, "linear", False))
    state = solve_state(instance, u, mesh,
                        tol=config.tolerances["newton"], linear=linear)
    out = config.out
    out.mkdir(parents=True, exist_ok=True)
    values = state.y.values
    _write_csv(out / "solution.csv", ("x", "y", "value"),
               zip(mesh.vertices[:, 0], mesh.vertices[:, 1], values))
    _write_csv(out / "newton.csv", ("iteration", "residual"),
               enumerate(state.history))
    _write_summary(out / "solve_summary.txt", [
        ("converged", state.converged),
        ("newton_iterations", state.newton_iterations),
        ("final_residual", state.final_residual),
        ("min_y", float(values.min())),
        ("max_y", float(values.max())),
        ("int_exp_y", integrate_exp_linear(mesh, values)),
        ("vertices", mesh.num_vertices),
        ("triangles", mesh.num_triangles),
    ])
    return 0


def cmd_optimize(config):
    """Projected gradient plus the first- and second-order reports."""
    instance = config.instance
    mesh = instance.make_mesh()
    _resolve_target(config, mesh)
    u0 = _base_control(config)
    max_iters = int(_field(config.raw, "max_iters", 200))
    tol = config.tolerances["kkt"]
    u, report = projected_gradient(
        instance, mesh, u0, max_iters=max_iters, tol=tol,
        tol_active=config.tolerances["active"],
        state_tol=config.tolerances["newton"])
    converged = report.aggregate <= tol
    derivative = evaluate_DJ(instance, u, mesh,
                             tol=config.tolerances["newton"])
    out = config.out
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "iterates.csv", ("iteration", "J", "kkt_residual",
                                      "step"),
               ((i,) + row for i, row in enumerate(report.history)))
    _write_csv(out / "control.csv", ("index", "value"),
               enumerate(u.values))
    _write_csv(out / "kkt.csv",
               ("index", "u", "lower", "upper", "d", "classification",
                "residual"),
               ((i, u.values[i], instance.bounds.lower[i],
                 instance.bounds.upper[i], derivative.gradient[i],
                 report.classification[i], report.residuals[i])
                for i in range(len(u))))
    summary = [
        ("J", derivative.value),
        ("iterations", report.iterations),
        ("kkt_residual", report.aggregate),
        ("converged", converged),
        ("fully_constrained",
         all(c == "degenerate" for c in report.classification)),
    ]
    if converged:
        directions = sample_critical_cone(
            u, derivative.gradient, instance.bounds,
            tol_active=config.tolerances["active"], tol_grad=tol,
            count=int(_field(config.raw, "second_order_count", 64)),
            seed=config.seed)
        second = second_order_check(instance, mesh, u, directions,
                                    state_tol=config.tolerances["newton"])
        _write_csv(out / "second_order.csv", ("sample", "value"),
                   enumerate(second.values))
        summary += [
            ("second_order_minimum", second.minimum),
            ("second_order_pass", second.passed),
            ("critical_cone_empty", directions[0].empty),
        ]
    else:
        summary.append(("note", "max iterations"))
    _write_summary(out / "optimize_summary.txt", summary)
    return 0 if converged else 3


def _verify_reports(config, entry, mesh):
    check = _field(entry, "check")
    instance = config.instance
    if check == "scalar":
        return [verify_scalar_exponential(
            int(_field(entry, "samples", 10000)), config.seed)]
    if check == "poisson":
        return [verify_poisson_exponential(
            instance.domain, instance.points,
            np.asarray(_float_list(entry, "omega")),
            float(_field(entry, "alpha")), mesh)]
    if check == "semilinear":
        return [verify_semilinear_exponential(
            instance.domain, instance.points,
            np.asarray(_float_list(entry, "omega")),
            float(_field(entry, "alpha")), instance.f0, mesh)]
    if check == "lipschitz":
        return verify_lipschitz_family(
            instance, mesh, trials=int(_field(entry, "trials", 20)),
            seed=config.seed)
    if check == "mollified":
        R = float(_field(entry, "R"))
        resolution = int(_field(entry, "resolution", instance.resolution))
        disk = build_mesh(Domain.disk(0.0, 0.0, R), resolution)
        return list(verify_mollified_poisson(
            R, _float_list(entry, "x0", [0.0, 0.0]),
            float(_field(entry, "rho0")), float(_field(entry, "epsilon")),
            float(_field(entry, "m")), disk))
    raise ConfigError("field 'verify.check': unknown check '%s'" % check)


def cmd_verify(config):
    """Run the configured inequality checks, one report row each."""
    entries = _field(config.raw, "verify")
    if not isinstance(entries, list) or not entries:
        raise ConfigError("field 'verify': expected a nonempty list")
    mesh = config.instance.make_mesh()
    reports = []
    for entry in entries:
        reports.extend(_verify_reports(config, entry, mesh))
    out = config.out
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "estimates.csv",
               ("name", "parameters", "lhs", "rhs", "margin", "pass"),
               ((r.name,
                 ";".join("%s=%s" % (k, _fmt(v))
                          for k, v in sorted(r.parameters.items())),
                 r.lhs, r.rhs, r.margin, r.passed) for r in reports))
    failed = sum(1 for r in reports if not r.passed)
    _write_summary(out / "verify_summary.txt", [
        ("reports", len(reports)),
        ("failed", failed),
    ])
    return 4 if failed else 0


def cmd_taylor(config):
    """Remainder tables for the objective along a direction."""
    instance = config.instance
    mesh = instance.make_mesh()
    _resolve_target(config, mesh)
    u = _base_control(config)
    raw_h = _float_list(config.raw, "direction")
    if len(raw_h) != instance.points.count:
        raise ConfigError("field 'direction': one value per source point")
    h = Control(raw_h)
    rho_grid = _float_list(config.raw, "rho_grid", None)
    report = taylor_remainder_test(instance, u, mesh, h,
                                   rho_grid=rho_grid,
                                   tol=config.tolerances["taylor"])
    out = config.out
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "remainders.csv",
               ("rho", "r1", "r2", "state_r1", "state_r2", "note"),
               ((row["rho"], row["r1"], row["r2"], row["state_r1"],
                 row["state_r2"], row["note"]) for row in report.rows))
    pairs = [("J", report.value),
             ("directional_derivative",
              float(np.dot(report.gradient, h.values))),
             ("second_order", report.second_order)]
    for key in ("r1", "r2", "state_r1", "state_r2"):
        slope = report.slopes.get(key)
        pairs.append(("slope_%s" % key,
                      "none" if slope is None else slope))
    _write_summary(out / "taylor_summary.txt", pairs)
    return 0


_COMMANDS = {
    "solve": cmd_solve,
    "optimize": cmd_optimize,
    "verify": cmd_verify,
    "taylor": cmd_taylor,
}


def _parser():
    parser = argparse.ArgumentParser(
        prog="expctrl",
        description="Point-mass control: state solves, box-constrained "
                    "optimization, and inequality certification.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in _COMMANDS.items():
        s = sub.add_parser(name, help=fn.__doc__)
        s.add_argument("--config", required=True,
                       help="path to the JSON run configuration")
        s.add_argument("--out", default=None,
                       help="output directory (overrides the config)")
        s.add_argument("--seed", type=int, default=None,
                       help="random seed (overrides the config)")
    return parser


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        config = load_config(args.config, out=args.out, seed=args.seed)
        return _COMMANDS[args.command](config)
    except ConfigError as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return 1
    except ValueError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1
    except RuntimeError as exc:
        print("solver error: %s" % exc, file=sys.stderr)
        return 2
