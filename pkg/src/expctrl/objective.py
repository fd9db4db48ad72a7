"""The reduced objective, its adjoint-based gradient, the second-order
form, and Taylor-remainder diagnostics.

With M the consistent mass matrix and Y the nodal state,
J(u) = (1/2)(Y - Y_d)' M (Y - Y_d) + (nu/2) sum u_i^2.  The gradient
entries d_i = phi(x_i) + nu u_i are the exact derivatives of this
discrete value, because each point load pairs with the adjoint state
through the same matrix that linearizes the state equation.  The
second-order form differentiates once more; the curvature of the
exponential therefore enters with the lumped weights of the state
equation, and the value is again the exact Hessian of the discrete J.
"""

import numpy as np

from .fem import exp_remainder1, exp_remainder2, integrate_lumped
from .pde import (evaluate_at_points, nodal_field, operators, solve_adjoint,
                  solve_linearized, solve_state)
from .sequences import FOUR_PI, Control

#: default probe grid, rho = 10^-1 .. 10^-3 in half-decade steps
DEFAULT_RHO_GRID = tuple(10.0 ** e for e in
                         (-1.0, -1.5, -2.0, -2.5, -3.0))

# remainders below this relative floor are solver noise, not signal
_SLOPE_FLOOR = 1e-14


class DerivativeReport:
    """Derivative data at a control: objective value, gradient entries,
    optionally a second-order form value, remainder rows, fitted
    log-log slopes, and notes for skipped probes."""

    def __init__(self, value, gradient=None, second_order=None,
                 rows=None, slopes=None, notes=None):
        if not np.isfinite(value):
            raise ValueError("objective value must be finite")
        if gradient is not None:
            gradient = np.asarray(gradient, dtype=float).reshape(-1)
            if not np.all(np.isfinite(gradient)):
                raise ValueError("gradient entries must be finite")
        self.value = float(value)
        self.gradient = gradient
        self.second_order = second_order
        self.rows = [] if rows is None else list(rows)
        self.slopes = {} if slopes is None else dict(slopes)
        self.notes = [] if notes is None else list(notes)


def evaluate_J(instance, u, mesh, tol=1e-10, state=None):
    """Objective value at a control; a precomputed state solution may
    be passed for reuse."""
    if state is None:
        state = solve_state(instance, u, mesh, tol=tol)
    diff = state.y.values - nodal_field(mesh, instance.y_d)
    return 0.5 * float(diff @ (operators(mesh).mass @ diff)) \
        + 0.5 * instance.nu * float(np.dot(u.values, u.values))


def evaluate_DJ(instance, u, mesh, tol=1e-10, state=None):
    """Gradient entries d_i = phi(x_i) + nu u_i, wrapped in a report
    that also carries the objective value."""
    if state is None:
        state = solve_state(instance, u, mesh, tol=tol)
    phi = solve_adjoint(state, instance.y_d, mesh)
    grad = np.asarray(evaluate_at_points(phi, instance.points)) \
        + instance.nu * u.values
    return DerivativeReport(evaluate_J(instance, u, mesh, state=state),
                            gradient=grad)


def evaluate_D2J(instance, u, mesh, h, k, tol=1e-10, state=None, phi=None):
    """Second-order form D2J[h, k] along point-mass directions.

    With z solving the linearized equation for its direction, the value
    is z_h' M z_k - sum_n (M_L)_n e^{y_n} phi_n z_h,n z_k,n
    + nu sum h_i k_i; passing h as k skips the second linearized solve.
    """
    if state is None:
        state = solve_state(instance, u, mesh, tol=tol)
    if phi is None:
        phi = solve_adjoint(state, instance.y_d, mesh)
    zh = solve_linearized(state, h, mesh, instance.points)
    zk = zh if k is h else solve_linearized(state, k, mesh, instance.points)
    return _second_order_form(instance, mesh, state, phi, zh, zk, h, k)


def _second_order_form(instance, mesh, state, phi, zh, zk, h, k):
    ops = operators(mesh)
    tracking = float(zh.values @ (ops.mass @ zk.values))
    weight = ops.lumped * np.exp(state.y.values) * phi.values
    curvature = float(np.sum(weight * zh.values * zk.values))
    return tracking - curvature \
        + instance.nu * float(np.dot(h.values, k.values))


def taylor_remainder_test(instance, u, mesh, h, rho_grid=None, tol=1e-12):
    """Tabulate Taylor remainders of J along h over a grid of step
    sizes and fit their log-log slopes.

    Each row holds rho, the first and second objective remainders
    R1 = |J(u + rho h) - J - rho DJ.h| and
    R2 = |R1 argument - (rho^2/2) D2J[h,h]|, and the state-level
    remainders: with w = y_{u + rho h} - y_u, the lumped integrals of
    |e^w - 1 - w| / rho and |e^w - 1 - w - w^2/2| / rho^2.  Probes the
    state solver cannot take are skipped with a note.
    """
    if rho_grid is None:
        rho_grid = DEFAULT_RHO_GRID
    state = solve_state(instance, u, mesh, tol=tol)
    phi = solve_adjoint(state, instance.y_d, mesh)
    base = evaluate_J(instance, u, mesh, state=state)
    grad = np.asarray(evaluate_at_points(phi, instance.points)) \
        + instance.nu * u.values
    dj_h = float(np.dot(grad, h.values))
    d2_hh = evaluate_D2J(instance, u, mesh, h, h, state=state, phi=phi)
    rows = []
    notes = []
    for rho in rho_grid:
        rho = float(rho)
        probe = Control(u.values + rho * h.values)
        row = {"rho": rho, "r1": 0.0, "r2": 0.0,
               "state_r1": 0.0, "state_r2": 0.0, "note": ""}
        if float(np.max(probe.values)) >= FOUR_PI:
            row["note"] = "skipped: probe control reaches 4*pi"
        else:
            try:
                probe_state = solve_state(instance, probe, mesh, tol=tol)
            except RuntimeError as exc:
                row["note"] = "skipped: %s" % exc
            else:
                value = evaluate_J(instance, probe, mesh, state=probe_state)
                linear = value - base - rho * dj_h
                row["r1"] = abs(linear)
                row["r2"] = abs(linear - 0.5 * rho * rho * d2_hh)
                w = probe_state.y.values - state.y.values
                row["state_r1"] = integrate_lumped(
                    mesh, np.abs(exp_remainder1(w))) / rho
                row["state_r2"] = integrate_lumped(
                    mesh, np.abs(exp_remainder2(w))) / rho ** 2
        if row["note"]:
            notes.append("rho=%g %s" % (rho, row["note"]))
        rows.append(row)
    slopes = {key: _loglog_slope(rows, key, base)
              for key in ("r1", "r2", "state_r1", "state_r2")}
    return DerivativeReport(base, gradient=grad, second_order=d2_hh,
                            rows=rows, slopes=slopes, notes=notes)


def _loglog_slope(rows, key, base):
    floor = _SLOPE_FLOOR * (1.0 + abs(base))
    pts = [(row["rho"], row[key]) for row in rows
           if not row["note"] and row[key] > floor]
    if len(pts) < 2:
        return None
    x = np.log(np.array([p[0] for p in pts]))
    y = np.log(np.array([p[1] for p in pts]))
    return float(np.polyfit(x, y, 1)[0])
