"""Implicit finite-difference reference solver for the coupled tool/part
heat equations in local coordinates, with Robin boundaries, interface
continuity rows, and operator-split cure-kinetics integration.

Time stepping is Crank-Nicolson for conduction; the degree of cure advances
per step with a sub-stepped RK4 using start-of-step temperature, and its
increment feeds the part's heat-generation source. Boundary and interface
conditions are enforced as algebraic rows (second-order one-sided stencils)
at the new time level, which keeps the scheme second order in space and time.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import __version__ as code_version
from .design import DesignPoint
from .process import (DomainError, MaterialSet, air_temperature,
                      celsius_to_kelvin, cure_rate)


class SolverError(RuntimeError):
    """Linear-system failure or non-finite state during time stepping."""


@dataclass(frozen=True)
class Grid1D:
    """Node counts on x1, x2 in [0,1], time step, and horizon (None: run to
    the end of the design's cure cycle)."""

    n_tool: int = 81
    n_part: int = 81
    dt: float = 1.0
    t_end: float | None = None

    def __post_init__(self):
        if self.n_tool < 3 or self.n_part < 3:
            raise ValueError("need at least 3 nodes per material")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.t_end is not None and self.t_end <= 0:
            raise ValueError("t_end must be positive")


@dataclass
class MmsForcing:
    """Manufactured-solution hooks: volumetric sources (degC/s), boundary and
    interface inhomogeneities, and initial fields. Test scaffolding only."""

    source_tool: object = None    # f(x1_array, t) -> degC/s
    source_part: object = None    # f(x2_array, t) -> degC/s
    g_bot: object = None          # f(t) -> residual target at tool bottom
    g_top: object = None
    g_val: object = None
    g_flux: object = None
    ic_tool: object = None        # f(x1_array) -> degC
    ic_part: object = None


@dataclass
class FieldSolution:
    """Discretized T_tool(x1,t), T_part(x2,t), alpha(x2,t) for one design."""

    times: np.ndarray            # (nt,)
    t_tool: np.ndarray           # (nt, n_tool), degC
    t_part: np.ndarray           # (nt, n_part), degC
    alpha: np.ndarray            # (nt, n_part)
    design: DesignPoint
    bc_scale: float = 1.0
    meta: dict = field(default_factory=dict)

    @property
    def x_tool(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.t_tool.shape[1])

    @property
    def x_part(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.t_part.shape[1])


def solve(design: DesignPoint, props: MaterialSet, grid: Grid1D, *,
          bc_scale: float = 1.0, cooldown: bool = False,
          t0: float = 20.0, alpha_init: float = 0.05,
          forcing: MmsForcing | None = None,
          air_override=None,
          kinetics_substeps: int = 4,
          store_every: int = 1) -> FieldSolution:
    """March the coupled system from the uniform initial state to t_end.

    `air_override` replaces the design's cure-cycle air profile with an
    arbitrary f(t) -> degC (equilibrium and manufactured-solution tests).
    """
    if not 0.0 <= bc_scale <= 1.0:
        raise DomainError("bc_scale must lie in [0, 1]")
    cycle = design.cycle(t0=t0, cooldown=cooldown)
    t_end = grid.t_end if grid.t_end is not None else cycle.duration_s
    n_steps = max(1, int(round(t_end / grid.dt)))
    dt = grid.dt

    n1, n2 = grid.n_tool, grid.n_part
    h1 = 1.0 / (n1 - 1)
    h2 = 1.0 / (n2 - 1)
    x1 = np.linspace(0.0, 1.0, n1)
    x2 = np.linspace(0.0, 1.0, n2)

    tool, part, kinetics = props.tool, props.part, props.kinetics
    c_t = tool.diffusivity / design.l_tool ** 2
    c_c = part.diffusivity / design.l_part ** 2
    r_t = c_t * dt / (2.0 * h1 * h1)
    r_c = c_c * dt / (2.0 * h2 * h2)
    beta_bot = design.h_bot * design.l_tool / tool.k
    beta_top = design.h_top * design.l_part / part.k
    kt_l = tool.k / design.l_tool
    kc_l = part.k / design.l_part
    b_c = part.heat_gen_coeff

    n = n1 + n2
    a = sp.lil_matrix((n, n))
    # tool bottom Robin row (x1 = 0)
    a[0, 0] = -3.0 / (2 * h1) - beta_bot
    a[0, 1] = 4.0 / (2 * h1)
    a[0, 2] = -1.0 / (2 * h1)
    # tool interior Crank-Nicolson rows
    for i in range(1, n1 - 1):
        a[i, i - 1] = -r_t
        a[i, i] = 1.0 + 2.0 * r_t
        a[i, i + 1] = -r_t
    # interface value row at the tool-side node
    a[n1 - 1, n1 - 1] = 1.0
    a[n1 - 1, n1] = -1.0
    # interface flux row at the part-side node (one-sided, second order)
    a[n1, n1 - 3] = kt_l * 1.0 / (2 * h1)
    a[n1, n1 - 2] = kt_l * -4.0 / (2 * h1)
    a[n1, n1 - 1] = kt_l * 3.0 / (2 * h1)
    a[n1, n1] = kc_l * 3.0 / (2 * h2)
    a[n1, n1 + 1] = kc_l * -4.0 / (2 * h2)
    a[n1, n1 + 2] = kc_l * 1.0 / (2 * h2)
    # part interior rows
    for j in range(1, n2 - 1):
        g = n1 + j
        a[g, g - 1] = -r_c
        a[g, g] = 1.0 + 2.0 * r_c
        a[g, g + 1] = -r_c
    # part top Robin row (x2 = 1)
    a[n - 1, n - 1] = 3.0 / (2 * h2) + beta_top
    a[n - 1, n - 2] = -4.0 / (2 * h2)
    a[n - 1, n - 3] = 1.0 / (2 * h2)

    try:
        lu = spla.splu(sp.csc_matrix(a))
    except RuntimeError as err:
        raise SolverError(f"singular conduction system: {err}") from None

    fz = forcing or MmsForcing()
    zero_t = lambda t: 0.0

    def hook(f):
        return f if f is not None else zero_t

    g_bot, g_top = hook(fz.g_bot), hook(fz.g_top)
    g_val, g_flux = hook(fz.g_val), hook(fz.g_flux)

    u = np.full(n, t0, dtype=np.float64)
    if fz.ic_tool is not None:
        u[:n1] = fz.ic_tool(x1)
    if fz.ic_part is not None:
        u[n1:] = fz.ic_part(x2)
    alpha = np.full(n2, alpha_init, dtype=np.float64)

    stored_times = [0.0]
    stored_tool = [u[:n1].copy()]
    stored_part = [u[n1:].copy()]
    stored_alpha = [alpha.copy()]

    rhs = np.zeros(n)
    for step in range(1, n_steps + 1):
        t_old = (step - 1) * dt
        t_new = step * dt
        t_mid = t_old + 0.5 * dt

        t_part_old = u[n1:]
        alpha_new = _advance_alpha(alpha, t_part_old, kinetics, dt,
                                   kinetics_substeps)
        d_alpha = alpha_new - alpha

        ta_new = (air_override(t_new) if air_override is not None
                  else air_temperature(cycle, t_new))
        rhs[0] = -beta_bot * ta_new + g_bot(t_new)
        sl = slice(1, n1 - 1)
        rhs[sl] = (r_t * (u[0:n1 - 2] + u[2:n1])
                   + (1.0 - 2.0 * r_t) * u[1:n1 - 1])
        if fz.source_tool is not None:
            rhs[sl] += dt * fz.source_tool(x1[1:-1], t_mid)
        rhs[n1 - 1] = g_val(t_new)
        rhs[n1] = g_flux(t_new)
        sl = slice(n1 + 1, n - 1)
        rhs[sl] = (r_c * (u[n1:n - 2] + u[n1 + 2:n])
                   + (1.0 - 2.0 * r_c) * u[n1 + 1:n - 1]
                   + bc_scale * b_c * d_alpha[1:-1])
        if fz.source_part is not None:
            rhs[sl] += dt * fz.source_part(x2[1:-1], t_mid)
        rhs[n - 1] = beta_top * ta_new + g_top(t_new)

        u = lu.solve(rhs)
        if not np.all(np.isfinite(u)):
            raise SolverError(f"non-finite temperature at t = {t_new:.1f}s")
        alpha = alpha_new

        if step % store_every == 0 or step == n_steps:
            stored_times.append(t_new)
            stored_tool.append(u[:n1].copy())
            stored_part.append(u[n1:].copy())
            stored_alpha.append(alpha.copy())

    return FieldSolution(
        times=np.array(stored_times),
        t_tool=np.array(stored_tool),
        t_part=np.array(stored_part),
        alpha=np.array(stored_alpha),
        design=design,
        bc_scale=bc_scale,
        meta={"grid": {"n_tool": n1, "n_part": n2, "dt": dt,
                       "t_end": n_steps * dt},
              "property_hash": props.content_hash(),
              "code_version": code_version,
              "cooldown": cooldown},
    )


def _advance_alpha(alpha, t_part_c, kinetics, dt, substeps):
    """Sub-stepped RK4 on the cure ODE with temperature frozen at the start
    of the conduction step. Monotone: every stage rate is nonnegative."""
    t_k = celsius_to_kelvin(np.asarray(t_part_c))
    a = alpha.copy()
    h = dt / substeps
    for _ in range(substeps):
        k1 = cure_rate(a, t_k, kinetics)
        k2 = cure_rate(np.minimum(a + 0.5 * h * k1, 1.0), t_k, kinetics)
        k3 = cure_rate(np.minimum(a + 0.5 * h * k2, 1.0), t_k, kinetics)
        k4 = cure_rate(np.minimum(a + h * k3, 1.0), t_k, kinetics)
        a = np.minimum(a + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4), 1.0)
    return a


def exotherm(sol: FieldSolution):
    """Maximum part temperature with its time and local coordinate. Ties go
    to the earliest time, then the smallest coordinate."""
    if sol.t_part.size == 0:
        raise ValueError("empty solution")
    flat = int(np.argmax(sol.t_part))
    i, j = divmod(flat, sol.t_part.shape[1])
    return float(sol.t_part[i, j]), float(sol.times[i]), float(sol.x_part[j])


_FIELDS = {"tool_temperature": "t_tool", "part_temperature": "t_part",
           "alpha": "alpha"}


def probe(sol: FieldSolution, x: float, t, field_name: str):
    """Bilinear interpolation of a stored field at local coordinate x and
    time(s) t. Scalar t gives a float; an array gives an array."""
    if field_name not in _FIELDS:
        raise ValueError(f"unknown field {field_name!r}")
    data = getattr(sol, _FIELDS[field_name])
    xs = sol.x_tool if field_name == "tool_temperature" else sol.x_part
    if not 0.0 <= x <= 1.0:
        raise DomainError("probe coordinate outside [0, 1]")
    t_arr = np.atleast_1d(np.asarray(t, dtype=np.float64))
    if np.any(t_arr < sol.times[0]) or np.any(t_arr > sol.times[-1]):
        raise DomainError("probe time outside stored range")

    j = np.searchsorted(xs, x, side="right") - 1
    j = min(max(j, 0), len(xs) - 2)
    wx = (x - xs[j]) / (xs[j + 1] - xs[j])
    col = data[:, j] * (1.0 - wx) + data[:, j + 1] * wx

    i = np.searchsorted(sol.times, t_arr, side="right") - 1
    i = np.clip(i, 0, len(sol.times) - 2)
    wt = (t_arr - sol.times[i]) / (sol.times[i + 1] - sol.times[i])
    out = col[i] * (1.0 - wt) + col[i + 1] * wt
    return float(out[0]) if np.isscalar(t) or np.asarray(t).ndim == 0 else out


# -- persistence --------------------------------------------------------------


def export_solution_csv(sol: FieldSolution, path) -> None:
    """Rows: (time_s, x_local, material, T_C, alpha); alpha blank for tool."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["time_s", "x_local", "material", "T_C", "alpha"])
        x1, x2 = sol.x_tool, sol.x_part
        for i, t in enumerate(sol.times):
            for j, x in enumerate(x1):
                writer.writerow([repr(float(t)), repr(float(x)), "tool",
                                 repr(float(sol.t_tool[i, j])), ""])
            for j, x in enumerate(x2):
                writer.writerow([repr(float(t)), repr(float(x)), "part",
                                 repr(float(sol.t_part[i, j])),
                                 repr(float(sol.alpha[i, j]))])


def import_solution_csv(path, design: DesignPoint) -> FieldSolution:
    """Rebuild a FieldSolution from its CSV export."""
    times, tool_rows, part_rows, alpha_rows = [], {}, {}, {}
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        if header != ["time_s", "x_local", "material", "T_C", "alpha"]:
            raise ValueError(f"unexpected solution CSV header in {path}")
        for row in reader:
            t, _x, mat, temp, al = row
            t = float(t)
            if t not in tool_rows:
                times.append(t)
                tool_rows[t], part_rows[t], alpha_rows[t] = [], [], []
            if mat == "tool":
                tool_rows[t].append(float(temp))
            else:
                part_rows[t].append(float(temp))
                alpha_rows[t].append(float(al))
    times_arr = np.array(times)
    return FieldSolution(
        times=times_arr,
        t_tool=np.array([tool_rows[t] for t in times]),
        t_part=np.array([part_rows[t] for t in times]),
        alpha=np.array([alpha_rows[t] for t in times]),
        design=design,
    )


def run_manifest(sol: FieldSolution, props: MaterialSet) -> dict:
    return {
        "design": {k: float(v) for k, v in
                   zip(("h_top", "h_bot", "r1", "ht1", "hd1", "r2", "ht2",
                        "hd2", "l_tool", "l_part"), sol.design.as_array())},
        "grid": sol.meta.get("grid", {}),
        "bc_scale": sol.bc_scale,
        "property_hash": props.content_hash(),
        "property_source": props.source,
        "code_version": code_version,
    }


def write_manifest(sol: FieldSolution, props: MaterialSet, path) -> None:
    with open(path, "w") as f:
        json.dump(run_manifest(sol, props), f, indent=2, sort_keys=True)
        f.write("\n")
