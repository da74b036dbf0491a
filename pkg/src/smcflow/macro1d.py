"""One-dimensional press-rheometer solver.

Method of lines for the plug-flow fields (rho, v, Axx, Ayy, Axy) on the
stretched coordinate x* = x/X(t) in [0, 1]. The charge is squeezed between
closing mold faces: the density follows the compaction law, the momentum
balance carries the anisotropic viscous stress and hydrodynamic mold
friction, and the in-plane orientation evolves with the elongation rate.
The flow front X advances explicitly with the front-node velocity until the
tool is full, after which the end condition switches from traction-free to
closed. A press controller ramps the gap and holds the compression force at
its limit once reached.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import solve_ivp

from . import characterization, material, orientation
from .material import MaterialSet

#: active in-mold sensor positions along the flow path (m)
DEFAULT_SENSORS = (0.032, 0.146, 0.248, 0.450, 0.552, 0.604, 0.709)

#: constant-speed press profile: (gap, closing speed) pairs, gap decreasing
DEFAULT_PROFILE = ((10e-3, -1e-3), (0.0, -1e-3))


class SolverError(RuntimeError):
    """Inner field integration failed to converge."""


@dataclass(frozen=True)
class Scenario:
    """Complete description of one press-rheometer run."""

    materials: MaterialSet
    X0: float                       # initial charge length, m
    h0: float                       # initial gap / stack height, m
    L_max: float = 0.8              # tool length, m
    W: float = 0.45                 # tool width, m
    T0: float = 24.0                # initial stack temperature, degC
    TM: float = 145.0               # mold temperature, degC
    sensors: tuple = DEFAULT_SENSORS
    grid_n: int = 40
    closure: str = "ibof"
    profile: tuple = DEFAULT_PROFILE
    F_max: float = 4.4e6            # switch-over force, N
    Pp: float = 0.5
    Pi: float = 0.5
    hold_after_fill: float = 2.0    # s of extra simulation once full
    t_max: float = 30.0             # s, hard stop
    control_dt: float = 0.01        # controller/front increment, s
    output_dt: float = 0.05         # sampling interval of the output, s
    n_series_terms: int = 2000      # average-temperature series length

    def __post_init__(self):
        if not 0.0 < self.X0 <= self.L_max:
            raise ValueError("charge length must satisfy 0 < X0 <= L_max")
        if self.h0 <= 0:
            raise ValueError("initial gap must be positive")
        if self.grid_n < 5:
            raise ValueError("grid_n must be at least 5")
        for x in self.sensors:
            if not 0.0 <= x <= self.L_max:
                raise ValueError("sensors must lie within the tool")
        gaps = [g for g, _ in self.profile]
        if any(b >= a for a, b in zip(gaps, gaps[1:])):
            raise ValueError("press profile gaps must be strictly decreasing")
        if self.F_max <= 0:
            raise ValueError("F_max must be positive")

    @property
    def rho0(self):
        return self.materials.thermal.rho0


@dataclass
class MacroState:
    """Solver state: grid fields plus front position, gap and time."""

    t: float
    X: float
    h: float
    hdot: float
    rho: np.ndarray
    v: np.ndarray
    Axx: np.ndarray
    Ayy: np.ndarray
    Axy: np.ndarray
    filled: bool = False
    fill_time: float | None = None

    @property
    def xstar(self):
        return np.linspace(0.0, 1.0, self.rho.size)

    def copy(self):
        return replace(
            self,
            rho=self.rho.copy(), v=self.v.copy(), Axx=self.Axx.copy(),
            Ayy=self.Ayy.copy(), Axy=self.Axy.copy(),
        )


def initial_state(scenario):
    n = scenario.grid_n
    return MacroState(
        t=0.0,
        X=scenario.X0,
        h=scenario.h0,
        hdot=0.0,
        rho=np.full(n, scenario.rho0),
        v=np.zeros(n),
        Axx=np.full(n, 0.5),
        Ayy=np.full(n, 0.5),
        Axy=np.zeros(n),
    )


class PressController:
    """Press velocity from the gap profile, then force control.

    Below the switch-over force the commanded closing speed interpolates the
    profile at the current gap. The first time the force reaches F_max the
    controller latches into incremental PI force control on the normalized
    error eps = (F_max - F)/F_max * hdot_ref.
    """

    def __init__(self, profile=DEFAULT_PROFILE, F_max=4.4e6, Pp=0.5, Pi=0.5):
        self.profile = tuple((float(g), float(v)) for g, v in profile)
        self.F_max = float(F_max)
        self.Pp = float(Pp)
        self.Pi = float(Pi)
        self.hdot_ref = self.profile[-1][1]
        self.switched = False
        self.switch_time = None
        self.integral = 0.0
        self.hdot = self.profile[0][1]

    def profile_velocity(self, gap):
        gaps = np.array([g for g, _ in self.profile])[::-1]
        speeds = np.array([v for _, v in self.profile])[::-1]
        return float(np.interp(gap, gaps, speeds))

    def velocity(self, F, dt, gap, t=None):
        """Commanded closing speed for the next increment of length dt."""
        if dt <= 0:
            raise ValueError("dt must be positive")
        if not self.switched:
            if F >= self.F_max:
                self.switched = True
                self.switch_time = t
                self.hdot = self.profile_velocity(gap)
            else:
                self.hdot = self.profile_velocity(gap)
                return self.hdot
        eps = (self.F_max - F) / self.F_max * self.hdot_ref
        self.integral += 0.5 * eps * dt
        self.hdot = self.hdot + self.Pp * eps + self.Pi * self.integral
        return self.hdot


def controller_velocity(controller, F, dt, gap=None, t=None):
    """Module-level convenience for PressController.velocity."""
    gap = controller.profile[0][0] if gap is None else gap
    return controller.velocity(F, dt, gap, t)


# ---------------------------------------------------------------------------
# Field equations

def _eta2_coefficient(scenario):
    susp = scenario.materials.suspension
    return 0.0 if susp is None else orientation.eta2_coefficient(susp)


def _field_rates(tau, y, X, h_start, hdot, Tbar, scenario, filled, eta2_coef,
                 v_front):
    """Time derivatives of the packed node fields at inner time tau.

    v_front is the front-node velocity frozen at the sub-step start; using it
    in the grid-relative convection keeps the Jacobian banded (the front
    update is explicit at the same order anyway).
    """
    n = scenario.grid_n
    f = y.reshape(n, 5)
    rho = np.maximum(f[:, 0], 1.0)   # guard against transient undershoot
    v = f[:, 1]
    axx, ayy, axy = f[:, 2], f[:, 3], f[:, 4]
    mats = scenario.materials
    h = h_start + hdot * tau
    dzz = hdot / h
    dx = 1.0 / (n - 1)

    # face quantities between nodes (stress flux is second order on them)
    dxx_f = (v[1:] - v[:-1]) / (dx * X)
    rho_f = 0.5 * (rho[1:] + rho[:-1])
    axx_f = 0.5 * (axx[1:] + axx[:-1])
    ayy_f = 0.5 * (ayy[1:] + ayy[:-1])
    axy_f = 0.5 * (axy[1:] + axy[:-1])
    p_f = material.eos_pressure_from_density(mats.eos, rho_f, scenario.rho0)
    gd_f = material.equivalent_shear_rate_diag(dxx_f, 0.0, dzz)
    eta_f = material.viscosity(mats.viscosity, gd_f, Tbar)
    xxxx_f, _, _ = orientation.planar_fourth_components(
        axx_f, ayy_f, axy_f, scenario.closure
    )
    v_xxxx = (4.0 / 3.0) * eta_f + eta2_coef * eta_f * (xxxx_f - axx_f / 3.0)
    v_xxzz = -(2.0 / 3.0) * eta_f
    sig_f = -p_f + v_xxxx * dxx_f + v_xxzz * dzz

    fric = 2.0 * material.friction_stress(mats.friction, v) / h

    dv = np.zeros(n)
    dv[1:-1] = ((sig_f[1:] - sig_f[:-1]) / (dx * X) + fric[1:-1]) / rho[1:-1]
    if filled:
        dv[-1] = 0.0
    else:
        # traction-free front: zero stress on the outer face of the half cell
        dv[-1] = ((0.0 - sig_f[-1]) / (0.5 * dx * X) + fric[-1]) / rho[-1]

    dxx_n = np.empty(n)
    dxx_n[0] = dxx_f[0]
    dxx_n[-1] = dxx_f[-1]
    dxx_n[1:-1] = 0.5 * (dxx_f[:-1] + dxx_f[1:])

    # motion relative to the stretching grid, upwinded (zero at both ends)
    c = v - np.linspace(0.0, 1.0, n) * v_front
    conv_fac = c / X

    def convection(phi):
        fwd = (phi[1:] - phi[:-1]) / dx
        dphi = np.zeros(n)
        dphi[1:-1] = np.where(c[1:-1] > 0.0, fwd[:-1], fwd[1:])
        return -conv_fac * dphi

    drho = -rho * (dxx_n + dzz) + convection(rho)

    xxxx_n, xxyy_n, xxxy_n = orientation.planar_fourth_components(
        axx, ayy, axy, scenario.closure
    )
    daxx = 2.0 * (axx - xxxx_n) * dxx_n + convection(axx)
    dayy = -2.0 * xxyy_n * dxx_n + convection(ayy)
    daxy = (axy - 2.0 * xxxy_n) * dxx_n + convection(axy)

    out = np.empty_like(f)
    out[:, 0] = drho
    out[:, 1] = dv
    out[:, 2] = daxx
    out[:, 3] = dayy
    out[:, 4] = daxy
    out[0, 1] = 0.0   # closed end: v = 0 at all times
    return out.ravel()


def assemble_rates(state, scenario, Tbar):
    """Instantaneous (drho, dv, dAxx, dAyy, dAxy) per node for the state."""
    y = _pack(state)
    rates = _field_rates(
        0.0, y, state.X, state.h, state.hdot, Tbar, scenario, state.filled,
        _eta2_coefficient(scenario), float(state.v[-1]),
    ).reshape(scenario.grid_n, 5)
    return rates[:, 0], rates[:, 1], rates[:, 2], rates[:, 3], rates[:, 4]


def _pack(state):
    return np.column_stack(
        [state.rho, state.v, state.Axx, state.Ayy, state.Axy]
    ).ravel()


def _unpack_into(state, y):
    f = y.reshape(-1, 5)
    state.rho = f[:, 0].copy()
    state.v = f[:, 1].copy()
    state.Axx = f[:, 2].copy()
    state.Ayy = f[:, 3].copy()
    state.Axy = f[:, 4].copy()


def average_temperature_now(scenario, state):
    """Thickness-averaged charge temperature for the current gap and time."""
    return characterization.average_temperature(
        scenario.materials.thermal, scenario.T0, scenario.TM,
        scenario.h0, state.h, state.t, scenario.n_series_terms,
    )


def step(state, scenario, controller, dt):
    """Advance the state by dt: controller, field integration, front update.

    The field system is integrated implicitly with local error control
    (rtol 1e-6, velocity atol 1e-9 m/s); the increment is internally split so
    the front never advances more than one grid cell per sub-step. The fill
    switch latches when X reaches the tool length.
    """
    if dt == 0.0:
        return state.copy()
    if dt < 0.0:
        raise ValueError("dt must be non-negative")
    n = scenario.grid_n
    new = state.copy()
    F = total_force(new, scenario)
    hdot = controller.velocity(F, dt, new.h, new.t)
    new.hdot = hdot
    Tbar = average_temperature_now(scenario, new)
    eta2_coef = _eta2_coefficient(scenario)

    atol = np.tile([1e-6 * scenario.rho0, 1e-9, 1e-9, 1e-9, 1e-9], n)
    remaining = dt
    while remaining > 1e-15:
        vfront = float(new.v[-1])
        if not new.filled and vfront > 0.0:
            cell = new.X / (n - 1)
            dt_sub = min(remaining, 0.9 * cell / vfront)
        else:
            dt_sub = remaining
        y0 = _pack(new)
        sol = solve_ivp(
            _field_rates,
            (0.0, dt_sub),
            y0,
            method="LSODA",
            rtol=1e-6,
            atol=atol,
            lband=9,
            uband=9,
            args=(new.X, new.h, hdot, Tbar, scenario, new.filled, eta2_coef,
                  vfront),
        )
        if not sol.success:
            raise SolverError(
                f"field integration failed at t = {new.t:.4f} s: {sol.message}"
            )
        _unpack_into(new, sol.y[:, -1])
        if not (np.all(np.isfinite(new.rho)) and np.all(new.rho > 0)):
            raise SolverError(f"non-physical density at t = {new.t:.4f} s")
        new.h += hdot * dt_sub
        if new.h <= 0:
            raise SolverError("gap closed completely")
        if not new.filled:
            X_new = new.X + vfront * dt_sub
            if X_new >= scenario.L_max:
                if vfront > 0:
                    new.fill_time = new.t + (scenario.L_max - new.X) / vfront
                else:
                    new.fill_time = new.t
                new.X = scenario.L_max
                new.filled = True
                new.v[-1] = 0.0
            else:
                new.X = X_new
        new.t += dt_sub
        remaining -= dt_sub
        # keep the planar pair consistent against closure drift
        s = new.Axx + new.Ayy
        new.Axx /= s
        new.Ayy /= s
        new.Axy /= s
    new.v[0] = 0.0
    return new


# ---------------------------------------------------------------------------
# Observables

def _sigma_zz_field(state, scenario, Tbar=None):
    """Thickness-normal stress per node (Pa, negative in compression)."""
    if Tbar is None:
        Tbar = average_temperature_now(scenario, state)
    n = scenario.grid_n
    dx = 1.0 / (n - 1)
    mats = scenario.materials
    dzz = state.hdot / state.h
    dxx_f = (state.v[1:] - state.v[:-1]) / (dx * state.X)
    dxx_n = np.empty(n)
    dxx_n[0] = dxx_f[0]
    dxx_n[-1] = dxx_f[-1]
    dxx_n[1:-1] = 0.5 * (dxx_f[:-1] + dxx_f[1:])
    p = material.eos_pressure_from_density(mats.eos, state.rho, scenario.rho0)
    gd = material.equivalent_shear_rate_diag(dxx_n, 0.0, dzz)
    eta = material.viscosity(mats.viscosity, gd, Tbar)
    eta2 = _eta2_coefficient(scenario) * eta
    v_zzxx = -(2.0 / 3.0) * eta - eta2 * state.Axx / 3.0
    v_zzzz = (4.0 / 3.0) * eta
    return -p + v_zzxx * dxx_n + v_zzzz * dzz


def sigma_zz(state, scenario, xstar):
    """Normal stress at stretched position(s) xstar in [0, 1]."""
    xq = np.asarray(xstar, dtype=float)
    if np.any(xq < 0) or np.any(xq > 1):
        raise ValueError("xstar must lie in [0, 1]")
    field_vals = _sigma_zz_field(state, scenario)
    out = np.interp(xq, state.xstar, field_vals)
    return out if out.shape else float(out)


def total_force(state, scenario):
    """Total compression force from the gauge-pressure integral (N)."""
    gauge = np.maximum(-_sigma_zz_field(state, scenario), 0.0)
    return float(
        scenario.W * state.X * np.trapezoid(gauge, state.xstar)
    )


def sensor_pressures(state, scenario):
    """Gauge pressure (Pa) at each sensor; zero beyond the flow front."""
    gauge = np.maximum(-_sigma_zz_field(state, scenario), 0.0)
    out = np.zeros(len(scenario.sensors))
    for i, x_s in enumerate(scenario.sensors):
        if x_s <= state.X:
            out[i] = float(np.interp(x_s / state.X, state.xstar, gauge))
    return out


# ---------------------------------------------------------------------------
# Orchestration

@dataclass
class SimulationOutput:
    """Sampled time series of one run plus fill/switch events."""

    t: np.ndarray
    h: np.ndarray
    hdot: np.ndarray
    F: np.ndarray
    X: np.ndarray
    sensor_p: np.ndarray       # (n_out, n_sensors), Pa
    Axx_mid: np.ndarray
    Ayy_mid: np.ndarray
    sensors_x: tuple
    fill_time: float | None = None
    switch_time: float | None = None
    completed: bool = True
    fields: list | None = None   # optional (t, state copy) snapshots

    def write(self, out_dir):
        """Emit force.csv, sensors.csv and orientation.csv; returns paths."""
        import os

        from .io import write_csv

        paths = []
        p = os.path.join(out_dir, "force.csv")
        write_csv(p, ["t_s", "h_m", "hdot_m_s", "F_N"],
                  [self.t, self.h, self.hdot, self.F])
        paths.append(p)
        p = os.path.join(out_dir, "sensors.csv")
        header = ["t_s"] + [
            f"p_{int(round(x * 1000))}mm_bar" for x in self.sensors_x
        ]
        cols = [self.t] + [self.sensor_p[:, i] / 1e5
                           for i in range(self.sensor_p.shape[1])]
        write_csv(p, header, cols)
        paths.append(p)
        p = os.path.join(out_dir, "orientation.csv")
        write_csv(p, ["t_s", "Axx_mid", "Ayy_mid"],
                  [self.t, self.Axx_mid, self.Ayy_mid])
        paths.append(p)
        return paths


def run_scenario(scenario, keep_fields=False):
    """Run a scenario to fill plus hold (or t_max) and sample the output.

    On an inner-solver failure the partial output collected so far is
    attached to the raised SolverError as exc.partial.
    """
    state = initial_state(scenario)
    controller = PressController(
        scenario.profile, scenario.F_max, scenario.Pp, scenario.Pi
    )
    rows = []
    fields = [] if keep_fields else None

    def record(st):
        rows.append((
            st.t, st.h, st.hdot, total_force(st, scenario), st.X,
            sensor_pressures(st, scenario),
            float(np.interp(0.5, st.xstar, st.Axx)),
            float(np.interp(0.5, st.xstar, st.Ayy)),
        ))
        if keep_fields:
            fields.append((st.t, st.copy()))

    record(state)
    next_out = scenario.output_dt
    try:
        while state.t < scenario.t_max - 1e-9:
            state = step(state, scenario, controller, scenario.control_dt)
            if state.t >= next_out - 1e-9:
                record(state)
                next_out += scenario.output_dt
            if (
                state.filled
                and state.t >= state.fill_time + scenario.hold_after_fill
            ):
                break
    except SolverError as exc:
        exc.partial = _rows_to_output(rows, scenario, state, controller,
                                      fields, completed=False)
        raise
    return _rows_to_output(rows, scenario, state, controller, fields,
                           completed=True)


def _rows_to_output(rows, scenario, state, controller, fields, completed):
    arr = list(zip(*rows))
    return SimulationOutput(
        t=np.asarray(arr[0]),
        h=np.asarray(arr[1]),
        hdot=np.asarray(arr[2]),
        F=np.asarray(arr[3]),
        X=np.asarray(arr[4]),
        sensor_p=np.asarray(arr[5]),
        Axx_mid=np.asarray(arr[6]),
        Ayy_mid=np.asarray(arr[7]),
        sensors_x=tuple(scenario.sensors),
        fill_time=state.fill_time,
        switch_time=controller.switch_time,
        completed=completed,
        fields=fields,
    )
