"""Forward and inverse material characterization.

Transverse 1D heat conduction in a stack on a hot mold with a fit of
(conductivity, gap conductance), the closed-form average-temperature series
used by the press solver, viscosity-model fitting from rheometer sweeps and
mold-friction extraction from press-rheometer pressure traces.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded
from scipy.optimize import minimize

from .material import ThermalProps, ViscosityModel, viscosity

MAX_FIT_ITER = 2000
FIT_XTOL = 1e-6   # parameter-relative simplex convergence


@dataclass(frozen=True)
class HeatField:
    """Temperature profile over the stack thickness at one instant."""

    z_nodes: np.ndarray   # m, strictly increasing over [0, H]
    T: np.ndarray         # degC per node
    t: float              # s

    def __post_init__(self):
        z = np.asarray(self.z_nodes, dtype=float)
        T = np.asarray(self.T, dtype=float)
        if z.ndim != 1 or z.size < 2 or z.shape != T.shape:
            raise ValueError("heat field needs matching 1D arrays, >= 2 nodes")
        if np.any(np.diff(z) <= 0):
            raise ValueError("node positions must be strictly increasing")
        object.__setattr__(self, "z_nodes", z)
        object.__setattr__(self, "T", T)


@dataclass(frozen=True)
class SensorTrace:
    """Gauge pressure history of one in-mold sensor."""

    sensor_x: float       # position along the flow path, m
    times: np.ndarray     # s, strictly increasing
    pressures: np.ndarray # Pa, >= 0

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        p = np.asarray(self.pressures, dtype=float)
        if t.ndim != 1 or t.shape != p.shape:
            raise ValueError("sensor trace needs matching 1D arrays")
        if np.any(np.diff(t) <= 0):
            raise ValueError("sensor times must be strictly increasing")
        if np.any(p < 0):
            raise ValueError("sensor pressures must be non-negative")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "pressures", p)


# ---------------------------------------------------------------------------
# Transverse heat conduction

def solve_heat_1d(props, H, T0, TM, t_end, nz=111, output_times=None, dt=None):
    """Implicit finite-volume solve of the stack heating problem.

    rho*cp*dT/dt = kappa*d2T/dz2 on [0, H] with mold-side Robin influx
    k_gap*(TM - T) at z = 0, an insulated top at z = H and uniform initial
    temperature T0. Backward-Euler stepping is unconditionally stable; the
    flux discretization is second order on the uniform grid. Returns one
    HeatField per requested output time (default: only t_end).
    """
    if nz < 10:
        raise ValueError("invalid grid: need nz >= 10")
    if t_end <= 0:
        raise ValueError("t_end must be positive")
    if output_times is None:
        output_times = [t_end]
    output_times = sorted(float(t) for t in output_times)
    if output_times[0] < 0 or output_times[-1] > t_end + 1e-12:
        raise ValueError("output times must lie in [0, t_end]")
    if dt is None:
        dt = t_end / 2000.0

    dz = H / (nz - 1)
    z = np.linspace(0.0, H, nz)
    a = props.kappa / (props.cp * props.rho0)        # diffusivity
    r = a * dt / dz ** 2
    robin = props.k_gap * dt / (props.cp * props.rho0 * dz / 2.0)

    # banded (I - dt*L) for cells of width dz (half cells at both ends)
    ab = np.zeros((3, nz))
    ab[0, 1:] = -r                      # superdiagonal
    ab[2, :-1] = -r                     # subdiagonal
    ab[1, :] = 1.0 + 2.0 * r
    ab[1, 0] = 1.0 + 2.0 * r + robin    # half cell: flux scale doubles
    ab[0, 1] = -2.0 * r
    ab[1, -1] = 1.0 + 2.0 * r
    ab[2, -2] = -2.0 * r

    T = np.full(nz, float(T0))
    fields = []
    t = 0.0
    for t_out in output_times:
        while t < t_out - 1e-12:
            step = min(dt, t_out - t)
            if abs(step - dt) > 1e-12 * dt:
                # remainder step: rebuild the banded matrix for this dt
                fields_step = _heat_step(T, props, H, TM, nz, step)
                T = fields_step
            else:
                rhs = T.copy()
                rhs[0] += robin * TM
                T = solve_banded((1, 1), ab, rhs)
            t += step
        fields.append(HeatField(z, T.copy(), t_out))
    return fields


def _heat_step(T, props, H, TM, nz, dt):
    dz = H / (nz - 1)
    a = props.kappa / (props.cp * props.rho0)
    r = a * dt / dz ** 2
    robin = props.k_gap * dt / (props.cp * props.rho0 * dz / 2.0)
    ab = np.zeros((3, nz))
    ab[0, 1:] = -r
    ab[2, :-1] = -r
    ab[1, :] = 1.0 + 2.0 * r
    ab[1, 0] = 1.0 + 2.0 * r + robin
    ab[0, 1] = -2.0 * r
    ab[1, -1] = 1.0 + 2.0 * r
    ab[2, -2] = -2.0 * r
    rhs = T.copy()
    rhs[0] += robin * TM
    return solve_banded((1, 1), ab, rhs)


def sample_heat_solution(props, H, T0, TM, depths, times, nz=111, dt=None):
    """Temperatures at sensor depths for each time; rows are times."""
    fields = solve_heat_1d(props, H, T0, TM, times[-1], nz=nz,
                           output_times=times, dt=dt)
    out = np.empty((len(times), len(depths)))
    for i, f in enumerate(fields):
        out[i] = np.interp(depths, f.z_nodes, f.T)
    return out


@dataclass(frozen=True)
class ThermalFitResult:
    kappa: float
    k_gap: float
    residual: float
    converged: bool
    iterations: int


def fit_thermal(measured, H, T0, TM, cp, rho, guess, nz=111, dt=None):
    """Recover (kappa, k_gap) from stack temperature measurements.

    measured is a list of (depth_m, temperature_series) sharing one time base
    given as measured[0] = ('times', time_array) or passed as dict
    {'times': t, 'sensors': [(depth, series), ...]}. A derivative-free simplex
    descent minimizes the summed squared temperature error of the forward
    solution interpolated at the sensor depths and times.
    """
    times, sensors = _unpack_measured(measured)
    if len(sensors) < 2:
        raise ValueError("need at least two sensors at distinct depths")
    depths = np.array([d for d, _ in sensors], dtype=float)
    if np.unique(depths).size != depths.size:
        raise ValueError("sensor depths must be distinct")
    data = np.column_stack([np.asarray(s, dtype=float) for _, s in sensors])

    guess = np.asarray(guess, dtype=float)
    if np.any(guess <= 0):
        raise ValueError("guess for (kappa, k_gap) must be positive")

    def objective(u):
        kappa, k_gap = guess * np.exp(u)
        props = ThermalProps(kappa=kappa, k_gap=k_gap, cp=cp, rho0=rho)
        pred = sample_heat_solution(props, H, T0, TM, depths, times, nz=nz, dt=dt)
        return float(np.sum((pred - data) ** 2))

    res = minimize(
        objective,
        np.zeros(2),
        method="Nelder-Mead",
        options={"maxiter": MAX_FIT_ITER, "xatol": FIT_XTOL, "fatol": 1e-12},
    )
    kappa, k_gap = guess * np.exp(res.x)
    return ThermalFitResult(
        kappa=float(kappa),
        k_gap=float(k_gap),
        residual=float(res.fun),
        converged=bool(res.success),
        iterations=int(res.nit),
    )


def _unpack_measured(measured):
    if isinstance(measured, dict):
        return np.asarray(measured["times"], dtype=float), list(measured["sensors"])
    measured = list(measured)
    if measured and measured[0][0] == "times":
        times = np.asarray(measured[0][1], dtype=float)
        return times, measured[1:]
    raise ValueError(
        "measured data must be {'times': t, 'sensors': [(depth, series), ...]}"
    )


def average_temperature(props, T0, TM, h0, h, t, n_terms=2000):
    """Thickness-averaged stack temperature at time t for gap h.

    Series solution for ideal mold contact on both faces,
    Tbar = TM + (TM - T0) * (4/pi^2) * sum_q [(cos(q pi) - 1)/q^2]
           * exp(-q^2 pi^2 kappa t / (h0 h rho cp));
    only odd q contribute. Monotone from T0 toward TM.
    """
    if n_terms < 50:
        raise ValueError("need n_terms >= 50")
    q = np.arange(1, n_terms + 1, dtype=float)
    coeff = (np.cos(q * np.pi) - 1.0) / q ** 2
    tau = np.pi ** 2 * props.kappa * t / (h0 * h * props.rho0 * props.cp)
    series = np.sum(coeff * np.exp(-(q ** 2) * tau))
    return float(TM + (TM - T0) * (4.0 / np.pi ** 2) * series)


# ---------------------------------------------------------------------------
# Viscosity fit

@dataclass(frozen=True)
class ViscosityFitResult:
    model: ViscosityModel
    residual: float
    converged: bool
    iterations: int


def fit_viscosity(measurements, gamma0=0.1, guess=None):
    """Fit (D1, n, Tstar, alpha1, alpha2) to (T, gammadot, eta) triplets.

    Minimizes the sum of squared normalized errors ((eta_model - eta)/eta)^2
    with the transition shear rate held fixed. The temperature-shift triplet
    is only weakly identified (the model family is effectively three
    dimensional in T), so the optimum is anchored near the supplied guess.
    """
    meas = np.asarray(measurements, dtype=float)
    if meas.ndim != 2 or meas.shape[1] != 3:
        raise ValueError("measurements must be rows of (T, gammadot, eta)")
    temps = np.unique(meas[:, 0])
    if temps.size < 2:
        raise ValueError("need measurements at >= 2 temperatures")
    for T in temps:
        if np.sum(meas[:, 0] == T) < 4:
            raise ValueError("need >= 4 shear rates per temperature")

    if guess is None:
        # zero-shear estimate at the lowest rate of the middle temperature
        Tmid = temps[temps.size // 2]
        sel = meas[:, 0] == Tmid
        gd_min = meas[sel, 1].min()
        eta_min = meas[sel][meas[sel, 1].argmin(), 2]
        d1 = eta_min * (1.0 + (gd_min / gamma0) ** 0.6)
        guess = np.array([d1, 0.4, Tmid, 8.0, 100.0])
    guess = np.asarray(guess, dtype=float)

    T_all, gd_all, eta_all = meas[:, 0], meas[:, 1], meas[:, 2]
    t_lo, t_hi = float(temps.min()), float(temps.max())

    def objective(u):
        d1, n, tstar, a1, a2 = guess * u
        if d1 <= 0 or not 0.0 < n < 1.0 or a2 + (t_lo - tstar) <= 0:
            return 1e12
        eta0 = d1 * np.exp(-a1 * (T_all - tstar) / (a2 + T_all - tstar))
        model_eta = eta0 / (1.0 + (gd_all / gamma0) ** (1.0 - n))
        return float(np.sum(((model_eta - eta_all) / eta_all) ** 2))

    res = minimize(
        objective,
        np.ones(5),
        method="Nelder-Mead",
        options={"maxiter": MAX_FIT_ITER, "xatol": FIT_XTOL, "fatol": 1e-14},
    )
    d1, n, tstar, a1, a2 = guess * res.x
    model = ViscosityModel(
        D1=float(d1), gamma0=float(gamma0), n=float(n), Tstar=float(tstar),
        alpha1=float(a1), alpha2=float(a2), T_range=(t_lo, t_hi),
    )
    return ViscosityFitResult(
        model=model,
        residual=float(res.fun),
        converged=bool(res.success),
        iterations=int(res.nit),
    )


# ---------------------------------------------------------------------------
# Mold friction

def extract_friction(pair, h, hdot, threshold=5e5):
    """Friction stress / slip velocity samples from one sensor pair.

    For every time sample whose upstream-downstream pressure difference
    exceeds the threshold (default 5 bar, below which the sensors are too
    imprecise), the force balance between the sensors gives
    tau = h (p_down - p_up) / (2 dx) and plug-flow continuity gives the slip
    velocity at the pair midpoint. Returns an (n, 2) array of (v_s, tau).
    """
    up, down = pair
    if up.times.shape != down.times.shape or np.any(up.times != down.times):
        raise ValueError("sensor traces must share one time base")
    if down.sensor_x <= up.sensor_x:
        raise ValueError("second sensor must sit downstream of the first")
    times = up.times
    h_arr = h(times) if callable(h) else np.broadcast_to(
        np.asarray(h, dtype=float), times.shape
    )
    keep = (up.pressures - down.pressures) > threshold
    if not np.any(keep):
        return np.empty((0, 2))
    dx = down.sensor_x - up.sensor_x
    x_mid = up.sensor_x + dx / 2.0
    tau = h_arr[keep] * (down.pressures[keep] - up.pressures[keep]) / (2.0 * dx)
    v_s = (hdot / h_arr[keep]) * x_mid
    return np.column_stack([v_s, tau])


@dataclass(frozen=True)
class FrictionFitResult:
    lam: float
    m: float
    residual: float


def fit_friction(samples, v0):
    """Power-law friction parameters from (v_s, tau) samples.

    Linear regression of log|tau| on log(|v_s|/v0): the slope is the
    power-law coefficient m and the intercept maps to lam. Exact on exact
    power-law data.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2 or samples.shape[1] != 2 or samples.shape[0] < 3:
        raise ValueError("need at least three (v_s, tau) samples")
    v = np.abs(samples[:, 0])
    tau = np.abs(samples[:, 1])
    if np.any(v <= 0) or np.any(tau <= 0):
        raise ValueError("samples must have non-zero speed and stress")
    x = np.log(v / v0)
    if np.ptp(x) < 1e-12:
        raise ValueError("degenerate samples: all slip speeds equal")
    y = np.log(tau)
    m_fit, intercept = np.polyfit(x, y, 1)
    lam = np.exp(intercept) / v0
    residual = float(np.sum((y - (m_fit * x + intercept)) ** 2))
    return FrictionFitResult(lam=float(lam), m=float(m_fit), residual=residual)
