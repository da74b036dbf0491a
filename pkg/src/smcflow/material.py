"""Material models shared by all solvers.

Shear/temperature dependent paste viscosity, tabulated compaction equation of
state, power-law mold friction and transverse thermal properties. All
containers are frozen after construction and every operation is pure, so they
are safe to share across workers.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np

from .io import ConfigError, read_config


class MaterialDomainError(ValueError):
    """A material model was evaluated outside its admissible domain."""


class _Counter:
    """Thread-safe diagnostic counter (e.g. out-of-range viscosity lookups)."""

    def __init__(self):
        self._n = 0
        self._lock = threading.Lock()

    def bump(self, k=1):
        with self._lock:
            self._n += k

    def value(self):
        with self._lock:
            return self._n

    def reset(self):
        with self._lock:
            self._n = 0


#: incremented whenever a viscosity lookup clamps T to the fitted range
TEMPERATURE_CLAMPS = _Counter()


@dataclass(frozen=True)
class ViscosityModel:
    """Shear-thinning viscosity with a WLF-type temperature shift.

    eta(gammadot, T) = eta0(T) / (1 + (gammadot/gamma0)^(1-n)) with
    eta0 = D1 * exp(-alpha1*(T - Tstar) / (alpha2 + T - Tstar)).
    """

    D1: float            # reference viscosity at T = Tstar, Pa*s
    gamma0: float        # transition shear rate, 1/s
    n: float             # power-law coefficient
    Tstar: float         # reference temperature, degC
    alpha1: float
    alpha2: float        # degC
    T_range: tuple = (20.0, 80.0)   # fitted range; lookups clamp to it

    def __post_init__(self):
        if self.D1 <= 0:
            raise ValueError("D1 must be positive")
        if self.gamma0 <= 0:
            raise ValueError("gamma0 must be positive")
        if not 0.0 < self.n < 1.0:
            raise ValueError("n must lie in (0, 1)")
        for T in self.T_range:
            if self.alpha2 + (T - self.Tstar) <= 0:
                raise ValueError(
                    "alpha2 + (T - Tstar) must stay positive over T_range"
                )


def viscosity(model, gammadot, T):
    """Viscosity in Pa*s at shear rate(s) gammadot (1/s) and temperature T (degC).

    Finite at gammadot = 0 (returns the zero-shear value). Temperatures outside
    the fitted range are clamped to the nearest bound and counted in
    TEMPERATURE_CLAMPS.
    """
    Tlo, Thi = model.T_range
    if T < Tlo or T > Thi:
        TEMPERATURE_CLAMPS.bump()
        T = min(max(T, Tlo), Thi)
    dT = T - model.Tstar
    if model.alpha2 + dT <= 0:
        raise MaterialDomainError(
            f"temperature {T} degC outside viscosity model domain "
            f"(alpha2 + T - Tstar <= 0)"
        )
    eta0 = model.D1 * np.exp(-model.alpha1 * dT / (model.alpha2 + dT))
    gd = np.asarray(gammadot, dtype=float)
    if np.any(gd < 0):
        raise MaterialDomainError("shear rate must be non-negative")
    eta = eta0 / (1.0 + (gd / model.gamma0) ** (1.0 - model.n))
    return eta if eta.shape else float(eta)


@dataclass(frozen=True)
class EquationOfState:
    """Tabulated compaction law p(E) on Hencky strain knots E <= 0.

    Piecewise-linear between knots, continued with the last-segment slope
    below the deepest knot, clamped to zero in tension (E > 0).
    """

    strain: np.ndarray    # Hencky strain knots, 0 .. most negative
    pressure: np.ndarray  # Pa, increasing

    def __post_init__(self):
        E = np.asarray(self.strain, dtype=float)
        p = np.asarray(self.pressure, dtype=float)
        if E.ndim != 1 or E.shape != p.shape or E.size < 2:
            raise ValueError("equation of state needs matching 1D knot arrays")
        if E[0] != 0.0 or p[0] != 0.0:
            raise ValueError("first equation-of-state knot must be (0, 0)")
        if np.any(np.diff(E) >= 0):
            raise ValueError("strain knots must be strictly decreasing")
        if np.any(np.diff(p) <= 0):
            raise ValueError("pressure knots must be strictly increasing")
        object.__setattr__(self, "strain", E)
        object.__setattr__(self, "pressure", p)

    @classmethod
    def from_table_bar(cls, rows):
        """Build from (strain, pressure_bar) rows."""
        rows = np.asarray(rows, dtype=float)
        return cls(rows[:, 0].copy(), rows[:, 1] * 1e5)

    @classmethod
    def from_csv(cls, path):
        """Load knots from a two-column CSV (strain, pressure_bar)."""
        from .io import read_csv

        header, data = read_csv(path)
        if len(header) < 2:
            raise ValueError(f"{path}: expected columns strain, pressure_bar")
        return cls.from_table_bar(data[:, :2])

    def scaled(self, factor):
        """Copy with all pressures multiplied by factor (stiffened table)."""
        return EquationOfState(self.strain.copy(), self.pressure * factor)


def eos_pressure(eos, E):
    """Pressure in Pa at Hencky strain E (scalar or array); 0 in tension."""
    E = np.asarray(E, dtype=float)
    # np.interp wants increasing x; the table runs 0 -> negative
    xs = eos.strain[::-1]
    ps = eos.pressure[::-1]
    p = np.interp(E, xs, ps)
    # linear continuation below the deepest knot with the final segment slope
    slope = (ps[1] - ps[0]) / (xs[1] - xs[0])
    below = E < xs[0]
    if np.any(below):
        p = np.where(below, ps[0] + slope * (E - xs[0]), p)
    p = np.where(E >= 0.0, 0.0, p)
    return p if p.shape else float(p)


def eos_pressure_from_density(eos, rho, rho0):
    """Pressure from density via E = -ln(rho/rho0); 0 for rho <= rho0."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho <= 0):
        raise MaterialDomainError("density must be positive")
    E = -np.log(rho / rho0)
    p = eos_pressure(eos, E)
    p = np.where(rho <= rho0, 0.0, p)
    return p if p.shape else float(p)


@dataclass(frozen=True)
class FrictionModel:
    """Hydrodynamic mold friction tau = -lam * (|v|/v0)^(m-1) * v."""

    lam: float    # friction coefficient, N*s/m^3
    m: float      # power-law coefficient
    v0: float     # reference velocity, m/s

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lam must be non-negative")
        if not 0.0 < self.m <= 1.0:
            raise ValueError("m must lie in (0, 1]")
        if self.v0 <= 0:
            raise ValueError("v0 must be positive")


def friction_stress(model, v_s):
    """Signed wall shear stress (Pa) opposing slip velocity v_s (m/s).

    Odd in v_s and zero at v_s = 0; the |v| form removes the singularity of
    the literal exponent at v = 0 for m < 1.
    """
    v = np.asarray(v_s, dtype=float)
    av = np.abs(v)
    tau = np.where(
        av < 1e-12,
        0.0,
        -model.lam * (np.maximum(av, 1e-12) / model.v0) ** (model.m - 1.0) * v,
    )
    return tau if tau.shape else float(tau)


@dataclass(frozen=True)
class ThermalProps:
    """Transverse thermal properties of the uncured stack."""

    kappa: float    # conductivity, W/m/degC
    k_gap: float    # mold-stack gap conductance, W/m^2/degC
    cp: float       # specific heat, J/kg/degC
    rho0: float     # reference density, kg/m^3

    def __post_init__(self):
        for name in ("kappa", "k_gap", "cp", "rho0"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class SuspensionParams:
    """Fiber-bundle suspension parameters for the anisotropic stress."""

    f: float              # fiber volume fraction
    r_p: float            # bundle aspect ratio
    C: float = 0.1585     # slender-body constant
    xi: float = 1.0       # shape factor

    def __post_init__(self):
        if not 0.0 < self.f < 1.0:
            raise ValueError("volume fraction must lie in (0, 1)")
        if self.r_p <= 1.0:
            raise ValueError("aspect ratio must exceed 1")
        if not 0.0 <= self.xi <= 1.0:
            raise ValueError("shape factor must lie in [0, 1]")
        if np.log(1.0 / self.f) + np.log(np.log(1.0 / self.f)) + self.C <= 0:
            raise ValueError("log(1/f) + loglog(1/f) + C must be positive")


def equivalent_shear_rate(D):
    """Scalar shear rate sqrt(2 D':D') of a symmetric strain-rate tensor."""
    D = np.asarray(D, dtype=float)
    if D.shape != (3, 3):
        raise ValueError("strain rate must be a 3x3 tensor")
    if not np.allclose(D, D.T, atol=1e-12 * max(1.0, np.abs(D).max())):
        raise ValueError("strain rate must be symmetric")
    dev = D - np.trace(D) / 3.0 * np.eye(3)
    return float(np.sqrt(2.0 * np.tensordot(dev, dev)))


def equivalent_shear_rate_diag(dxx, dyy, dzz):
    """Vectorized sqrt(2 D':D') for diagonal strain rates."""
    m = (dxx + dyy + dzz) / 3.0
    return np.sqrt(2.0 * ((dxx - m) ** 2 + (dyy - m) ** 2 + (dzz - m) ** 2))


@dataclass(frozen=True)
class MaterialSet:
    """Single source of material truth consumed by the solvers."""

    viscosity: ViscosityModel
    eos: EquationOfState
    friction: FrictionModel
    thermal: ThermalProps
    suspension: SuspensionParams | None = None   # None -> Newtonian stress

    def replace(self, **kw):
        from dataclasses import replace as _replace

        return _replace(self, **kw)


def load_material_file(path):
    """Read a MaterialSet from a flat key/value config file.

    Sections: [viscosity], [eos] (inline knots or knots_csv reference),
    [friction], [thermal] and optional [suspension].
    """
    import os

    sections = read_config(path)
    for name in ("viscosity", "eos", "friction", "thermal"):
        if name not in sections:
            raise ConfigError(f"{path}: missing section [{name}]")

    vs = sections["viscosity"]
    visc = ViscosityModel(
        D1=vs.get_float("D1"),
        gamma0=vs.get_float("gamma0"),
        n=vs.get_float("n"),
        Tstar=vs.get_float("Tstar"),
        alpha1=vs.get_float("alpha1"),
        alpha2=vs.get_float("alpha2"),
        T_range=(vs.get_float("T_min", 20.0), vs.get_float("T_max", 80.0)),
    )

    es = sections["eos"]
    if "knots_csv" in es:
        csv_path = es.get_str("knots_csv")
        if not os.path.isabs(csv_path):
            csv_path = os.path.join(os.path.dirname(os.path.abspath(path)), csv_path)
        eos = EquationOfState.from_csv(csv_path)
    elif "knots" in es:
        pairs = es.get_pairs("knots")
        eos = EquationOfState.from_table_bar(pairs)
    else:
        raise ConfigError(f"{path}: section [eos] needs 'knots_csv' or 'knots'")

    fr = sections["friction"]
    fric = FrictionModel(
        lam=fr.get_float("lambda"),
        m=fr.get_float("m"),
        v0=fr.get_float("v0"),
    )

    th = sections["thermal"]
    therm = ThermalProps(
        kappa=th.get_float("kappa"),
        k_gap=th.get_float("k_gap"),
        cp=th.get_float("cp"),
        rho0=th.get_float("rho0"),
    )

    susp = None
    if "suspension" in sections:
        sp = sections["suspension"]
        susp = SuspensionParams(
            f=sp.get_float("volume_fraction"),
            r_p=sp.get_float("aspect_ratio"),
            C=sp.get_float("C", 0.1585),
            xi=sp.get_float("xi", 1.0),
        )

    return MaterialSet(visc, eos, fric, therm, susp)
