"""Command-line front end.

Subcommands: simulate (press-rheometer run), fit-thermal, fit-viscosity,
fit-friction (characterization from CSV data), bundles (mesoscale kinematics
run) and validate (dry-run config check). Exit codes: 0 success, 1 validation
error, 2 solver failure (partial outputs retained). Every run writes a
MANIFEST.txt listing the produced files.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import bundles as bundles_mod
from . import characterization as char
from . import macro1d
from .io import ConfigError, read_config, read_csv, svg_line_plot, write_csv
from .material import load_material_file


def _ensure_out(out_dir):
    os.makedirs(out_dir, exist_ok=True)
    return out_dir


def _write_manifest(out_dir, paths, note=None):
    manifest = os.path.join(out_dir, "MANIFEST.txt")
    with open(manifest, "w") as fh:
        if note:
            fh.write(f"# {note}\n")
        for p in paths:
            fh.write(os.path.relpath(p, out_dir) + "\n")
    return manifest


def load_scenario(path):
    """Build a macro1d.Scenario from a scenario config file."""
    sections = read_config(path)
    if "scenario" not in sections:
        raise ConfigError(f"{path}: missing section [scenario]")
    sc = sections["scenario"]
    mat_path = sc.get_str("material_file")
    if not os.path.isabs(mat_path):
        mat_path = os.path.join(os.path.dirname(os.path.abspath(path)), mat_path)
    materials = load_material_file(mat_path)

    press = sections.get("press")
    profile = macro1d.DEFAULT_PROFILE
    f_max, pp, pi = 4.4e6, 0.5, 0.5
    if press is not None:
        gaps = press.get_floats("profile_gaps", None)
        speeds = press.get_floats("profile_speeds", None)
        if gaps is not None or speeds is not None:
            if gaps is None or speeds is None or len(gaps) != len(speeds):
                raise ConfigError(
                    f"{path}: [press] needs matching profile_gaps_mm and "
                    f"profile_speeds_mm_s lists"
                )
            profile = tuple(zip(gaps, speeds))
        f_max = press.get_float("F_max", 4.4e6)
        pp = press.get_float("Pp", 0.5)
        pi = press.get_float("Pi", 0.5)

    try:
        return macro1d.Scenario(
            materials=materials,
            X0=sc.get_float("charge_length"),
            h0=sc.get_float("initial_gap"),
            L_max=sc.get_float("tool_length", 0.8),
            W=sc.get_float("tool_width", 0.45),
            T0=sc.get_float("T0", 24.0),
            TM=sc.get_float("TM", 145.0),
            sensors=tuple(sc.get_floats("sensors", list(macro1d.DEFAULT_SENSORS))),
            grid_n=sc.get_int("grid_n", 40),
            closure=sc.get_str("closure", "ibof"),
            profile=profile,
            F_max=f_max,
            Pp=pp,
            Pi=pi,
            hold_after_fill=sc.get_float("hold_after_fill", 2.0),
            t_max=sc.get_float("t_max", 30.0),
            control_dt=sc.get_float("control_dt", 0.01),
            output_dt=sc.get_float("output_dt", 0.05),
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: [scenario] {exc}")


def emit_plots(output, out_dir):
    """SVG line plots of the run series; skipped (with notice) when empty."""
    paths = []
    if output.t.size == 0:
        print("plot output skipped: empty series")
        return paths
    p = os.path.join(out_dir, "force.svg")
    svg_line_plot(p, output.t, {"F": output.F / 1e3},
                  "Compression force", "t in s", "F in kN")
    paths.append(p)
    series = {
        f"{int(round(x * 1000))} mm": output.sensor_p[:, i] / 1e5
        for i, x in enumerate(output.sensors_x)
    }
    p = os.path.join(out_dir, "sensors.svg")
    svg_line_plot(p, output.t, series, "Sensor pressures", "t in s", "p in bar")
    paths.append(p)
    p = os.path.join(out_dir, "orientation.svg")
    svg_line_plot(
        p, output.t, {"Axx": output.Axx_mid, "Ayy": output.Ayy_mid},
        "Mid-charge orientation", "t in s", "component",
    )
    paths.append(p)
    return paths


# ---------------------------------------------------------------------------
# Subcommands

def _cmd_simulate(args):
    scenario = load_scenario(args.scenario)
    out_dir = _ensure_out(args.out)
    paths = []
    try:
        output = macro1d.run_scenario(scenario)
    except macro1d.SolverError as exc:
        partial = getattr(exc, "partial", None)
        if partial is not None and partial.t.size:
            paths = partial.write(out_dir)
        _write_manifest(out_dir, paths, note=f"solver failure: {exc}")
        print(f"solver failure: {exc}", file=sys.stderr)
        return 2
    paths = output.write(out_dir)
    if args.plots:
        paths += emit_plots(output, out_dir)
    paths.append(_write_manifest(out_dir, paths))
    if output.fill_time is not None:
        print(f"filled at t = {output.fill_time:.3f} s")
    print(f"wrote {len(paths)} files to {out_dir}")
    return 0


def _load_thermal_csv(path):
    """Columns: time_s plus one T_<depth>mm column per sensor."""
    header, data = read_csv(path)
    if header[0] != "time_s":
        raise ConfigError(f"{path}: first column must be time_s")
    depths, series = [], []
    for j, name in enumerate(header[1:], start=1):
        if not (name.startswith("T_") and name.endswith("mm")):
            raise ConfigError(
                f"{path}: column '{name}' must look like T_<depth>mm"
            )
        depths.append(float(name[2:-2]) * 1e-3)
        series.append(data[:, j])
    return data[:, 0], list(zip(depths, series))


def _cmd_fit_thermal(args):
    times, sensors = _load_thermal_csv(args.data)
    result = char.fit_thermal(
        {"times": times, "sensors": sensors},
        H=args.stack_height_mm * 1e-3,
        T0=args.T0_C,
        TM=args.TM_C,
        cp=args.cp,
        rho=args.rho,
        guess=(args.guess_kappa, args.guess_k),
    )
    out_dir = _ensure_out(args.out)
    cfg = os.path.join(out_dir, "thermal_fit.cfg")
    with open(cfg, "w") as fh:
        fh.write("[thermal]\n")
        fh.write(f"kappa_W_m_C = {result.kappa:.9g}\n")
        fh.write(f"k_gap_W_m2_C = {result.k_gap:.9g}\n")
        fh.write(f"cp_J_kg_C = {args.cp:.9g}\n")
        fh.write(f"rho0_kg_m3 = {args.rho:.9g}\n")
    txt = os.path.join(out_dir, "thermal_fit.txt")
    with open(txt, "w") as fh:
        fh.write("transverse thermal fit\n")
        fh.write(f"conductivity: {result.kappa:.6g} W/m/degC\n")
        fh.write(f"gap conductance: {result.k_gap:.6g} W/m^2/degC\n")
        fh.write(f"residual: {result.residual:.6g}\n")
        fh.write(f"converged: {result.converged}\n")
    _write_manifest(out_dir, [cfg, txt])
    print(f"kappa = {result.kappa:.4g} W/m/degC, "
          f"k_gap = {result.k_gap:.4g} W/m^2/degC "
          f"(residual {result.residual:.3g})")
    if not result.converged:
        print("warning: fit did not converge within the iteration budget",
              file=sys.stderr)
    return 0


def _cmd_fit_viscosity(args):
    header, data = read_csv(args.data)
    wanted = ["T_C", "gammadot_1_per_s", "eta_Pa_s"]
    if header[:3] != wanted:
        raise ConfigError(f"{args.data}: expected columns {wanted}")
    result = char.fit_viscosity(data[:, :3], gamma0=args.gamma0)
    m = result.model
    out_dir = _ensure_out(args.out)
    cfg = os.path.join(out_dir, "viscosity_fit.cfg")
    with open(cfg, "w") as fh:
        fh.write("[viscosity]\n")
        fh.write(f"D1_Pa_s = {m.D1:.9g}\n")
        fh.write(f"gamma0_per_s = {m.gamma0:.9g}\n")
        fh.write(f"n = {m.n:.9g}\n")
        fh.write(f"Tstar_C = {m.Tstar:.9g}\n")
        fh.write(f"alpha1 = {m.alpha1:.9g}\n")
        fh.write(f"alpha2_C = {m.alpha2:.9g}\n")
    txt = os.path.join(out_dir, "viscosity_fit.txt")
    with open(txt, "w") as fh:
        fh.write("viscosity model fit\n")
        fh.write(f"D1 = {m.D1:.6g} Pa s, n = {m.n:.6g}\n")
        fh.write(f"Tstar = {m.Tstar:.6g} degC, alpha1 = {m.alpha1:.6g}, "
                 f"alpha2 = {m.alpha2:.6g} degC\n")
        fh.write(f"normalized residual: {result.residual:.6g}\n")
        fh.write(f"converged: {result.converged}\n")
    _write_manifest(out_dir, [cfg, txt])
    print(f"D1 = {m.D1:.4g} Pa s, n = {m.n:.4g} "
          f"(residual {result.residual:.3g})")
    return 0


def _load_friction_csv(path):
    """Columns: time_s, h_mm, then p_<x>mm_bar per sensor (ordered by x)."""
    header, data = read_csv(path)
    if header[:2] != ["time_s", "h_mm"]:
        raise ConfigError(f"{path}: first columns must be time_s, h_mm")
    traces = []
    for j, name in enumerate(header[2:], start=2):
        if not (name.startswith("p_") and name.endswith("mm_bar")):
            raise ConfigError(
                f"{path}: column '{name}' must look like p_<x>mm_bar"
            )
        x = float(name[2:-6]) * 1e-3
        traces.append(char.SensorTrace(x, data[:, 0], data[:, j] * 1e5))
    traces.sort(key=lambda tr: tr.sensor_x)
    return data[:, 0], data[:, 1] * 1e-3, traces


def _cmd_fit_friction(args):
    times, h, traces = _load_friction_csv(args.data)
    if len(traces) < 2:
        raise ConfigError(f"{args.data}: need at least two sensor columns")
    hdot = args.hdot_mm_s * 1e-3
    samples = []
    for up, down in zip(traces[:-1], traces[1:]):
        s = char.extract_friction((up, down), h, hdot,
                                  threshold=args.threshold_bar * 1e5)
        if s.size:
            samples.append(s)
    if not samples:
        print("no sensor pair exceeds the pressure-difference threshold",
              file=sys.stderr)
        return 1
    samples = np.vstack(samples)
    v0 = args.v0_mm_s * 1e-3
    result = char.fit_friction(samples, v0)
    out_dir = _ensure_out(args.out)
    cfg = os.path.join(out_dir, "friction_fit.cfg")
    with open(cfg, "w") as fh:
        fh.write("[friction]\n")
        fh.write(f"lambda_N_s_m3 = {result.lam:.9g}\n")
        fh.write(f"m = {result.m:.9g}\n")
        fh.write(f"v0_m_s = {v0:.9g}\n")
    txt = os.path.join(out_dir, "friction_fit.txt")
    with open(txt, "w") as fh:
        fh.write("mold friction fit\n")
        fh.write(f"samples used: {samples.shape[0]}\n")
        fh.write(f"lambda = {result.lam:.6g} N s/m^3\n")
        fh.write(f"m = {result.m:.6g}\n")
        fh.write(f"log-log residual: {result.residual:.6g}\n")
    _write_manifest(out_dir, [cfg, txt])
    print(f"lambda = {result.lam:.4g} N s/m^3, m = {result.m:.4g} "
          f"({samples.shape[0]} samples)")
    return 0


def load_bundle_config(path):
    sections = read_config(path)
    if "bundles" not in sections:
        raise ConfigError(f"{path}: missing section [bundles]")
    return sections


def _cmd_bundles(args):
    sections = load_bundle_config(args.config)
    bc = sections["bundles"]
    extent = (bc.get_float("box_x"), bc.get_float("box_y"), bc.get_float("box_z"))
    seed = args.seed if args.seed is not None else bc.get_int("seed", 0)
    chains = bundles_mod.generate_stack(
        extent,
        bc.get_float("volume_fraction"),
        bundle_length=bc.get_float("bundle_length", 25e-3),
        seed=seed,
        segment_length=bc.get_float("segment_length", 2.5e-3),
        area=bc.get_float("cross_section", 0.03e-6),
    )

    kin = sections.get("kinematics")
    if kin is None:
        raise ConfigError(f"{args.config}: missing section [kinematics]")
    mode = kin.get_str("mode", "elongation")
    t_end = kin.get_float("t_end")
    dt = kin.get_float("dt", 0.05)
    if mode == "elongation":
        field_fn = bundles_mod.elongation_field(kin.get_float("dxx"))
    elif mode == "gap":
        field_fn = bundles_mod.gap_drive_field(
            kin.get_float("gap0"), kin.get_float("gap_rate"), extent[0]
        )
    else:
        raise ConfigError(
            f"{args.config}: [kinematics] mode must be elongation or gap"
        )

    cp = sections.get("coupling")
    eta = cp.get_float("eta", 1e4) if cp else 1e4
    cell = cp.get_float("cell", 2.5e-3) if cp else 2.5e-3
    search = cp.get_float("search_radius", 2.5e-3) if cp else 2.5e-3
    sigma = cp.get_float("sigma", search / 2.0) if cp else search / 2.0
    coeffs = bundles_mod.DragCoefficients(
        k_d=cp.get_float("k_d", 1.0) if cp else 1.0,
        k_l=cp.get_float("k_l", 0.0) if cp else 0.0,
    )
    margin = 1.5
    grid = bundles_mod.EulerGrid.cover(
        lower=(-extent[0] * (margin - 1.0), 0.0, 0.0),
        upper=(extent[0] * margin, extent[1], extent[2]),
        cell=cell,
    )
    result = bundles_mod.run_bundles(
        chains, field_fn, t_end, dt, grid, eta, coeffs=coeffs, sigma=sigma,
        search_radius=search, workers=args.workers,
    )
    out_dir = _ensure_out(args.out)
    paths = []
    p = os.path.join(out_dir, "orientation_series.csv")
    write_csv(p, ["t_s", "Axx", "Ayy", "Azz"],
              [result.times, result.axx, result.ayy, result.azz])
    paths.append(p)
    p = os.path.join(out_dir, "chains.csv")
    bundles_mod.export_chains_csv(p, result.chains)
    paths.append(p)
    p = os.path.join(out_dir, "body_force.csv")
    bundles_mod.export_body_force_csv(p, result.grid)
    paths.append(p)
    paths.append(_write_manifest(out_dir, paths))
    print(f"{len(result.chains)} chains advected; final Axx = "
          f"{result.axx[-1]:.4f}, Azz = {result.azz[-1]:.4f}")
    print(f"wrote {len(paths)} files to {out_dir}")
    return 0


def _cmd_validate(args):
    status = 0
    for path in args.configs:
        try:
            sections = read_config(path)
            if "scenario" in sections:
                load_scenario(path)
                kind = "scenario"
            elif "bundles" in sections:
                load_bundle_config(path)
                kind = "bundles"
            elif "viscosity" in sections:
                load_material_file(path)
                kind = "material"
            else:
                raise ConfigError(
                    f"{path}: no [scenario], [bundles] or [viscosity] section"
                )
            print(f"{path}: ok ({kind})")
        except (ConfigError, ValueError) as exc:
            print(f"{path}: INVALID - {exc}", file=sys.stderr)
            status = 1
    return status


# ---------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="smcflow",
        description=(
            "Compression molding toolkit: press-rheometer simulation, "
            "bundle kinematics and material characterization."
        ),
    )
    default_out = os.environ.get("SMCFLOW_OUT", "out")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a press-rheometer scenario")
    p.add_argument("--scenario", required=True, help="scenario config file")
    p.add_argument("--out", default=default_out, help="output directory")
    p.add_argument("--plots", action="store_true", help="also emit SVG plots")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("fit-thermal", help="fit conductivity and conductance")
    p.add_argument("--data", required=True,
                   help="CSV: time_s, T_<depth>mm per sensor")
    p.add_argument("--out", default=default_out)
    p.add_argument("--stack-height-mm", type=float, default=11.0)
    p.add_argument("--T0-C", dest="T0_C", type=float, default=24.0)
    p.add_argument("--TM-C", dest="TM_C", type=float, default=145.0)
    p.add_argument("--cp", type=float, default=1530.0,
                   help="specific heat in J/kg/degC")
    p.add_argument("--rho", type=float, default=1480.0,
                   help="density in kg/m^3")
    p.add_argument("--guess-kappa", type=float, default=0.1)
    p.add_argument("--guess-k", type=float, default=300.0)
    p.set_defaults(func=_cmd_fit_thermal)

    p = sub.add_parser("fit-viscosity", help="fit the paste viscosity model")
    p.add_argument("--data", required=True,
                   help="CSV: T_C, gammadot_1_per_s, eta_Pa_s")
    p.add_argument("--out", default=default_out)
    p.add_argument("--gamma0", type=float, default=0.1,
                   help="fixed transition shear rate in 1/s")
    p.set_defaults(func=_cmd_fit_viscosity)

    p = sub.add_parser("fit-friction", help="extract and fit mold friction")
    p.add_argument("--data", required=True,
                   help="CSV: time_s, h_mm, p_<x>mm_bar per sensor")
    p.add_argument("--out", default=default_out)
    p.add_argument("--threshold-bar", type=float, default=5.0,
                   help="minimum sensor pressure difference to keep a sample")
    p.add_argument("--hdot-mm-s", dest="hdot_mm_s", type=float, default=-1.0)
    p.add_argument("--v0-mm-s", dest="v0_mm_s", type=float, default=1.0,
                   help="reference velocity of the power law")
    p.set_defaults(func=_cmd_fit_friction)

    p = sub.add_parser("bundles", help="run a bundle kinematics simulation")
    p.add_argument("--config", required=True, help="bundle config file")
    p.add_argument("--out", default=default_out)
    p.add_argument("--seed", type=int, default=None,
                   help="override the stack generation seed")
    p.add_argument("--workers", type=int, default=1,
                   help="worker count for the force accumulation")
    p.set_defaults(func=_cmd_bundles)

    p = sub.add_parser("validate", help="check config files without solving")
    p.add_argument("configs", nargs="+", help="config files to check")
    p.set_defaults(func=_cmd_validate)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
