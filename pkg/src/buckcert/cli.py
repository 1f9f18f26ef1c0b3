"""Command-line interface: analyze, sweep, simulate, modes.

Configuration is a JSON file in SI units; the machine report is JSON with
unit-suffixed field names (_V, _s, _V_per_s, ...).  Exit codes: 0 when the
requested analysis certifies, 2 when it does not, 1 on input errors.
"""

import argparse
import json
import sys as _sys
from dataclasses import dataclass

import numpy as np

from . import lmi, numerics, periodic, simulator
from .model import (ControlConfig, LtiSystem, PowerStageParams, RampParams,
                    StateSpaceBlock, PROPORTIONAL, FULL_LOOP, assemble, shift)
from .numerics import NotHurwitz

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NOT_CERTIFIED = 2

DEFAULT_OPTIONS = {
    "seed": 0,
    "n_scan": 2048,
    "n_check": 2048,
    "duty_grid": [0.1, 0.3, 0.5, 0.7, 0.9],
    "l1_source": "open_loop",          # "open_loop" | "analytic"
    "eps_points": 64,
    "solver_restarts": 20,
    "solver_iterations": 5000,
    "margin_rel": 1e-9,
    "sweep_resolution": 0.05,
    "sim_periods": 200,
    "sim_samples_per_period": 256,
    "sim_x0": "mode*1.5",
    "validate_simulation": False,
}


class ConfigError(Exception):
    pass


def _require_keys(obj, allowed, required, path):
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: expected an object")
    for key in obj:
        if key not in allowed:
            raise ConfigError(f"{path}.{key}: unknown field")
    for key in required:
        if key not in obj:
            raise ConfigError(f"{path}.{key}: missing required field")


def _number(obj, key, path):
    v = obj[key]
    if not isinstance(v, (int, float)) or isinstance(v, bool):
        raise ConfigError(f"{path}.{key}: expected a number")
    return float(v)


def _block(obj, path):
    _require_keys(obj, {"A", "B", "C", "D"}, {"A", "B", "C", "D"}, path)
    try:
        return StateSpaceBlock(A=np.array(obj["A"], dtype=float),
                               B=np.array(obj["B"], dtype=float),
                               C=np.array(obj["C"], dtype=float),
                               D=float(obj["D"]))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


@dataclass
class ConverterConfig:
    power_stage: PowerStageParams
    control: ControlConfig
    ramp: RampParams
    options: dict


def parse_config(raw) -> ConverterConfig:
    _require_keys(raw, {"power_stage", "control", "ramp", "options"},
                  {"power_stage", "control", "ramp"}, "config")
    ps = raw["power_stage"]
    _require_keys(ps, {"R", "C0", "L", "Vs"}, {"R", "C0", "L", "Vs"},
                  "config.power_stage")
    try:
        stage = PowerStageParams(R=_number(ps, "R", "config.power_stage"),
                                 C0=_number(ps, "C0", "config.power_stage"),
                                 L=_number(ps, "L", "config.power_stage"),
                                 Vs=_number(ps, "Vs", "config.power_stage"))
    except ValueError as exc:
        raise ConfigError(f"config.power_stage: {exc}") from exc

    rp = raw["ramp"]
    _require_keys(rp, {"sigma1", "sigma_star", "T"},
                  {"sigma1", "sigma_star", "T"}, "config.ramp")
    try:
        ramp = RampParams(sigma1=_number(rp, "sigma1", "config.ramp"),
                          sigma_star=_number(rp, "sigma_star", "config.ramp"),
                          T=_number(rp, "T", "config.ramp"))
    except ValueError as exc:
        raise ConfigError(f"config.ramp: {exc}") from exc

    ct = raw["control"]
    _require_keys(ct, {"variant", "a", "Vref", "compensator", "sensor"},
                  {"variant", "Vref"}, "config.control")
    variant = ct["variant"]
    try:
        if variant == PROPORTIONAL:
            control = ControlConfig(variant=variant,
                                    Vref=_number(ct, "Vref", "config.control"),
                                    a=_number(ct, "a", "config.control")
                                    if "a" in ct else None)
        elif variant == FULL_LOOP:
            comp = _block(ct.get("compensator"), "config.control.compensator") \
                if ct.get("compensator") is not None else None
            sen = _block(ct.get("sensor"), "config.control.sensor") \
                if ct.get("sensor") is not None else None
            control = ControlConfig(variant=variant,
                                    Vref=_number(ct, "Vref", "config.control"),
                                    compensator=comp, sensor=sen)
        else:
            raise ConfigError(f"config.control.variant: unknown variant {variant!r}")
    except ValueError as exc:
        raise ConfigError(f"config.control: {exc}") from exc

    options = dict(DEFAULT_OPTIONS)
    if "options" in raw:
        opts = raw["options"]
        if not isinstance(opts, dict):
            raise ConfigError("config.options: expected an object")
        for key, val in opts.items():
            if key not in DEFAULT_OPTIONS:
                raise ConfigError(f"config.options.{key}: unknown field")
            options[key] = val
    return ConverterConfig(power_stage=stage, control=control, ramp=ramp,
                           options=options)


def load_config(path) -> ConverterConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return parse_config(raw)


# ---------------------------------------------------------------------------
# report assembly

def _mode_record(mode: periodic.PeriodicMode):
    return {
        "tau0_s": mode.tau0,
        "duty": mode.duty,
        "residual_V": mode.residual,
        "min_margin_V": (None if not np.isfinite(mode.min_margin)
                         else mode.min_margin),
        "mean_output_V": mode.mean_output,
        "L1_V_per_s": mode.L1,
        "l1_source": mode.l1_source,
        "x_start": [float(v) for v in mode.x_hat],
    }


def _certificate_record(cert):
    if cert is None:
        return {"feasible": False, "reason": "not attempted"}
    return {
        "feasible": bool(cert.feasible),
        "values": {k: float(v) for k, v in sorted(cert.values.items())},
        "margins": {k: float(v) for k, v in sorted(cert.margins.items())},
        "margin_norms": {k: float(v) for k, v in sorted(cert.margin_norms.items())},
        "iterations": int(cert.iterations),
        "restarts_used": int(cert.restarts_used),
        "seed": int(cert.seed),
        "solver": cert.solver,
        "notes": list(cert.notes),
    }


def run_analysis(cfg: ConverterConfig, simulate_validation=None):
    """Full pipeline; returns (report_dict, certified: bool)."""
    opts = cfg.options
    seed = int(opts["seed"])
    warnings = []

    sys0 = assemble(cfg.power_stage, cfg.control)
    sysb = shift(sys0)
    shift_vec = (numerics.solve(sys0.A, sys0.q) if np.any(sys0.q)
                 else np.zeros(sys0.m))

    report_exist = periodic.find_modes(sysb, cfg.ramp,
                                       n_scan=int(opts["n_scan"]),
                                       n_check=int(opts["n_check"]),
                                       shift_vec=shift_vec)
    warnings.extend(report_exist.warnings)

    tl1_table, tl1_worst = periodic.l1_open_loop_sweep(
        cfg.power_stage, cfg.control, cfg.ramp, opts["duty_grid"])
    l1_open = tl1_worst / cfg.ramp.T

    mode = report_exist.modes[0] if report_exist.modes else None
    if opts["l1_source"] == "analytic" and mode is not None:
        l1_used = mode.L1
    else:
        l1_used = l1_open

    feas1, eps1, cert1 = lmi.theorem1_sweep(
        sysb, cfg.ramp, points=int(opts["eps_points"]), seed=seed,
        restarts=int(opts["solver_restarts"]),
        iterations=int(opts["solver_iterations"]),
        margin_rel=float(opts["margin_rel"]))

    cert2 = None
    sector_note = None
    if mode is not None:
        try:
            cert2 = lmi.certify_theorem2(
                sysb, cfg.ramp, l1_used, seed=seed,
                restarts=int(opts["solver_restarts"]),
                iterations=int(opts["solver_iterations"]),
                margin_rel=float(opts["margin_rel"]))
        except lmi.SectorViolated as exc:
            sector_note = str(exc)
            warnings.append(f"theorem-2 sector violated: {exc}")

    sim_record = None
    if simulate_validation is None:
        simulate_validation = bool(opts["validate_simulation"])
    if simulate_validation and mode is not None:
        x0 = _parse_x0(str(opts["sim_x0"]), mode)
        trace = simulator.simulate(
            sys0, cfg.ramp,
            simulator.SimConfig(x0=x0, periods=int(opts["sim_periods"]),
                                samples_per_period=int(opts["sim_samples_per_period"])),
            mode=mode)
        diag = simulator.diagnostics(trace, mode, sys0, cfg.ramp)
        sim_record = _diag_record(diag)
        warnings.extend(diag.warnings)

    certified = bool(mode is not None and cert2 is not None and cert2.feasible)
    kappa_rec = None
    if mode is not None and sector_note is None:
        data = lmi.theorem2_data(sysb, cfg.ramp, l1_used)
        kappa_rec = {"kappa_V_per_s": data.kappa, "kappa1": data.kappa1,
                     "kappa2_s": data.kappa2,
                     "sector_V": data.sigma_star - data.T * data.L1}

    report = {
        "existence": {
            "ineq25_holds": bool(report_exist.ineq25_holds),
            "ineq25_lower_V": report_exist.ineq25_bounds[0],
            "psi_V": report_exist.ineq25_bounds[1],
            "ineq25_upper_V": report_exist.ineq25_bounds[2],
            "n_modes": len(report_exist.modes),
            "rejected_roots": [
                {"tau_s": t, "violation_t_s": tv}
                for t, tv in report_exist.rejected_roots],
        },
        "modes": [_mode_record(md) for md in report_exist.modes],
        "l1": {
            "source": opts["l1_source"],
            "duty_grid": [float(d) for d in opts["duty_grid"]],
            "tl1_table": [float(x) for x in tl1_table],
            "tl1_worst": float(tl1_worst),
            "l1_used_V_per_s": float(l1_used),
            "l1_analytic_V_per_s": (mode.L1 if mode is not None else None),
        },
        "theorem1": dict(_certificate_record(cert1),
                         feasible=bool(feas1),
                         eps_1_per_s=(float(eps1) if eps1 is not None else None),
                         gamma_V_per_s=lmi.gamma_value(sysb, cfg.ramp)),
        "theorem2": dict(_certificate_record(cert2),
                         TL1_V=float(cfg.ramp.T * l1_used),
                         sector_note=sector_note,
                         **(kappa_rec or {})),
        "simulation": sim_record,
        "warnings": warnings,
        "options_effective": {k: opts[k] for k in sorted(opts)},
    }
    return report, certified


def _diag_record(diag: simulator.DiagnosticsReport):
    return {
        "converged": bool(diag.converged),
        "final_deviation": diag.final_deviation,
        "final_tau_error_s": diag.final_tau_error,
        "u_bound_ok": bool(diag.u_bound_ok),
        "u_energy_ok": bool(diag.u_energy_ok),
        "u_period_reset_ok": bool(diag.u_period_reset_ok),
        "sector_checked": bool(diag.sector_checked),
        "sector_bound_per_V": (diag.sector_bound
                               if np.isfinite(diag.sector_bound) else None),
        "sector_failures": [int(n) for n in diag.sector_failures],
    }


def report_json(report):
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def _parse_x0(spec, mode):
    spec = spec.strip()
    if spec == "mode":
        return mode.x0(0.0)
    if spec.startswith("mode*"):
        try:
            factor = float(spec[len("mode*"):])
        except ValueError as exc:
            raise ConfigError(f"bad x0 spec {spec!r}") from exc
        return factor * mode.x0(0.0)
    try:
        return np.array([float(tok) for tok in spec.split(",")], dtype=float)
    except ValueError as exc:
        raise ConfigError(f"bad x0 spec {spec!r}") from exc


# ---------------------------------------------------------------------------
# commands

def _emit(report, out_path):
    text = report_json(report)
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text)


def cmd_analyze(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.options["seed"] = args.seed
    report, certified = run_analysis(cfg)
    _emit(report, args.out)
    _print_analysis(report)
    return EXIT_OK if certified else EXIT_NOT_CERTIFIED


def _print_analysis(report):
    ex = report["existence"]
    print(f"Eq.25 inequality: {'holds' if ex['ineq25_holds'] else 'FAILS'} "
          f"({ex['ineq25_lower_V']:.4g} < {ex['psi_V']:.4g} < {ex['ineq25_upper_V']:.4g})")
    print(f"unsaturated T-periodic modes found: {ex['n_modes']}")
    for md in report["modes"]:
        print(f"  tau0 = {md['tau0_s']:.6e} s  duty = {md['duty']:.4f}  "
              f"mean output = {md['mean_output_V']:.3f} V  "
              f"T*L1 = {md['L1_V_per_s'] * md['tau0_s'] / md['duty']:.4g}")
    l1 = report["l1"]
    print(f"T*L1 table over duties {l1['duty_grid']}: "
          f"{[round(x, 4) for x in l1['tl1_table']]} (worst {l1['tl1_worst']:.4f})")
    t1 = report["theorem1"]
    print(f"theorem 1 (existence LMI): {'feasible' if t1['feasible'] else 'infeasible'}"
          + (f" at eps = {t1['eps_1_per_s']:.4g} 1/s" if t1["feasible"] else ""))
    t2 = report["theorem2"]
    print(f"theorem 2 (stability LMI): {'feasible' if t2['feasible'] else 'infeasible'}")
    if t2["feasible"]:
        print(f"  eps = {t2['values']['eps']:.6g}, nu = {t2['values']['nu']:.6g}, "
              f"min margins: " + ", ".join(
                  f"{k}={v:.3e}" for k, v in t2["margins"].items()))
    if report["simulation"]:
        sim = report["simulation"]
        print(f"simulation validation: converged={sim['converged']} "
              f"final deviation={sim['final_deviation']:.3e}")
    for w in report["warnings"]:
        print(f"warning: {w}")


def cmd_modes(args):
    cfg = load_config(args.config)
    sys0 = assemble(cfg.power_stage, cfg.control)
    sysb = shift(sys0)
    shift_vec = (numerics.solve(sys0.A, sys0.q) if np.any(sys0.q)
                 else np.zeros(sys0.m))
    report = periodic.find_modes(sysb, cfg.ramp,
                                 n_scan=int(cfg.options["n_scan"]),
                                 n_check=int(cfg.options["n_check"]),
                                 shift_vec=shift_vec)
    rows = [_mode_record(md) for md in report.modes]
    out = {"modes": rows,
           "rejected_roots": [{"tau_s": t, "violation_t_s": tv}
                              for t, tv in report.rejected_roots],
           "ineq25_holds": bool(report.ineq25_holds)}
    _emit(out, args.out)
    print(f"{'tau0 [s]':>14} {'duty':>8} {'residual [V]':>13} "
          f"{'margin [V]':>11} {'mean U [V]':>11}")
    for md in rows:
        print(f"{md['tau0_s']:>14.6e} {md['duty']:>8.4f} {md['residual_V']:>13.3e} "
              f"{md['min_margin_V']:>11.3e} {md['mean_output_V']:>11.4f}")
    if not rows:
        print("(no unsaturated T-periodic mode)")
    return EXIT_OK


def cmd_sweep(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.options["seed"] = args.seed
    if args.param != "sigma_star":
        print(f"unsupported sweep parameter {args.param!r}", file=_sys.stderr)
        return EXIT_INPUT
    if not (np.isfinite(args.min) and np.isfinite(args.max) and args.min < args.max):
        print("empty or invalid sweep range", file=_sys.stderr)
        return EXIT_INPUT
    target = {"existence": lmi.TARGET_EXISTENCE,
              "stability": lmi.TARGET_STABILITY}[args.target]
    opts = cfg.options
    try:
        res = lmi.min_sigma_star(
            cfg.power_stage, cfg.control, cfg.ramp, target,
            args.min, args.max,
            resolution=float(opts["sweep_resolution"]),
            seed=int(opts["seed"]),
            restarts=int(opts["solver_restarts"]),
            iterations=int(opts["solver_iterations"]),
            l1_source=opts["l1_source"],
            duty_grid=opts["duty_grid"],
            eps_points=int(opts["eps_points"]))
    except lmi.NoBracket as exc:
        print(f"no feasibility bracket: {exc}", file=_sys.stderr)
        return EXIT_NOT_CERTIFIED
    out = {"target": res.target,
           "threshold_V": res.threshold,
           "bracket_V": list(res.bracket),
           "trials": [{"sigma_star_V": s, "feasible": f} for s, f in res.trials],
           "options_effective": {k: opts[k] for k in sorted(opts)}}
    _emit(out, args.out)
    print(f"{'sigma* [V]':>12} {'feasible':>9}")
    for s, f in res.trials:
        print(f"{s:>12.4f} {str(f):>9}")
    print(f"threshold ({args.target}): sigma* >= {res.threshold:.4f} V "
          f"(bracket [{res.bracket[0]:.4f}, {res.bracket[1]:.4f}])")
    return EXIT_OK


def cmd_simulate(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.options["seed"] = args.seed
    sys0 = assemble(cfg.power_stage, cfg.control)
    sysb = shift(sys0)
    shift_vec = (numerics.solve(sys0.A, sys0.q) if np.any(sys0.q)
                 else np.zeros(sys0.m))
    report = periodic.find_modes(sysb, cfg.ramp,
                                 n_scan=int(cfg.options["n_scan"]),
                                 n_check=int(cfg.options["n_check"]),
                                 shift_vec=shift_vec)
    if not report.modes:
        print("no unsaturated T-periodic mode for this configuration",
              file=_sys.stderr)
        return EXIT_NOT_CERTIFIED
    mode = report.modes[0]
    periods = args.periods if args.periods is not None else int(cfg.options["sim_periods"])
    x0 = _parse_x0(args.x0 if args.x0 is not None else str(cfg.options["sim_x0"]),
                   mode)
    if x0.shape != (sys0.m,):
        print(f"x0 has dimension {x0.shape[0]}, system needs {sys0.m}",
              file=_sys.stderr)
        return EXIT_INPUT
    trace = simulator.simulate(
        sys0, cfg.ramp,
        simulator.SimConfig(x0=x0, periods=periods,
                            samples_per_period=int(cfg.options["sim_samples_per_period"])),
        mode=mode)
    diag = simulator.diagnostics(trace, mode, sys0, cfg.ramp)
    if args.out:
        simulator.export_csv(trace, args.out)
        print(f"trace written to {args.out}")
    rec = _diag_record(diag)
    for key in sorted(rec):
        print(f"{key}: {rec[key]}")
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(
        prog="buckcert",
        description="Periodic-mode and LMI stability certification for PWM buck converters")
    sub = ap.add_subparsers(dest="command", required=True)

    pa = sub.add_parser("analyze", help="full certification pipeline")
    pa.add_argument("--config", required=True)
    pa.add_argument("--out", help="write the JSON report here")
    pa.add_argument("--seed", type=int)
    pa.set_defaults(func=cmd_analyze)

    pm = sub.add_parser("modes", help="list unsaturated T-periodic modes")
    pm.add_argument("--config", required=True)
    pm.add_argument("--out")
    pm.set_defaults(func=cmd_modes)

    pw = sub.add_parser("sweep", help="bisect a parameter threshold")
    pw.add_argument("--config", required=True)
    pw.add_argument("--param", default="sigma_star")
    pw.add_argument("--min", type=float, required=True)
    pw.add_argument("--max", type=float, required=True)
    pw.add_argument("--target", choices=["existence", "stability"],
                    required=True)
    pw.add_argument("--out")
    pw.add_argument("--seed", type=int)
    pw.set_defaults(func=cmd_sweep)

    ps = sub.add_parser("simulate", help="event-exact simulation with diagnostics")
    ps.add_argument("--config", required=True)
    ps.add_argument("--periods", type=int)
    ps.add_argument("--x0", help='"mode", "mode*<factor>", or comma list')
    ps.add_argument("--out", help="trace CSV path")
    ps.add_argument("--seed", type=int)
    ps.set_defaults(func=cmd_simulate)
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=_sys.stderr)
        return EXIT_INPUT
    except NotHurwitz as exc:
        print(f"model error: {exc}", file=_sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"i/o error: {exc}", file=_sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    _sys.exit(main())
