"""Command-line front end.

Exit codes: 0 success, 2 input/validation error, 3 numerical/bracket
failure, 4 internal error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .datasets import (
    NM,
    dumps_exact,
    extract_visibility,
    load_dataset,
    load_scan,
    parse_model,
    serialize_dataset,
    synth_dataset,
)
from .errors import (
    BracketError,
    ConfigError,
    DomainError,
    InsufficientDataError,
    KDTLError,
    NotApplicableError,
    NumericalQualityError,
    ParseError,
    ValidationError,
)
from .fitting import FitOptions, analyze, sigma_abs_sensitivity
from .oracle import DEFAULT_PHIS, DEFAULT_RATIOS, OracleConfig, compare_sweep
from .physics import CM2, visibility_avg, visibility_signed

log = logging.getLogger("kdtl")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_INTERNAL = 0, 2, 3, 4


def _sha256(paths):
    digest = hashlib.sha256()
    for p in paths:
        digest.update(Path(p).read_bytes())
    return digest.hexdigest()


def _header(command, lines):
    out = [f"# kdtl {__version__} {command}"]
    out += [f"# {line}" for line in lines]
    return "\n".join(out) + "\n"


def _write(text, out):
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _power_grid(args):
    if args.powers:
        values = [float(p) for p in args.powers.split(",") if p.strip()]
    else:
        values = list(np.linspace(args.pmin, args.pmax, args.n))
    if not values:
        raise DomainError("empty power grid")
    return np.array(values)


def _load_model(args):
    text = Path(args.config).read_text(encoding="utf-8")
    label, molecule, geometry, velocity = parse_model(text)
    if getattr(args, "alpha_A3", None) is not None:
        molecule = molecule.with_alpha(args.alpha_A3)
    if args.sigma_abs_cm2 is not None:
        molecule = molecule.with_sigma_abs(args.sigma_abs_cm2 * CM2)
    if args.dv_zero:
        velocity = velocity.with_zero_spread()
    if molecule.alpha_vol is None:
        raise ValidationError("predictions need a polarizability (alpha_A3 or --alpha-A3)", "molecule.alpha_A3")
    return label, molecule, geometry, velocity


def _load_datasets(args):
    datasets = [load_dataset(p) for p in args.datasets]
    if args.sigma_abs_cm2 is not None:
        datasets = [ds.replace(molecule=ds.molecule.with_sigma_abs(args.sigma_abs_cm2 * CM2)) for ds in datasets]
    return datasets


def _fit_options(args):
    kwargs = {}
    if args.config:
        cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
        allowed = {"alpha_bracket", "alpha_tol", "power_calibration", "power_calibration_rel", "waist_rel", "budget_mode"}
        unknown = set(cfg) - allowed
        if unknown:
            raise ParseError(f"unknown key(s) {sorted(unknown)}", "fit config")
        kwargs.update(cfg)
        if "alpha_bracket" in kwargs:
            kwargs["alpha_bracket"] = tuple(kwargs["alpha_bracket"])
    if args.bracket:
        kwargs["alpha_bracket"] = tuple(args.bracket)
    if args.tol is not None:
        kwargs["alpha_tol"] = args.tol
    if args.power_calibration is not None:
        kwargs["power_calibration"] = args.power_calibration
    if getattr(args, "budget_mode", None):
        kwargs["budget_mode"] = args.budget_mode
    return FitOptions(**kwargs)


def cmd_predict(args):
    label, molecule, geometry, velocity = _load_model(args)
    powers = _power_grid(args)
    cal = args.power_calibration if args.power_calibration is not None else 1.0
    avg = np.atleast_1d(visibility_avg(molecule, geometry, velocity, powers, power_calibration=cal))
    columns = ["power_W", "V_avg"]
    table = [powers, avg]
    if args.mono:
        mono = np.abs(np.atleast_1d(visibility_signed(molecule, geometry, powers * cal, velocity.v_m)))
        columns.append("V_mono_vm")
        table.append(mono)
    head = _header(
        "predict",
        [
            f"label: {label}",
            f"config_sha256: {_sha256([args.config])}",
            f"alpha_A3: {molecule.alpha_A3!r}",
            f"sigma_abs_cm2: {float(molecule.sigma_abs) / CM2!r}",
            f"velocity: {velocity.form} v_m={float(velocity.v_m)!r} m/s dv={float(velocity.delta_v)!r} m/s",
            f"power_calibration: {cal!r}",
            "units: power_W [W], V [dimensionless]",
            ", ".join(columns),
        ],
    )
    rows = "".join(", ".join(repr(float(c[i])) for c in table) + "\n" for i in range(powers.size))
    _write(head + rows, args.out)
    return EXIT_OK


def _report_fit(result, options, args, extra):
    lines = [f"alpha_L = {result.alpha:.3f} A^3  (chi2 = {result.chi2:.4g}, dof = {result.dof})"]
    lo, hi = result.stat_interval
    lines.append(f"  statistical interval (dchi2=1): [{lo:.3f}, {hi:.3f}] A^3")
    if result.envelope_interval is not None:
        lo, hi = result.envelope_interval
        lines.append(f"  envelope interval:              [{lo:.3f}, {hi:.3f}] A^3")
    if result.sigma_abs_shift is not None:
        lines.append(f"  sigma_abs +/-{args.rel_change:.0%} shifts alpha by {result.sigma_abs_shift:.2%}")
    for name, r in result.budget:
        lines.append(f"  budget {name:<18s} {r:.2%}")
    if result.total_rel_uncertainty is not None:
        total = result.total_rel_uncertainty
        lines.append(
            f"  total ({options.budget_mode}): {total:.2%}  ->  alpha_L = {result.alpha:.1f} +/- {total * result.alpha:.1f} A^3"
        )
    for w in result.warnings:
        lines.append(f"  warning: {w}")
    report = {"command": "fit", **extra, "options": {
        "alpha_bracket": list(options.alpha_bracket),
        "alpha_tol": options.alpha_tol,
        "power_calibration": options.power_calibration,
        "budget_mode": options.budget_mode,
    }, "result": result.to_dict()}
    return "\n".join(lines) + "\n", report


def cmd_fit(args):
    datasets = _load_datasets(args)
    options = _fit_options(args)
    result = analyze(datasets, options, rel_change=args.rel_change)
    meta = {
        "datasets": [str(p) for p in args.datasets],
        "datasets_sha256": _sha256(args.datasets),
        "sigma_abs_cm2_override": args.sigma_abs_cm2,
        "rel_change": args.rel_change,
    }
    text, report = _report_fit(result, options, args, meta)
    sys.stdout.write(text)
    out = args.out or str(Path(args.datasets[0]).with_suffix(".fit.json"))
    Path(out).write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_sensitivity(args):
    datasets = _load_datasets(args)
    options = _fit_options(args)
    shift = sigma_abs_sensitivity(datasets, options, args.rel_change)
    head = _header(
        "sensitivity",
        [
            f"datasets_sha256: {_sha256(args.datasets)}",
            f"sigma_abs_cm2_override: {args.sigma_abs_cm2!r}",
            "rel_change, alpha_shift_rel",
        ],
    )
    _write(head + f"{args.rel_change!r}, {float(shift)!r}\n", args.out)
    return EXIT_OK


def cmd_extract(args):
    scan = load_scan(args.scan, args.period_nm * NM)
    fv = extract_visibility(scan)
    record = {
        "visibility": fv.visibility,
        "phase_nm": fv.phase / NM,
        "mean_counts": fv.mean,
        "sigma_v": fv.sigma_v,
        "visibility_maxmin": fv.visibility_maxmin,
    }
    sys.stdout.write(
        f"sinusoid fit: V = {fv.visibility:.6f} +/- {fv.sigma_v:.6f}, phase = {fv.phase / NM:.3f} nm, "
        f"mean = {fv.mean:.6g} counts\n"
        f"max/min:      V = {fv.visibility_maxmin:.6f}\n"
    )
    if args.out:
        Path(args.out).write_text(json.dumps(record, indent=2) + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_synth(args):
    label, molecule, geometry, velocity = _load_model(args)
    powers = _power_grid(args)
    cal = args.power_calibration if args.power_calibration is not None else 1.0
    ds = synth_dataset(
        molecule, geometry, velocity, powers, args.noise, args.seed, label=args.label or label, power_calibration=cal
    )
    _write(serialize_dataset(ds), args.out)
    return EXIT_OK


def cmd_oracle(args):
    phis = tuple(float(p) for p in args.phis.split(","))
    ratios = tuple(float(r) for r in args.ratios.split(","))
    config = OracleConfig(grid_points=args.grid_points, n_angles=args.n_angles, angle_span=args.angle_span)
    rows = compare_sweep(args.f, phis, ratios, config)
    worst = max(abs(r[-1]) for r in rows)
    head = _header(
        "oracle",
        [
            f"f: {args.f!r}",
            f"grid_points: {config.grid_points}, n_angles: {config.n_angles}, angle_span: {config.angle_span!r}",
            f"max_abs_difference: {float(worst)!r}",
            "phi_max, L_over_LT, xi_coh, V_closed_form, V_oracle, difference",
        ],
    )
    body = "".join(", ".join(repr(float(v)) for v in row) + "\n" for row in rows)
    _write(head + body, args.out)
    return EXIT_OK


def _add_power_grid(p):
    p.add_argument("--powers", help="comma-separated laser powers in W")
    p.add_argument("--pmin", type=float, default=0.0)
    p.add_argument("--pmax", type=float, default=2.0)
    p.add_argument("--n", type=int, default=20, help="number of powers in [pmin, pmax]")


def _add_model_flags(p):
    p.add_argument("--config", required=True, help="model/dataset JSON document")
    p.add_argument("--alpha-A3", dest="alpha_A3", type=float, help="override polarizability (A^3)")
    p.add_argument("--sigma-abs-cm2", type=float, help="override absorption cross section (cm^2)")
    p.add_argument("--power-calibration", type=float, help="multiplicative power calibration factor")
    p.add_argument("--dv-zero", action="store_true", help="replace the velocity spread by zero")


def _add_fit_flags(p):
    p.add_argument("datasets", nargs="+", help="dataset JSON files")
    p.add_argument("--config", help="fit options JSON")
    p.add_argument("--bracket", type=float, nargs=2, metavar=("LO", "HI"), help="alpha bracket in A^3")
    p.add_argument("--tol", type=float, help="alpha tolerance in A^3")
    p.add_argument("--power-calibration", type=float)
    p.add_argument("--sigma-abs-cm2", type=float, help="override sigma_abs of every dataset (cm^2)")
    p.add_argument("--rel-change", type=float, default=0.5, help="relative sigma_abs perturbation")
    p.add_argument("--out")


def build_parser():
    parser = argparse.ArgumentParser(prog="kdtl", description="KDTL interferometry: prediction and polarizability fits")
    parser.add_argument("--version", action="version", version=f"kdtl {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("predict", help="velocity-averaged visibility versus laser power")
    _add_model_flags(p)
    _add_power_grid(p)
    p.add_argument("--mono", action="store_true", help="add the monochromatic column at v_m")
    p.add_argument("--out")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("fit", help="fit the polarizability to one or more datasets")
    _add_fit_flags(p)
    p.add_argument("--budget-mode", choices=("quadrature", "linear"))
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("sensitivity", help="fitted-alpha shift under sigma_abs perturbation")
    _add_fit_flags(p)
    p.set_defaults(func=cmd_sensitivity)

    p = sub.add_parser("extract", help="fringe visibility from a G3 scan")
    p.add_argument("scan", help="two-column position_nm, counts file")
    p.add_argument("--period-nm", type=float, default=266.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("synth", help="seeded synthetic dataset from the forward model")
    _add_model_flags(p)
    _add_power_grid(p)
    p.add_argument("--noise", type=float, default=0.0, help="Gaussian visibility noise sigma")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--label")
    p.add_argument("--out")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("oracle", help="wave simulation versus closed form")
    p.add_argument("--f", type=float, default=0.42)
    p.add_argument("--phis", default=",".join(str(v) for v in DEFAULT_PHIS))
    p.add_argument("--ratios", default=",".join(str(v) for v in DEFAULT_RATIOS))
    p.add_argument("--grid-points", type=int, default=OracleConfig.grid_points)
    p.add_argument("--n-angles", type=int, default=OracleConfig.n_angles)
    p.add_argument("--angle-span", type=float, default=OracleConfig.angle_span)
    p.add_argument("--out")
    p.set_defaults(func=cmd_oracle)
    return parser


def _fail(exc, code):
    log.debug("exit %d", code, exc_info=exc)
    sys.stderr.write(f"kdtl: error: {exc}\n")
    return code


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (BracketError, NumericalQualityError) as exc:
        return _fail(exc, EXIT_NUMERIC)
    except (ParseError, ValidationError, InsufficientDataError, NotApplicableError, ConfigError, DomainError) as exc:
        return _fail(exc, EXIT_INPUT)
    except (OSError, json.JSONDecodeError) as exc:
        return _fail(exc, EXIT_INPUT)
    except KDTLError as exc:
        return _fail(exc, EXIT_NUMERIC)
    except Exception:  # noqa: BLE001
        log.exception("internal error")
        sys.stderr.write("kdtl: internal error (rerun with -v for details)\n")
        return EXIT_INTERNAL

if __name__ == "__main__":
    sys.exit(main())
