"""Command-line interface.

Subcommands: fit, predict, loocv, select-kernel, sample-paths,
mspe-decay, emulate fit|predict, reproduce <target>.  All randomness is
controlled by --seed; no environment variables are consulted; file
writes are atomic.  Exit codes: 0 success, 1 operational failure,
2 usage error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from typing import Optional

import numpy as np

from .designs import eigenfunction_design, empirical_mspe, knot_design, \
    lattice_knots
from .domain import Domain, build_grid, sample_function
from .errors import FigpError
from .gp import FitConfig, fit, loocv_error, predict, select_kernel
from .kernels import LINEAR, NONLINEAR, KernelSpec, MaternParams, PREMAPS
from .reproduce import TARGETS, run_reproduce
from .sampling import nystrom_eig, sample_paths_gram, sine_frequency_family
from . import storage


def _json_out(report) -> str:
    return json.dumps(report, indent=2, sort_keys=True)


def _emit(args, report, human_lines):
    if getattr(args, "json", False):
        print(_json_out(report))
    else:
        for line in human_lines:
            print(line)


def _fit_config(args, seed: Optional[int] = None) -> FitConfig:
    return FitConfig(
        multistarts=getattr(args, "multistarts", 8),
        seed=args.seed if seed is None else seed,
        anisotropic=getattr(args, "anisotropic", False),
        nu=getattr(args, "nu", 2.5),
    )


def _cmd_fit(args) -> int:
    grid, inputs, y = storage.load_training_data(args.train)
    model = fit(inputs, y, args.family, config=_fit_config(args),
                premap=args.premap, nugget=args.nugget)
    out = args.out or "model.json"
    storage.save_model(out, model)
    report = {
        "model_file": out,
        "family": args.family,
        "kernel": storage.kernel_spec_to_dict(model.spec),
        "mu_hat": model.mu_hat,
        "log_likelihood": model.log_likelihood,
        "loocv": loocv_error(model),
        "n": model.n,
    }
    _emit(args, report, [
        f"fitted {args.family} kernel on {model.n} inputs",
        f"  mu_hat        {model.mu_hat:.6g}",
        f"  sigma2_hat    {model.sigma2_hat:.6g}",
        f"  log_likelihood {model.log_likelihood:.6g}",
        f"  loocv         {loocv_error(model):.6g}",
        f"  saved to      {out}",
    ])
    return 0


def _test_inputs(args, grid):
    inputs = []
    for expr in args.input or []:
        inputs.append(sample_function(expr, grid))
    for path in args.input_csv or []:
        inputs.append(storage.load_input_csv(path, grid))
    if not inputs:
        raise FigpError("provide at least one --input or --input-csv")
    return inputs


def _cmd_predict(args) -> int:
    model = storage.load_model(args.model)
    grid = model.inputs[0].grid
    tests = _test_inputs(args, grid)
    rows = []
    for g in tests:
        mean, var = predict(model, g)
        rows.append({"input": g.label, "mean": mean, "variance": var})
    report = {"model_file": args.model, "predictions": rows}
    lines = [
        f"{r['input']}: mean {r['mean']:.6g}, variance {r['variance']:.6g}"
        for r in rows
    ]
    _emit(args, report, lines)
    if args.out:
        storage.write_json(args.out, report)
    return 0


def _cmd_loocv(args) -> int:
    model = storage.load_model(args.model)
    value = loocv_error(model)
    report = {"model_file": args.model, "loocv": value, "n": model.n}
    _emit(args, report, [f"loocv {value:.6g} over {model.n} folds"])
    return 0


def _cmd_select_kernel(args) -> int:
    grid, inputs, y = storage.load_training_data(args.train)
    best, table = select_kernel(inputs, y, config=_fit_config(args),
                                premap=args.premap, nugget=args.nugget)
    if args.out:
        storage.save_model(args.out, best)
    report = {"selected": best.spec.family, "table": table,
              "model_file": args.out}
    lines = []
    for entry in table:
        mark = "*" if entry["selected"] else " "
        lines.append(
            f"{mark} {entry['family']:<10} loocv {entry['loocv']:.6g}"
        )
    if args.out:
        lines.append(f"saved {best.spec.family} model to {args.out}")
    _emit(args, report, lines)
    return 0


def _cmd_sample_paths(args) -> int:
    domain = Domain(((args.domain_min, args.domain_max),))
    grid = build_grid(domain, args.grid_res or 64)
    alphas = np.linspace(0.0, 1.0, args.alpha_count)
    inputs = sine_frequency_family(grid, alphas)
    if args.family == LINEAR:
        spec = KernelSpec(LINEAR, MaternParams(args.nu, args.sigma2,
                                               (args.theta,)))
    else:
        spec = KernelSpec(NONLINEAR, MaternParams(args.nu, args.sigma2),
                          gamma=args.gamma)
    pf = sample_paths_gram(inputs, spec, args.n_paths, args.seed,
                           index_values=alphas)
    out = args.out or "paths.csv"
    storage.save_path_family(out, pf)
    report = {"file": out, "n_paths": pf.n_paths,
              "alpha_count": args.alpha_count, "params": pf.params}
    _emit(args, report, [f"wrote {pf.n_paths} paths over "
                         f"{args.alpha_count} frequencies to {out}"])
    return 0


def _cmd_mspe_decay(args) -> int:
    domain = Domain(((0.0, 1.0),))
    grid = build_grid(domain, args.grid_res or 256)
    params = MaternParams(args.nu, 1.0, (args.theta,))
    spec = KernelSpec(LINEAR, params)
    sizes = [int(s) for s in args.sizes.split(",")]
    test_points = np.linspace(0.1, 0.9, args.n_tests)
    from .designs import KnotSet

    tests = knot_design(
        KnotSet(test_points[:, None], float(np.diff(test_points).max())),
        params, grid)
    if args.design == "knot":
        def builder(n):
            return knot_design(lattice_knots(domain, n), params, grid)
        rate = -2.0 * args.nu
    else:
        eig = nystrom_eig(params, grid, m=max(sizes))

        def builder(n):
            return eigenfunction_design(eig, n)
        rate = -4.0 * args.nu
    curve = empirical_mspe(builder, sizes, tests, spec, seed=args.seed,
                           method=args.method, replicates=args.replicates,
                           theoretical_rate=rate)
    out = args.out or f"mspe_{args.design}.csv"
    storage.save_decay_curve(out, curve)
    report = {
        "file": out, "design": args.design, "sizes": sizes,
        "mspe": [float(v) for v in curve.mspe], "slope": curve.slope,
        "theoretical_rate": rate,
    }
    _emit(args, report, [
        f"{args.design} design slope {curve.slope:.4g} "
        f"(theoretical {rate:g}); wrote {out}",
    ])
    return 0


def _cmd_emulate_fit(args) -> int:
    dataset = storage.load_field_dataset(args.fields, args.manifest)
    emulator_family = None if args.family == "auto" else args.family
    from .emulator import fit_emulator

    emulator = fit_emulator(dataset, threshold=args.threshold,
                            family=emulator_family,
                            config=_fit_config(args))
    out = args.out or "emulator.json"
    storage.save_emulator(out, emulator)
    report = {
        "emulator_file": out,
        "k": emulator.k,
        "explained_variance_ratio": [
            float(v) for v in emulator.explained_variance_ratio
        ],
        "score_families": [m.spec.family for m in emulator.score_models],
    }
    _emit(args, report, [
        f"retained {emulator.k} components "
        f"({sum(report['explained_variance_ratio']):.6f} of variance)",
        f"score kernels: {', '.join(report['score_families'])}",
        f"saved to {out}",
    ])
    return 0


def _cmd_emulate_predict(args) -> int:
    from .emulator import predict_field

    emulator = storage.load_emulator(args.emulator)
    grid = emulator.score_models[0].inputs[0].grid
    tests = _test_inputs(args, grid)
    out = args.out or "field_prediction.csv"
    import csv as _csv
    import io as _io

    buf = _io.StringIO()
    writer = _csv.writer(buf, lineterminator="\n")
    writer.writerow(["input", "pixel", "mean", "variance"])
    report_rows = []
    for g in tests:
        mean_field, var_field = predict_field(emulator, g)
        for j, (m, v) in enumerate(zip(mean_field, var_field)):
            writer.writerow([g.label, j, storage.fmt6(m), storage.fmt6(v)])
        report_rows.append({
            "input": g.label,
            "mean_field": [float(v) for v in mean_field],
            "variance_field": [float(v) for v in var_field],
        })
    storage.atomic_write_text(out, buf.getvalue())
    report = {"emulator_file": args.emulator, "file": out,
              "predictions": report_rows}
    _emit(args, report, [f"wrote {len(tests)} field prediction(s) to {out}"])
    return 0


def _cmd_reproduce(args) -> int:
    out_dir = args.out or "reproduce_out"
    files, report = run_reproduce(args.target, out_dir, seed=args.seed,
                                  grid_res=args.grid_res)
    payload = {"target": args.target, "files": files, "report": report}
    _emit(args, payload,
          [f"{args.target}: wrote {len(files)} file(s) to {out_dir}"]
          + [f"  {p}" for p in files])
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=42,
                        help="seed for all randomness (default 42)")
    common.add_argument("--grid-res", type=int, default=None,
                        help="quadrature points per dimension")
    common.add_argument("--out", default=None, help="output file or directory")
    common.add_argument("--json", action="store_true",
                        help="print a machine-readable JSON report")

    fitting = argparse.ArgumentParser(add_help=False)
    fitting.add_argument("--multistarts", type=int, default=8)
    fitting.add_argument("--anisotropic", action="store_true",
                         help="free one lengthscale per dimension "
                              "(linear kernel)")
    fitting.add_argument("--nu", type=float, default=2.5)
    fitting.add_argument("--premap", default=None, choices=sorted(PREMAPS))
    fitting.add_argument("--nugget", type=float, default=None)

    parser = argparse.ArgumentParser(
        prog="figp",
        description="Gaussian-process emulation with function-valued inputs",
    )
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("fit", parents=[common, fitting],
                       help="fit one kernel family on training data")
    p.add_argument("--train", required=True, help="training data JSON")
    p.add_argument("--family", required=True, choices=[LINEAR, NONLINEAR])
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("predict", parents=[common],
                       help="posterior mean/variance at new inputs")
    p.add_argument("--model", required=True)
    p.add_argument("--input", action="append", metavar="EXPR")
    p.add_argument("--input-csv", action="append", metavar="PATH")
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("loocv", parents=[common],
                       help="closed-form leave-one-out error of a model")
    p.add_argument("--model", required=True)
    p.set_defaults(func=_cmd_loocv)

    p = sub.add_parser("select-kernel", parents=[common, fitting],
                       help="fit both kernels and keep the lower-LOOCV one")
    p.add_argument("--train", required=True)
    p.set_defaults(func=_cmd_select_kernel)

    p = sub.add_parser("sample-paths", parents=[common],
                       help="draw prior sample paths over the sine family")
    p.add_argument("--family", default=LINEAR, choices=[LINEAR, NONLINEAR])
    p.add_argument("--nu", type=float, default=2.5)
    p.add_argument("--theta", type=float, default=1.0)
    p.add_argument("--sigma2", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=0.01)
    p.add_argument("--n-paths", type=int, default=5)
    p.add_argument("--alpha-count", type=int, default=101)
    p.add_argument("--domain-min", type=float, default=0.0)
    p.add_argument("--domain-max", type=float, default=2.0 * math.pi)
    p.set_defaults(func=_cmd_sample_paths)

    p = sub.add_parser("mspe-decay", parents=[common],
                       help="error-decay experiment for a design family")
    p.add_argument("--design", default="knot", choices=["knot", "eigen"])
    p.add_argument("--nu", type=float, default=1.5)
    p.add_argument("--theta", type=float, default=8.0)
    p.add_argument("--sizes", default="8,16,32,64")
    p.add_argument("--n-tests", type=int, default=4)
    p.add_argument("--method", default="exact", choices=["exact", "mc"])
    p.add_argument("--replicates", type=int, default=200)
    p.set_defaults(func=_cmd_mspe_decay)

    p = sub.add_parser("emulate", parents=[],
                       help="multi-output field emulation")
    esub = p.add_subparsers(dest="emulate_command")
    pf = esub.add_parser("fit", parents=[common, fitting])
    pf.add_argument("--fields", required=True, help="field dataset CSV")
    pf.add_argument("--manifest", required=True, help="dataset manifest JSON")
    pf.add_argument("--threshold", type=float, default=0.999)
    pf.add_argument("--family", default="auto",
                    choices=["auto", LINEAR, NONLINEAR])
    pf.set_defaults(func=_cmd_emulate_fit)
    pp = esub.add_parser("predict", parents=[common])
    pp.add_argument("--emulator", required=True)
    pp.add_argument("--input", action="append", metavar="EXPR")
    pp.add_argument("--input-csv", action="append", metavar="PATH")
    pp.set_defaults(func=_cmd_emulate_predict)

    p = sub.add_parser("reproduce", parents=[common],
                       help="write reference tables and figure data")
    p.add_argument("target", choices=list(TARGETS))
    p.set_defaults(func=_cmd_reproduce)

    return parser


def cli_dispatch(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "func", None):
        parser.print_usage(sys.stderr)
        return 2
    try:
        return args.func(args)
    except FigpError as exc:
        stage = getattr(args, "command", None) or "figp"
        if getattr(args, "emulate_command", None):
            stage = f"{stage} {args.emulate_command}"
        print(f"error: {stage}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {getattr(args, 'command', 'figp')}: {exc}",
              file=sys.stderr)
        return 1


def main(argv=None) -> int:
    return cli_dispatch(argv)


if __name__ == "__main__":
    sys.exit(main())
