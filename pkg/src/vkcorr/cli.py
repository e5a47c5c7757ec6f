"""Command-line surface: verify / stage / solve / sweep / template.

Exit codes: 0 success, 1 check or guard failure, 2 usage or config error.
All emitted JSON and CSV files are byte-identical across reruns of the same
configuration.
"""

from __future__ import annotations

import argparse
import os
import sys


def _apply_thread_env():
    """Honor VKCORR_THREADS before numpy spins up its thread pools."""
    threads = os.environ.get("VKCORR_THREADS")
    if threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
            os.environ.setdefault(var, threads)


_HINTS = {
    "ResolutionGuard": "refine the grid, shrink the domain, or lower sigma/steps",
    "MarginExhausted": "increase the grid margin",
    "NonPositiveCoefficient": "increase sigma",
    "GuardExceeded": "increase sigma or raise the configured slack",
}


def _guard_exit(err) -> int:
    name = type(err).__name__
    hint = _HINTS.get(name, "")
    print(f"error [{name}]: {err}", file=sys.stderr)
    if hint:
        print(f"hint: {hint}", file=sys.stderr)
    return 1


def cmd_verify(args) -> int:
    from .errors import UnknownSuite
    from .reportio import dump_json
    from .verify import run_suite

    try:
        result = run_suite(args.suite)
    except UnknownSuite as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    for check in result["checks"]:
        state = "pass" if check["passed"] else "FAIL"
        print(f"[{state}] {check['suite']}.{check['name']}: "
              f"measured {check['measured']:.6g} {check['comparison']} "
              f"{check['limit']:.6g}")
    if args.out:
        dump_json(result, args.out)
    print(f"suite {args.suite}: {'pass' if result['passed'] else 'FAIL'}")
    return 0 if result["passed"] else 1


def _load_config(path: str):
    from .config import RunConfig
    from .errors import ConfigError

    try:
        return RunConfig.load(path), None
    except FileNotFoundError:
        print(f"error: config file not found: {path}", file=sys.stderr)
        return None, 2
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return None, 2


def _outdir(cfg) -> str:
    return cfg.section("output").get("directory", "out")


def _write_stage_outputs(cfg, report, v_out, w_out, outdir, tag=""):
    from .fields import save_field
    from .reportio import dump_json, wrap_report

    doc = wrap_report("stage", report.to_dict(), cfg.resolved())
    dump_json(doc, os.path.join(outdir, f"stage_report{tag}.json"))
    if cfg.section("output").get("snapshots", False):
        save_field(v_out, os.path.join(outdir, f"v_final{tag}.mafield"))
        save_field(w_out, os.path.join(outdir, f"w_final{tag}.mafield"))
    _write_stage_summary(report, os.path.join(outdir, f"stage_summary{tag}.txt"))


def _write_stage_summary(report, path):
    lines = [
        "stage summary",
        f"  sigma={report.sigma} K={report.steps} N={report.reduction}"
        f" grid={report.grid_points}^d h={report.grid_h:.6g}",
        f"  delta0={report.delta0:.6g} mu0={report.mu0:.6g}"
        f" bound_m={report.bound_m:.6g}",
        f"  |v~-v|_1={report.v_c1_distance:.6g}"
        f"  measured/sqrt(delta0)={report.c1_constant:.6g}",
        f"  |D2 v~|={report.v_c2_norm:.6g}"
        f"  measured/(M sigma^(dK+N))={report.c2_constant:.6g}",
        f"  defect vs A0: tracked={report.final_defect_vs_a0_tracked:.6g}"
        f" fd={report.final_defect_vs_a0_fd:.6g}",
        f"  defect vs A:  tracked={report.final_defect_tracked:.6g}"
        f" fd={report.final_defect_fd:.6g}",
        f"  decay constant (|D_K| sigma^KN / delta0)={report.decay_constant:.6g}",
        f"  mollification terms: fields={report.mollification_gap_v:.6g}"
        f" matrix={report.mollification_gap_a:.6g}",
    ]
    for log in report.step_logs:
        lines.append(
            f"  step k={log.k}: |D_k|={log.defect_norm:.6g}"
            f" C_k={log.constant_k:.6g} tracking_gap={log.tracking_gap:.3g}"
            f" sector_leak={log.sector_leak:.3g}")
        lines.append(
            f"    error constants: absorption={log.absorption_constant:.4g}"
            f" boundary={max(log.first_pass_error_constants):.4g}"
            f" history={max(log.higher_error_constants):.4g}"
            f" quad={log.quad_error_constant:.4g}")
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def cmd_stage(args) -> int:
    cfg, code = _load_config(args.config)
    if cfg is None:
        return code
    from .errors import ConfigError, VkcorrError
    from .reportio import dump_json
    from .stage import run_stage

    outdir = _outdir(cfg)
    try:
        v, w, A = cfg.build_instance()
        stage_cfg = cfg.stage_config()
        if cfg.section("output").get("snapshots", False):
            from dataclasses import replace
            stage_cfg = replace(stage_cfg, snapshot_dir=outdir)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    dump_json(cfg.resolved(), os.path.join(outdir, "resolved_config.json"))
    try:
        v_out, w_out, report = run_stage(v, w, A, stage_cfg)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except VkcorrError as err:
        return _guard_exit(err)
    _write_stage_outputs(cfg, report, v_out, w_out, outdir)
    print(f"stage complete: defect {report.delta0:.6g} ->"
          f" {report.final_defect_vs_a0_tracked:.6g} (vs mollified data)")
    print(f"report: {os.path.join(outdir, 'stage_report.json')}")
    return 0


def cmd_solve(args) -> int:
    cfg, code = _load_config(args.config)
    if cfg is None:
        return code
    from .errors import ConfigError, VkcorrError
    from .fields import save_field
    from .reportio import dump_csv, dump_json, wrap_report
    from .solver import run_solve

    outdir = _outdir(cfg)
    try:
        v, w, A = cfg.build_instance()
        solve_cfg = cfg.solve_config()
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    dump_json(cfg.resolved(), os.path.join(outdir, "resolved_config.json"))
    try:
        v_out, w_out, report = run_solve(v, w, A, solve_cfg)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except VkcorrError as err:
        return _guard_exit(err)

    doc = wrap_report("solve", report.to_dict(), cfg.resolved())
    dump_json(doc, os.path.join(outdir, "solve_report.json"))
    rows = []
    for key, q in sorted(report.initial_holder_quotients.items()):
        rows.append((0, key, q))
    for summary in report.stages:
        for key, q in sorted(summary.holder_quotients.items()):
            rows.append((summary.index, key, q))
    dump_csv(os.path.join(outdir, "holder_quotients.csv"),
             ("stage", "alpha", "quotient"), rows)
    if cfg.section("output").get("snapshots", False):
        save_field(v_out, os.path.join(outdir, "v_final.mafield"))
        save_field(w_out, os.path.join(outdir, "w_final.mafield"))
    history = report.defect_history()
    print(f"solve: {len(report.stages)} stage(s), termination"
          f" {report.termination}")
    print("defect history: " + " -> ".join(f"{d:.6g}" for d in history))
    if report.decay_slope is not None:
        print(f"geometric decay fit: slope {report.decay_slope:.4g} per stage")
    print(f"report: {os.path.join(outdir, 'solve_report.json')}")
    return 0


def cmd_sweep(args) -> int:
    cfg, code = _load_config(args.config)
    if cfg is None:
        return code
    import numpy as np

    from .errors import ConfigError, VkcorrError
    from .reportio import dump_csv, dump_json, wrap_report
    from .stage import run_stage

    try:
        sigmas = cfg.sweep_sigmas()
        v, w, A = cfg.build_instance()
        base = cfg.stage_config()
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    outdir = _outdir(cfg)
    dump_json(cfg.resolved(), os.path.join(outdir, "resolved_config.json"))
    rows = []
    from dataclasses import replace
    for sigma in sigmas:
        stage_cfg = replace(base, sigma=float(sigma))
        try:
            v_out, w_out, report = run_stage(v, w, A, stage_cfg)
        except ConfigError as err:
            print(f"error: {err}", file=sys.stderr)
            return 2
        except VkcorrError as err:
            return _guard_exit(err)
        tag = f"_sigma{sigma:g}"
        _write_stage_outputs(cfg, report, v_out, w_out, outdir, tag)
        rows.append((sigma, report.final_defect_vs_a0_tracked,
                     report.v_c2_norm, report.v_c1_distance, report.delta0))
        print(f"sigma={sigma:g}: defect {report.delta0:.6g} ->"
              f" {report.final_defect_vs_a0_tracked:.6g},"
              f" |D2 v~|={report.v_c2_norm:.6g}")
    dump_csv(os.path.join(outdir, "sweep_summary.csv"),
             ("sigma", "post_defect", "c2_norm", "c1_distance", "delta0"), rows)
    if len(rows) >= 2:
        ls = np.log([r[0] for r in rows])
        defect_slope = float(np.polyfit(ls, np.log([r[1] for r in rows]), 1)[0])
        growth_slope = float(np.polyfit(ls, np.log([r[2] for r in rows]), 1)[0])
        fit = {"defect_decay_exponent": defect_slope,
               "c2_growth_exponent": growth_slope,
               "predicted_decay_exponent": -base.steps * base.reduction,
               "predicted_growth_exponent": 2 * base.steps + base.reduction}
        dump_json(wrap_report("sweep", fit, cfg.resolved()),
                  os.path.join(outdir, "sweep_fit.json"))
        print(f"fitted exponents: defect {defect_slope:.3g}"
              f" (target {-base.steps * base.reduction}),"
              f" growth {growth_slope:.3g}"
              f" (target {2 * base.steps + base.reduction})")
    return 0


def cmd_template(args) -> int:
    from .config import TEMPLATE
    print(TEMPLATE, end="")
    return 0


def main(argv=None) -> int:
    _apply_thread_env()
    parser = argparse.ArgumentParser(
        prog="vkcorr",
        description="convex-integration engine: corrugation synthesis for the"
                    " Von Karman system")
    sub = parser.add_subparsers(dest="command", required=True)

    p_verify = sub.add_parser("verify", help="run an identity check suite")
    p_verify.add_argument("suite", help="profiles | basis | step | ibp | kallen | all")
    p_verify.add_argument("--out", help="write JSON results here")
    p_verify.set_defaults(fn=cmd_verify)

    p_stage = sub.add_parser("stage", help="run one defect-reduction stage")
    p_stage.add_argument("config", help="YAML run configuration")
    p_stage.set_defaults(fn=cmd_stage)

    p_solve = sub.add_parser("solve", help="run the outer iteration")
    p_solve.add_argument("config", help="YAML run configuration")
    p_solve.set_defaults(fn=cmd_solve)

    p_sweep = sub.add_parser("sweep", help="run one stage per configured sigma")
    p_sweep.add_argument("config", help="YAML run configuration with a sweep section")
    p_sweep.set_defaults(fn=cmd_sweep)

    p_tmpl = sub.add_parser("template", help="print a commented config template")
    p_tmpl.set_defaults(fn=cmd_template)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
