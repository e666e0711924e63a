"""Command line interface: ``carshare-opt <command> ...``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import analysis, extensive
from .choice import RequestPreprocessor
from .domain import SolveReport, dump_json, load_instance, load_scenarios, save_instance, save_scenarios
from .generator import GenConfig, generate
from .ils import ils
from .lshaped import evaluate_first_stage, solve
from .validation import check_instance, check_scenarios

METHODS = ("lshaped", "ils", "bruteforce", "saa-export")


# ---------------------------------------------------------------- argument groups


def _gen_args(p):
    p.add_argument("--config", help="GenConfig JSON; flags given explicitly override it")
    p.add_argument("--preset", choices=sorted(analysis.PRESETS), help="spatial preset for the three alphas")
    p.add_argument("--zones", type=int)
    p.add_argument("--customers", type=int)
    p.add_argument("--vehicles", type=int)
    p.add_argument("--scenarios", type=int)
    p.add_argument("--alpha-from", type=float)
    p.add_argument("--alpha-to", type=float)
    p.add_argument("--alpha-v", type=float)
    p.add_argument("--individual", action="store_true", default=None, help="individual customer profiles")
    p.add_argument("--seed", type=int)


def _config_from(args) -> GenConfig:
    d = json.loads(Path(args.config).read_text()) if args.config else {}
    if args.preset:
        d["alpha_v"], d["alpha_from"], d["alpha_to"] = analysis.preset_distribution(args.preset)
    flags = {"zones": "n_zones", "customers": "n_customers", "vehicles": "n_vehicles",
             "scenarios": "n_scenarios", "alpha_from": "alpha_from", "alpha_to": "alpha_to",
             "alpha_v": "alpha_v", "individual": "individual_profiles", "seed": "seed"}
    for flag, key in flags.items():
        value = getattr(args, flag, None)
        if value is not None:
            d[key] = value
    return GenConfig.from_dict(d)


def _input_args(p):
    p.add_argument("--instance", required=True, help="instance JSON")
    p.add_argument("--scenarios", required=True, help="scenario JSON")


def _solver_args(p):
    p.add_argument("--time-limit", type=float, default=1800.0)
    p.add_argument("--gap", type=float, default=1e-4, help="target relative gap (fraction)")
    p.add_argument("--vi", action=argparse.BooleanOptionalAction, default=True,
                   help="symmetry-breaking rows for zones without vehicles")
    p.add_argument("--relax-cuts", action=argparse.BooleanOptionalAction, default=True,
                   help="LP-duality cuts at integral nodes")
    p.add_argument("--polish", action=argparse.BooleanOptionalAction, default=True,
                   help="local-search polishing of the starting incumbent")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--seed", type=int, default=None)


def _solver_params(args) -> dict:
    return {"time_limit": args.time_limit, "target_gap": args.gap, "use_vi": args.vi,
            "use_relaxation_cuts": args.relax_cuts, "local_search_heuristic": args.polish,
            "threads": args.threads, "seed": args.seed}


def _load(args):
    instance = check_instance(load_instance(args.instance))
    scenarios = check_scenarios(instance, load_scenarios(instance, args.scenarios))
    return instance, scenarios


# ---------------------------------------------------------------- commands


def cmd_generate(args) -> int:
    config = _config_from(args)
    instance, scenarios = generate(config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_instance(instance, out / "instance.json")
    save_scenarios(instance, scenarios, out / "scenarios.json")
    dump_json(config.to_dict(), out / "config.json")
    analysis.write_manifest(out / "manifest.json", "generate", config.to_dict(), [config.seed])
    print(f"wrote {out / 'instance.json'} and {out / 'scenarios.json'}")
    return 0


def cmd_solve(args) -> int:
    instance, scenarios = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.dump_requests:
        reqs = RequestPreprocessor().fit_transform(instance, scenarios)
        dump_json({"scenarios": [r.to_dict() for r in reqs]}, args.dump_requests)
    if args.method == "lshaped":
        report, sol = solve(instance, scenarios, **_solver_params(args))
    elif args.method == "ils":
        res = ils(instance, scenarios, max_restarts=args.ils_restarts, time_limit=args.time_limit,
                  r_percent=args.ils_r, seed=args.seed)
        sol = res.best.to_first_stage()
        report = SolveReport(res.objective, float("nan"), float("nan"), None, None, res.elapsed,
                             seed=args.seed, status="heuristic", method="ils", incumbent_trace=res.trace)
    elif args.method == "bruteforce":
        value, sol = extensive.brute_force_solve(instance, scenarios)
        report = SolveReport(value, value, 0.0, 0.0, None, 0.0, seed=args.seed, status="optimal",
                             method="bruteforce")
    else:
        model = extensive.build_saa(instance, scenarios)
        path = Path(args.mps) if args.mps else out / "saa.mps"
        extensive.write_mps(model.lp, path)
        size = {"columns": model.lp.n_cols, "rows": model.lp.n_rows, "mps": str(path)}
        dump_json(size, out / "saa_size.json")
        print(json.dumps(size))
        return 0
    dump_json(report.to_dict(), out / "report.json")
    dump_json(sol.to_dict() | {"objective": evaluate_first_stage(instance, scenarios, sol)}, out / "solution.json")
    print(json.dumps({k: report.to_dict()[k] for k in ("method", "status", "bestInteger", "bestBound", "gap")}))
    return 0


def _study(args, fn, command) -> int:
    instance, scenarios = _load(args)
    rows = fn(instance, scenarios, **_solver_params(args))
    analysis.write_csv(rows, args.out, analysis.CSV_HEADER)
    analysis.write_manifest(Path(args.out).with_suffix(".manifest.json"), command,
                            {"instance": args.instance, "scenarios": args.scenarios, **_solver_params(args)},
                            [args.seed])
    print(analysis.format_table([r.to_dict() for r in rows],
                                ["label", "expected_profit", "profit_pct_of_reference", "pct_vehicles_relocated",
                                 "expected_pct_requests_satisfied", "gap"]))
    print(f"profit ratio: {analysis.profit_ratio(rows):.4f}")
    return 0


def cmd_compare_pricing(args) -> int:
    return _study(args, analysis.compare_pricing, "compare-pricing")


def cmd_no_relocation(args) -> int:
    return _study(args, analysis.no_relocation_study, "no-relocation")


def cmd_sweep(args) -> int:
    config = _config_from(args)
    sizes = [int(s) for s in args.sizes.split(",") if s]
    params = {"time_limit": args.time_limit, "target_gap": args.gap, "use_vi": args.vi,
              "use_relaxation_cuts": args.relax_cuts, "threads": args.threads}
    rows = analysis.scenario_sweep(config, sizes, **params)
    analysis.write_csv(rows, args.out, analysis.SWEEP_HEADER)
    analysis.write_manifest(Path(args.out).with_suffix(".manifest.json"), "sweep-scenarios",
                            config.to_dict() | {"sizes": sizes} | params, [config.seed])
    print(analysis.format_table(rows))
    return 0


def cmd_report(args) -> int:
    rows = []
    for name in args.files:
        path = Path(name)
        if path.suffix == ".csv":
            rows += [dict(r, file=path.name) for r in analysis.read_csv(path)]
        else:
            d = json.loads(path.read_text())
            d.pop("incumbentTrace", None)
            d.pop("cutCounts", None)
            rows.append(dict(d, file=path.name))
    text = analysis.format_table(rows)
    if args.out:
        analysis.write_csv(rows, args.out, sorted({k for r in rows for k in r}))
    print(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="carshare-opt", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="synthesize an instance and scenarios")
    _gen_args(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("solve", help="solve an instance")
    _input_args(p)
    _solver_args(p)
    p.add_argument("--method", choices=METHODS, default="lshaped")
    p.add_argument("--ils-restarts", type=int, default=3)
    p.add_argument("--ils-r", type=float, default=30.0, help="perturbation strength in percent")
    p.add_argument("--mps", help="MPS path for --method saa-export")
    p.add_argument("--dump-requests", help="write the request sets as JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_solve)

    for name, fn, text in (("compare-pricing", cmd_compare_pricing, "dynamic vs zero-fee pricing"),
                           ("no-relocation", cmd_no_relocation, "free vs frozen vehicle placement")):
        p = sub.add_parser(name, help=text)
        _input_args(p)
        _solver_args(p)
        p.add_argument("--out", required=True, help="CSV output")
        p.set_defaults(func=fn)

    p = sub.add_parser("sweep-scenarios", help="gap and time as the sample grows")
    _gen_args(p)
    p.add_argument("--sizes", default="1,2,5,10", help="comma separated sample sizes")
    p.add_argument("--time-limit", type=float, default=1800.0)
    p.add_argument("--gap", type=float, default=1e-4)
    p.add_argument("--vi", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--relax-cuts", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", required=True, help="CSV output")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="tabulate CSV study files and report JSONs")
    p.add_argument("files", nargs="+")
    p.add_argument("--out", help="merged CSV output")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
