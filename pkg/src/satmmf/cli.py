"""Command-line interface.

Verbs:
  solve          run one scenario with one scheme and print the solution
  sweep          run an experiment spec file (JSON) and write a CSV
  reproduce      run a preset sweep (fig3 power, fig4 delta, fig5 alpha,
                 fig6 users-per-group) at desk scale
  dump-channels  write one trial's channel draw to an .npz file
  validate       run the built-in invariant suite
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__
from .channel import make_channel_draw
from .harness import (
    ALL_SCHEMES,
    DEFAULT_SAMPLES,
    DEFAULT_TRIALS,
    ExperimentSpec,
    Scheme,
    parse_scheme,
    preset_experiment,
    run_sweep,
    run_trial,
)
from .scenario import build_scenario, load_scenario
from .validate import run_invariant_suite


def _add_common(parser):
    parser.add_argument("--seed", type=int, default=2026, help="master RNG seed")
    parser.add_argument("--samples", type=int, default=DEFAULT_SAMPLES, help="SAA sample count")
    parser.add_argument("--perfect-csit", action="store_true", help="disable CSIT errors")


def _load_config(args) -> dict:
    cfg = {}
    if args.scenario:
        with open(args.scenario, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    cfg["seed"] = args.seed
    cfg["saa_samples"] = args.samples
    if args.perfect_csit:
        cfg["perfect_csit"] = True
    return cfg


def cmd_solve(args) -> int:
    cfg = _load_config(args)
    scenario = build_scenario(cfg)
    scheme = Scheme(rs=not args.nors, obp=args.obp)
    result, ao, first_stage = run_trial(
        scenario, args.trial, scheme, samples=args.samples, return_result=True
    )
    print(f"scheme            : {scheme.label}")
    print(f"converged         : {ao.converged} in {ao.n_iter} iterations")
    if first_stage is not None:
        print(f"first stage       : {first_stage.n_iter} iterations, "
              f"sum MSE {first_stage.mse_trace[-1]:.6f}")
    print(f"SAA objective     : {ao.saa_objective:.6f} bit/s/Hz")
    print(f"realized MMF rate : {ao.realized_mmf:.6f} bit/s/Hz")
    with np.printoptions(precision=4, suppress=True):
        print(f"group rates       : {ao.realized_group_rates}")
        if ao.realized_portions is not None:
            print(f"common portions   : {ao.realized_portions}")
        print(f"per-feed usage    : {ao.power_usage} (limits {scenario.p_feed})")
    print(f"max power residual: {ao.max_power_violation:.3e}")
    if args.trace:
        for i, (obj, raw) in enumerate(zip(ao.objectives, ao.raw_objectives)):
            print(f"iter {i + 1:3d}: objective {obj:.8f} (solver {raw:.8f})")
    if args.trace_out:
        import csv

        with open(args.trace_out, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "objective"])
            for i, obj in enumerate(ao.objectives):
                writer.writerow([i + 1, f"{obj:.12g}"])
        print(f"wrote convergence trace to {args.trace_out}")
    return 0


def cmd_sweep(args) -> int:
    spec = ExperimentSpec.from_file(args.spec)
    if args.trials:
        spec.trials = args.trials
    if args.out is None:
        args.out = "sweep.csv"
    rows = run_sweep(spec, out=args.out, jobs=args.jobs,
                     progress=(lambda msg: print(f"[{msg}]", file=sys.stderr)) if args.verbose else None)
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def cmd_reproduce(args) -> int:
    schemes = ALL_SCHEMES if not args.schemes else tuple(parse_scheme(s) for s in args.schemes.split(","))
    spec = preset_experiment(
        args.figure,
        trials=args.trials,
        samples=args.samples,
        seed=args.seed,
        schemes=schemes,
        perfect_csit=args.perfect_csit,
    )
    out = args.out or f"{args.figure}.csv"
    rows = run_sweep(spec, out=out, jobs=args.jobs,
                     progress=lambda msg: print(f"[{msg}]", file=sys.stderr))
    print(f"wrote {len(rows)} rows to {out}")
    return 0


def cmd_dump_channels(args) -> int:
    cfg = _load_config(args)
    scenario = build_scenario(cfg)
    draw = make_channel_draw(scenario, scenario.stream("channel", args.trial))
    arrays = {"sigma_e2": np.array(draw.sigma_e2), "samples": np.array(draw.samples)}
    for l in range(scenario.n_gateways):
        arrays[f"h_true_l{l}"] = draw.h_true[l]
        arrays[f"h_hat_l{l}"] = draw.h_hat[l]
        arrays[f"h_real_l{l}"] = draw.h_real[l]
        for i in range(scenario.n_gateways):
            arrays[f"f_true_i{i}_l{l}"] = draw.f_true[i][l]
            arrays[f"f_hat_i{i}_l{l}"] = draw.f_hat[i][l]
            arrays[f"f_real_i{i}_l{l}"] = draw.f_real[i][l]
    np.savez(args.out, **arrays)
    print(f"wrote {len(arrays)} arrays to {args.out}")
    return 0


def cmd_validate(args) -> int:
    results = run_invariant_suite(seed=args.seed)
    failed = 0
    for name, ok, detail in results:
        status = "PASS" if ok else "FAIL"
        print(f"{status}  {name:32s} {detail}")
        failed += 0 if ok else 1
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 1 if failed else 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="satmmf", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one scenario with one scheme")
    p.add_argument("--scenario", help="scenario JSON file (defaults otherwise)")
    p.add_argument("--scheme", dest="scheme", default="rs",
                   help="rs or nors (alias for --nors)")
    p.add_argument("--nors", action="store_true", help="disable rate splitting")
    p.add_argument("--obp", action="store_true", help="two-stage with on-board processing")
    p.add_argument("--trial", type=int, default=0, help="trial index (selects the channel draw)")
    p.add_argument("--trace", action="store_true", help="print the per-iteration objective")
    p.add_argument("--trace-out", help="write the convergence trace (iteration, objective) CSV")
    _add_common(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="run an experiment spec file")
    p.add_argument("spec", help="experiment spec JSON")
    p.add_argument("--out", help="output CSV path (default sweep.csv)")
    p.add_argument("--trials", type=int, default=0, help="override spec trial count")
    p.add_argument("--jobs", type=int, default=1, help="parallel trial workers")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("reproduce", help="run a preset sweep")
    p.add_argument("figure", choices=["fig3", "fig4", "fig5", "fig6"])
    p.add_argument("--trials", type=int, default=DEFAULT_TRIALS)
    p.add_argument("--out", help="output CSV path (default <figure>.csv)")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--schemes", help="comma list, e.g. RS,NoRS,RS+OBP")
    _add_common(p)
    p.set_defaults(func=cmd_reproduce)

    p = sub.add_parser("dump-channels", help="write one trial's channel draw to .npz")
    p.add_argument("--scenario", help="scenario JSON file")
    p.add_argument("--trial", type=int, default=0)
    p.add_argument("--out", default="channels.npz")
    _add_common(p)
    p.set_defaults(func=cmd_dump_channels)

    p = sub.add_parser("validate", help="run the built-in invariant suite")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_validate)

    args = parser.parse_args(argv)
    if getattr(args, "scheme", None) and args.scheme.lower() == "nors":
        args.nors = True
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
