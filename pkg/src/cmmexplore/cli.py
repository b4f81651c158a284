"""Command line front end: ``cmmexplore run | sweep-alpha | export-map | validate-config``."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import PRESETS, apply_overrides, dump_config, load_config
from .scene import ConfigError

EXIT_OK, EXIT_FAILURE, EXIT_CONFIG = 0, 1, 2


def _alpha_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _add_overrides(p):
    p.add_argument("config", help=f"YAML config file or preset name ({', '.join(PRESETS)})")
    g = p.add_argument_group("overrides")
    g.add_argument("--budget", type=int, help="interactions per replication")
    g.add_argument("--replications", type=int)
    g.add_argument("--seed", type=int, dest="master_seed", help="master seed")
    g.add_argument("--mode", choices=("ideal", "cloud_diff", "noisy"))
    g.add_argument("--eta", type=float, help="label flip probability")
    g.add_argument("--alpha", type=float, help="tolerance level of the intersection test")
    g.add_argument("--disable-split-merge", action="store_true", default=None,
                   help="keep one component per class")
    g.add_argument("--output-dir")
    g.add_argument("--workers", type=int, help="replications run in parallel")
    g.add_argument("--scene-pool", type=int, help="number of distinct training poses (0: fresh every iteration)")
    g.add_argument("--name", help="run name used in the output directory")


def _config(args):
    cfg = load_config(args.config)
    return apply_overrides(cfg, {
        "budget": args.budget, "replications": args.replications, "master_seed": args.master_seed,
        "explorer.mode": args.mode, "explorer.eta": args.eta, "cmm.alpha": args.alpha,
        "disable_split_merge": args.disable_split_merge, "output_dir": args.output_dir,
        "workers": args.workers, "scene_pool": args.scene_pool, "name": args.name,
    })


def cmd_run(args):
    from .runner import final_scores, run
    cfg = _config(args)
    run_dir = run(cfg, args.run_dir, plots=not args.no_plots)
    s = final_scores(run_dir)
    print(run_dir)
    print(f"final accuracy {s['accuracy_mean']:.4f} +- {s['accuracy_std']:.4f} "
          f"precision {s['precision_mean']:.4f} recall {s['recall_mean']:.4f}")
    return EXIT_OK


def cmd_sweep(args):
    from .runner import sweep_alpha
    cfg = _config(args)
    out_dir, rows = sweep_alpha(cfg, args.values, args.out_dir, plots=not args.no_plots)
    print(out_dir)
    for r in rows:
        print(f"alpha {r['alpha']:.2f} accuracy {r['accuracy_mean']:.4f} +- {r['accuracy_std']:.4f}")
    return EXIT_OK


def cmd_export(args):
    from .runner import export_map
    print(export_map(args.checkpoint, args.output, args.seed, args.choice))
    return EXIT_OK


def cmd_validate(args):
    cfg = _config(args)
    if args.print:
        sys.stdout.write(dump_config(cfg))
    else:
        print(f"{args.config}: ok")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cmmexplore", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a replicated experiment")
    _add_overrides(p)
    p.add_argument("--run-dir", help="explicit output directory; an existing one is resumed")
    p.add_argument("--no-plots", action="store_true", help="skip the PNG figures")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep-alpha", help="run the experiment for several alpha values")
    _add_overrides(p)
    p.add_argument("--values", type=_alpha_list, help="comma-separated alphas (default from config)")
    p.add_argument("--out-dir", help="explicit sweep directory")
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("export-map", help="relevance map of a checkpointed classifier as PLY")
    p.add_argument("checkpoint")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--seed", type=int, help="pose seed of the scene to draw (default: evaluation scene)")
    p.add_argument("--choice", action="store_true", help="export the choice distribution instead")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("validate-config", help="check a config file and report the first problem")
    _add_overrides(p)
    p.add_argument("--print", action="store_true", help="print the fully resolved config")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
