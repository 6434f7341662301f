"""Command line entry point: ``manet train | eval | heatmap | config``."""
from __future__ import annotations

import argparse
import sys

from .config import ExperimentConfig, apply_setting, default_config, dump_config, load_config
from .errors import ManetError
from .harness import load_model, run_eval, run_heatmap, run_training


def _cmd_train(args):
    cfg = load_config(args.config, resolve=False) if args.config else ExperimentConfig()
    for item in args.set or []:
        if "=" not in item:
            raise ManetError(f"--set expects key=value, got {item!r}")
        apply_setting(cfg, *item.split("=", 1))
    if args.seed is not None:
        cfg.train.seed = args.seed
    cfg = cfg.resolved()
    result = run_training(cfg, out_dir=args.out, resume=args.checkpoint)
    if result.first_threshold_epoch is not None:
        print(f"first epoch over threshold {cfg.threshold}: {result.first_threshold_epoch}")
    return 0


def _cmd_eval(args):
    cfg, model, _ = load_model(args.checkpoint)
    s = run_eval(cfg, model, args.episodes, args.seed)
    win = "" if s.win_rate is None else f" win_rate={s.win_rate:.4f}"
    print(f"episodes={args.episodes} mean_score={s.mean_score:.6f}{win} "
          f"mean_length={s.mean_length:.3f}")
    return 0


def _cmd_heatmap(args):
    cfg, model, _ = load_model(args.checkpoint)
    summary, written = run_heatmap(cfg, model, args.seed, args.out)
    print(f"wrote {len(written)} attention images to {args.out} "
          f"(episode score {summary.mean_score:.3f})")
    return 0


def _cmd_config(args):
    sys.stdout.write(dump_config(default_config(args.env, args.model)))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="manet", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model, one CSV row and checkpoint per epoch")
    p.add_argument("--config", help="key=value configuration file")
    p.add_argument("--out", help="output directory (default: out_dir from the config)")
    p.add_argument("--seed", type=int)
    p.add_argument("--checkpoint", help="resume from this checkpoint")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--episodes", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("heatmap", help="export attention heatmaps for one episode")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_heatmap)

    p = sub.add_parser("config", help="print the default configuration")
    p.add_argument("--env", default="nav", choices=("nav", "combat"))
    p.add_argument("--model", default="manet")
    p.set_defaults(func=_cmd_config)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ManetError, OSError) as exc:
        print(f"manet: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
