"""Long-running training experiments with an on-disk result cache.

Each run lives in ``<runs>/<env>-<model>-s<seed>/``. A cached run is reused
only when its ``config.txt`` equals the configuration that would be trained
now and its ``metrics.csv`` is complete, so stale results are never mixed in.

    python -m manet.experiments nav       # 3 seeds x (manet, single-attn, dqn)
    python -m manet.experiments combat    # manet, nocomm, dense
"""
from __future__ import annotations

import argparse
import csv
import os
import sys

from .config import default_config, dump_config
from .harness import run_training

SEEDS = (0, 1, 2)
BUDGET = 300


def runs_root():
    return os.environ.get("MANET_RUNS", "runs")


def experiment_config(env, model, seed, max_epochs=BUDGET):
    cfg = default_config(env, model, seed=seed)
    cfg.max_epochs = max_epochs
    cfg.out_dir = os.path.join(runs_root(), f"{env}-{model}-s{seed}")
    return cfg.resolved()


def read_metrics(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        row["epoch"] = int(row["epoch"])
        row["mean_score"] = float(row["mean_score"])
        row["win_rate"] = float(row["win_rate"]) if row["win_rate"] else None
    return rows


def passes(cfg, row):
    if cfg.env == "nav":
        return row["mean_score"] > cfg.threshold
    return row["win_rate"] is not None and row["win_rate"] > cfg.threshold


def first_threshold_epoch(cfg, rows):
    for row in rows:
        if passes(cfg, row):
            return row["epoch"]
    return None


def cached_rows(cfg):
    """Metrics of a finished run trained with exactly ``cfg``, else None."""
    try:
        with open(os.path.join(cfg.out_dir, "config.txt"), encoding="utf-8") as fh:
            if fh.read() != dump_config(cfg):
                return None
        rows = read_metrics(os.path.join(cfg.out_dir, "metrics.csv"))
    except OSError:
        return None
    if [r["epoch"] for r in rows] != list(range(1, len(rows) + 1)):
        return None
    hit = first_threshold_epoch(cfg, rows)
    if hit is not None and cfg.stop_at_threshold:
        return rows if hit == len(rows) else None
    return rows if len(rows) == cfg.max_epochs else None


def ensure_run(cfg, train=True, log=print):
    rows = cached_rows(cfg)
    if rows is None and train:
        log(f"training {cfg.model_id} seed {cfg.train.seed} into {cfg.out_dir}")
        run_training(cfg, log=lambda msg: log(f"[{cfg.model_id} s{cfg.train.seed}] {msg}"))
        rows = cached_rows(cfg)
    return rows


def nav_runs(seed, train=True, log=print):
    """Epochs-to-threshold for manet, single-attn and dqn on one seed.

    DQN only needs to show whether it is slowest, so its budget is capped at
    the slower of the two attention models when both succeed.
    """
    out = {}
    for model in ("manet", "single-attn"):
        cfg = experiment_config("nav", model, seed)
        rows = ensure_run(cfg, train, log)
        if rows is None:
            return None
        out[model] = first_threshold_epoch(cfg, rows)
    attn = [e for e in out.values() if e is not None]
    cap = max(attn) if len(attn) == 2 else BUDGET
    cfg = experiment_config("nav", "dqn", seed, max_epochs=cap)
    rows = ensure_run(cfg, train, log)
    if rows is None:
        return None
    out["dqn"] = first_threshold_epoch(cfg, rows)
    out["dqn_budget"] = cap
    return out


def combat_runs(seed=0, train=True, log=print):
    out = {}
    for model in ("manet", "nocomm", "dense"):
        cfg = experiment_config("combat", model, seed)
        rows = ensure_run(cfg, train, log)
        if rows is None:
            return None
        out[model] = first_threshold_epoch(cfg, rows)
    return out


def main(argv=None):
    parser = argparse.ArgumentParser(prog="python -m manet.experiments", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("which", choices=("nav", "combat", "all"))
    parser.add_argument("--seeds", type=int, nargs="+", default=list(SEEDS))
    args = parser.parse_args(argv)

    def log(msg):
        print(msg, flush=True)

    if args.which in ("nav", "all"):
        for seed in args.seeds:
            log(f"nav seed {seed}: {nav_runs(seed, log=log)}")
    if args.which in ("combat", "all"):
        log(f"combat seed 0: {combat_runs(0, log=log)}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
