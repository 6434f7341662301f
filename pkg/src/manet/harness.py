"""Experiment orchestration: model/env construction, training runs, evaluation, heatmaps."""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass, replace

import numpy as np

from .checkpoint import load_checkpoint, restore, save_checkpoint
from .config import dump_config, parse_config
from .envs.combat import CombatEnv, render_frame
from .envs.nav import CELL, GRID, NavEnv, nav_render
from .errors import ConfigError, VersionError
from .multi import DenseBaseline, ManetMulti, NoCommBaseline
from .rl import Trainer, evaluate
from .single import DqnBaseline, ManetSingle, SegmentationSpec

CSV_HEADER = ["epoch", "global_steps", "mean_score", "win_rate", "mean_loss", "epsilon"]
HEATMAP_SCALE = 16


def model_seed(seed):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(99,)))


def build_model(cfg, rng=None):
    rng = rng if rng is not None else model_seed(cfg.train.seed)
    a = cfg.arch
    if cfg.env == "nav":
        if cfg.model == "dqn":
            return DqnBaseline(NavEnv.obs_shape, NavEnv.n_actions, a["hidden"], rng=rng)
        return ManetSingle(SegmentationSpec(), NavEnv.n_actions, a["n_attention"], a["ff_hidden"],
                           a["key_dim"], a["val_dim"], a["q_hidden"], rng=rng)
    if cfg.model == "manet":
        return ManetMulti(150, CombatEnv.n_actions, a["ff_hidden"], a["key_dim"], a["val_dim"],
                          a["q_hidden"], rng=rng)
    if cfg.model == "nocomm":
        return NoCommBaseline(150, CombatEnv.n_actions, a["ff_hidden"], a["val_dim"],
                              a["q_hidden"], rng=rng)
    return DenseBaseline(150, CombatEnv.n_agents, CombatEnv.n_actions, a["hidden"], rng=rng)


def env_factory(cfg):
    if cfg.env == "nav":
        return lambda rng: NavEnv(rng)
    return lambda rng: CombatEnv(rng, normalize=cfg.normalize_obs)


def reached(cfg, metrics):
    if cfg.env == "nav":
        return metrics.mean_score > cfg.threshold
    return metrics.win_rate is not None and metrics.win_rate > cfg.threshold


def _csv_row(m):
    return [m.epoch, m.global_steps, repr(m.mean_score),
            "" if m.win_rate is None else repr(m.win_rate), repr(m.mean_loss), repr(m.epsilon)]


@dataclass
class TrainResult:
    epochs: int
    first_threshold_epoch: int | None
    history: list


def run_training(cfg, out_dir=None, resume=None, log=print):
    """Train epoch by epoch, writing metrics.csv and checkpoint.bin into ``out_dir``."""
    if out_dir:
        cfg = replace(cfg, out_dir=out_dir)
    out_dir = cfg.out_dir
    os.makedirs(out_dir, exist_ok=True)
    model = build_model(cfg)
    trainer = Trainer(env_factory(cfg), model, cfg.train)
    config_text = dump_config(cfg)
    if resume is not None:
        ckpt = load_checkpoint(resume)
        if ckpt.model_id != cfg.model_id:
            raise VersionError(f"cannot resume {cfg.model_id} from a {ckpt.model_id} checkpoint")
        restore(model, ckpt)
        trainer.target = model.clone()
        trainer.optim = ckpt.optim
        trainer.global_step = ckpt.global_step
        trainer.epoch = ckpt.global_step // cfg.train.epoch_length

    csv_path = os.path.join(out_dir, "metrics.csv")
    ckpt_path = os.path.join(out_dir, "checkpoint.bin")
    with open(os.path.join(out_dir, "config.txt"), "w", encoding="utf-8") as fh:
        fh.write(config_text)
    if resume is None or not os.path.exists(csv_path):
        with open(csv_path, "w", newline="") as fh:
            csv.writer(fh).writerow(CSV_HEADER)

    history, first = [], None
    while trainer.epoch < cfg.max_epochs:
        metrics = trainer.train_epoch()
        history.append(metrics)
        with open(csv_path, "a", newline="") as fh:
            csv.writer(fh).writerow(_csv_row(metrics))
        save_checkpoint(ckpt_path, model, trainer.optim, trainer.global_step, cfg.model_id,
                        config_text)
        win = "" if metrics.win_rate is None else f" win_rate={metrics.win_rate:.3f}"
        log(f"epoch {metrics.epoch} steps={metrics.global_steps} score={metrics.mean_score:.4f}"
            f"{win} loss={metrics.mean_loss:.5f} eps={metrics.epsilon:.3f}")
        if first is None and reached(cfg, metrics):
            first = metrics.epoch
            log(f"threshold reached at epoch {first}")
            if cfg.stop_at_threshold:
                break
    save_checkpoint(ckpt_path, model, trainer.optim, trainer.global_step, cfg.model_id,
                    config_text)
    if first is None:
        log(f"threshold not reached within {trainer.epoch} epochs")
    return TrainResult(trainer.epoch, first, history)


def load_model(path):
    """Rebuild the configured model from a checkpoint; returns (cfg, model, checkpoint)."""
    ckpt = load_checkpoint(path)
    cfg = parse_config(ckpt.config_text)
    model = build_model(cfg)
    restore(model, ckpt, cfg.model_id)
    return cfg, model, ckpt


def run_eval(cfg, model, episodes, seed):
    return evaluate(model, env_factory(cfg), episodes, cfg.train.eval_epsilon, seed)


# -- attention images ------------------------------------------------------------

def heat_levels(weights):
    """Map weights to 0..255 grey levels, normalized by the frame's maximum."""
    w = np.asarray(weights, dtype=np.float64)
    top = w.max()
    if top <= 0:
        return np.zeros(w.shape, dtype=np.uint8)
    return np.floor(255.0 * w / top + 0.5).astype(np.uint8)


def write_pgm(path, gray):
    gray = np.asarray(gray, dtype=np.uint8)
    h, w = gray.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii") + gray.tobytes())


def write_ppm(path, rgb):
    rgb = np.floor(np.clip(np.asarray(rgb, dtype=np.float64), 0, 1) * 255 + 0.5).astype(np.uint8)
    h, w, _ = rgb.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii") + rgb.tobytes())


def read_pnm(path):
    """Parse a binary PGM/PPM written by this module."""
    with open(path, "rb") as fh:
        data = fh.read()
    magic, dims, maxval, rest = data.split(b"\n", 3)
    w, h = (int(v) for v in dims.split())
    channels = 3 if magic == b"P6" else 1
    arr = np.frombuffer(rest, dtype=np.uint8)
    return arr.reshape(h, w, channels) if channels == 3 else arr.reshape(h, w)


def _upscale(img, factor):
    return img.repeat(factor, axis=0).repeat(factor, axis=1)


def attention_layers(cfg, att):
    """One 2-d weight image per attention layer for a single state."""
    if cfg.env == "nav":
        return [row.reshape(GRID, GRID) for row in att]
    return [att]


def run_heatmap(cfg, model, seed, out_dir):
    """Play one evaluation episode, dumping attention images and frames per step."""
    if "attention" not in model.forward(np.zeros((1,) + _obs_shape(cfg)))[1]:
        raise ConfigError(f"model {cfg.model!r} has no attention to visualize")
    os.makedirs(out_dir, exist_ok=True)
    step = [0]
    written = []

    def on_step(env, obs, q, aux):
        t = step[0]
        att = aux["attention"].data[0]
        for n, layer in enumerate(attention_layers(cfg, att)):
            path = os.path.join(out_dir, f"step{t:03d}_layer{n}.pgm")
            write_pgm(path, _upscale(heat_levels(layer), HEATMAP_SCALE))
            written.append(path)
        frame = nav_render(env.state) if cfg.env == "nav" else render_frame(env.state)
        write_ppm(os.path.join(out_dir, f"step{t:03d}_frame.ppm"),
                  _upscale(frame, 4 if cfg.env == "nav" else HEATMAP_SCALE))
        np.savetxt(os.path.join(out_dir, f"step{t:03d}_attention.txt"),
                   att.reshape(-1, att.shape[-1]), fmt="%.17g")
        step[0] += 1

    summary = evaluate(model, env_factory(cfg), 1, cfg.train.eval_epsilon, seed, on_step=on_step)
    return summary, written


def _obs_shape(cfg):
    return NavEnv.obs_shape if cfg.env == "nav" else CombatEnv.obs_shape


def attention_target_agreement(model, episodes, seed, epsilon=0.05):
    """Fraction of nav steps whose two layers' argmax cells are {agent, next waypoint}."""
    hits = total = 0

    def on_step(env, obs, q, aux):
        nonlocal hits, total
        att = aux["attention"].data[0]
        picks = {divmod(int(np.argmax(row)), GRID) for row in att[:2]}
        hits += picks == {env.state.agent, env.state.target}
        total += 1

    evaluate(model, lambda rng: NavEnv(rng), episodes, epsilon, seed, on_step=on_step)
    return hits / total if total else 0.0


__all__ = [
    "CELL", "CSV_HEADER", "TrainResult", "attention_target_agreement", "build_model",
    "env_factory", "heat_levels", "load_model", "read_pnm", "run_eval", "run_heatmap",
    "run_training", "write_pgm", "write_ppm",
]
