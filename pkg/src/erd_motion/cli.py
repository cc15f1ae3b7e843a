"""Command-line entry point: ``erd-motion {train,generate,evaluate,selftest}``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import evaluation
from .baselines import NgramIndex, constant_displacement_forecast, ngram_predict, zero_motion_forecast
from .config import FIELDS, RunConfig, build_config, dump_config, parse_value
from .erd_model import ErdModel, generate, load_checkpoint, save_checkpoint
from .errors import ArgumentError, ConfigError, ErdError
from .mocap_data import (GLOBAL_DIMS, MocapSequence, angle_columns, destandardize,
                         fit_standardizer, integrate_global, load_mocap, standardize, subsample,
                         write_mocap)
from .selftest import run_selftest
from .training import evaluate_loss, seed_streams, train

log = logging.getLogger("erd_motion")


def _require_files(paths, what: str):
    if not paths:
        raise ConfigError(f"no {what} given")
    for p in paths:
        if not Path(p).is_file():
            raise ConfigError(f"{what} file {p} does not exist")


def _load_sequences(paths, factor: int) -> list[MocapSequence]:
    return [subsample(load_mocap(p), factor) for p in paths]


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# commands


def cmd_train(cfg: RunConfig) -> Path:
    """Train on ``cfg.train_data``; writes checkpoint, per-epoch log and summary."""
    _require_files(cfg.train_data, "training data")
    seqs = _load_sequences(cfg.train_data, cfg.subsample)
    dims = {s.dim for s in seqs}
    if len(dims) != 1:
        raise ConfigError(f"training files differ in dimensionality: {sorted(dims)}")
    st = fit_standardizer(seqs)
    data = [standardize(s.frames, st) for s in seqs]
    streams = seed_streams(cfg.seed)
    model = ErdModel(cfg.erd_config(dims.pop()), streams["init"], standardizer=st)
    tcfg = cfg.train_config()
    out = _out_dir(cfg)
    (out / "config.txt").write_text(dump_config(cfg), encoding="utf-8")
    with open(out / "train_log.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "sigma", "loss", "clipped_fraction"])

        def on_epoch(e):
            writer.writerow([e.epoch, repr(e.sigma), repr(e.loss), repr(e.clipped_fraction)])
            log.info("epoch %d  sigma %.4f  loss %.4f", e.epoch, e.sigma, e.loss)

        train(model, data, tcfg, streams["noise"], streams["shuffle"], on_epoch)
    final = evaluate_loss(model, data, tcfg.window_len, tcfg.stride)
    extra = {
        "frame_rate_hz": seqs[0].frame_rate_hz,
        "joint_names": seqs[0].joint_names,
        "subsample": cfg.subsample,
        "window_len": tcfg.window_len,
        "stride": tcfg.stride,
        "final_loss": final,
    }
    ckpt = out / "checkpoint.npz"
    save_checkpoint(model, ckpt, extra)
    (out / "summary.json").write_text(json.dumps({"final_loss": final}, indent=2), encoding="utf-8")
    return ckpt


def _load_model(path) -> tuple[ErdModel, dict]:
    if not path or not Path(path).is_file():
        raise ConfigError(f"checkpoint {path!r} does not exist")
    model, extra = load_checkpoint(path)
    if model.standardizer is None:
        raise ConfigError(f"checkpoint {path} carries no standardizer")
    return model, extra


def cmd_generate(cfg: RunConfig) -> Path:
    """Condition on a prefix file and write the synthesized continuation as mocap CSV."""
    model, extra = _load_model(cfg.checkpoint)
    _require_files([cfg.prefix], "prefix")
    if cfg.steps < 1:
        raise ConfigError("steps must be >= 1")
    prefix = subsample(load_mocap(cfg.prefix), extra.get("subsample", 1))
    if prefix.dim != model.config.input_dim:
        raise ConfigError(f"prefix has {prefix.dim} dims, model expects {model.config.input_dim}")
    rng = seed_streams(cfg.seed)["sample"]
    frames = generate(model, standardize(prefix.frames, model.standardizer), cfg.steps, cfg.mode, rng)
    frames = destandardize(frames, model.standardizer)
    out = _out_dir(cfg)
    path = out / "generated.csv"
    write_mocap(MocapSequence(frames, prefix.frame_rate_hz, list(prefix.joint_names)), path)
    # absolute trajectory continuing from the origin at the end of the prefix
    traj = integrate_global(frames[:, -GLOBAL_DIMS:])
    with open(out / "trajectory.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame", "x", "y", "yaw"])
        for k, (x, y, yaw) in enumerate(traj):
            writer.writerow([k, repr(float(x)), repr(float(y)), repr(float(yaw))])
    return path


def _horizon_predictor(cfg: RunConfig, st):
    if cfg.checkpoint:
        model, _ = _load_model(cfg.checkpoint)
        rng = seed_streams(cfg.seed)["sample"]
        return lambda prefix, steps: generate(model, prefix, steps, cfg.mode, rng)
    if cfg.baseline == "ngram":
        _require_files(cfg.train_data, "training data")
        train_seqs = _load_sequences(cfg.train_data, cfg.subsample)
        corpus = [standardize(s.frames, st) for s in train_seqs]
        index = NgramIndex(corpus, cfg.ngram_n, angle_columns(corpus[0].shape[1]))
        return lambda prefix, steps: ngram_predict(index, prefix, steps)
    if cfg.baseline == "zero":
        return lambda prefix, steps: np.repeat(prefix[-1:], steps, axis=0)
    raise ConfigError("horizons protocol needs --checkpoint or --baseline {ngram,zero,truth}")


def _evaluate_horizons(cfg: RunConfig, out: Path) -> Path:
    _require_files(cfg.test_data, "test data")
    tests = _load_sequences(cfg.test_data, cfg.subsample)
    rate = tests[0].frame_rate_hz
    if cfg.checkpoint:
        model, _ = _load_model(cfg.checkpoint)
        st = model.standardizer
    elif cfg.baseline == "ngram":
        st = fit_standardizer(_load_sequences(cfg.train_data, cfg.subsample))
    else:
        st = fit_standardizer(tests)
    data = [standardize(s.frames, st) for s in tests]
    dims = angle_columns(data[0].shape[1])
    if cfg.baseline == "truth" and not cfg.checkpoint:
        reports = []
        steps = evaluation.horizon_frame_indices(cfg.horizons_ms, rate)[-1]
        for seq in data:
            for end in evaluation.prefix_ends(len(seq), cfg.prefix_len, steps, cfg.n_prefixes):
                reports.append(evaluation.horizon_prediction_error(
                    seq[end:end + steps], seq[end:end + steps], cfg.horizons_ms, rate, dims))
        report = evaluation.average_reports(reports)
    else:
        report = evaluation.evaluate_horizons(
            _horizon_predictor(cfg, st), data, cfg.prefix_len, cfg.horizons_ms, rate,
            cfg.n_prefixes, dims)
    path = out / "horizons.csv"
    report.write_csv(path)
    return path


def _pose_predictions(cfg: RunConfig) -> tuple[np.ndarray, int]:
    _require_files([cfg.heatmaps], "heat-map")
    maps = evaluation.load_heatmaps(cfg.heatmaps)
    if cfg.coarse_heatmaps:
        _require_files([cfg.coarse_heatmaps], "coarse heat-map")
        maps = evaluation.fuse_scales(evaluation.load_heatmaps(cfg.coarse_heatmaps), maps)
    if cfg.protocol == "viterbi":
        return evaluation.viterbi_smooth(maps, cfg.smoothness_scale).astype(np.float64), maps.shape[-1]
    return evaluation.heatmap_argmax(maps).astype(np.float64), maps.shape[-1]


def _evaluate_pck(cfg: RunConfig, out: Path) -> Path:
    pred, grid = _pose_predictions(cfg)
    _require_files([cfg.truth_poses], "truth pose")
    truth = evaluation.load_poses(cfg.truth_poses)
    if truth.shape != pred.shape:
        raise ArgumentError(f"truth poses {truth.shape} do not match predictions {pred.shape}")
    H = cfg.forecast_frames
    if cfg.forecast != "none":
        if cfg.forecast == "nm":
            fc = zero_motion_forecast(pred, H)
        elif cfg.forecast == "of":
            fc = constant_displacement_forecast(pred, H, grid)
        else:
            raise ConfigError("forecast must be none, nm or of")
        if H >= len(truth):
            raise ArgumentError("forecast horizon exceeds the sequence length")
        pred, truth = fc[:len(truth) - H], truth[H:]
    ref = evaluation.reference_distances(truth, cfg.left_hip, cfg.right_shoulder)
    curve = evaluation.pck_curve(pred, truth, ref, cfg.thresholds)
    path = out / f"{cfg.protocol}.csv"
    curve.write_csv(path)
    return path


def cmd_evaluate(cfg: RunConfig) -> Path:
    out = _out_dir(cfg)
    if cfg.protocol == "horizons":
        return _evaluate_horizons(cfg, out)
    if cfg.protocol in ("pck", "viterbi"):
        return _evaluate_pck(cfg, out)
    raise ConfigError(f"unknown protocol {cfg.protocol!r}; expected horizons, pck or viterbi")


def cmd_selftest(fault: str | None = None) -> bool:
    return run_selftest(fault=fault)


# ---------------------------------------------------------------------------
# argument parsing


def _add_config_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="flat key = value config file")
    parser.add_argument("--seed", default=None, help="global random seed")
    parser.add_argument("--out", default=None, help="output directory")
    for name in FIELDS:
        if name in ("seed", "out"):
            continue
        parser.add_argument("--" + name.replace("_", "-"), dest=name, default=None,
                            metavar=name.upper())


def _config_from_args(args) -> RunConfig:
    overrides = {}
    for name in FIELDS:
        text = getattr(args, name, None)
        if text is not None:
            overrides[name] = parse_value(name, text)
    return build_config(args.config, overrides)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="erd-motion", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (("train", "train a model"),
                        ("generate", "synthesize motion from a prefix"),
                        ("evaluate", "run an evaluation protocol")):
        p = sub.add_parser(name, help=help_)
        _add_config_flags(p)
    p = sub.add_parser("selftest", help="run built-in verification checks")
    p.add_argument("--inject-fault", metavar="LAYER", default=None,
                   help="corrupt the analytic gradient of LAYER (negative control)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    try:
        if args.command == "selftest":
            return 0 if cmd_selftest(args.inject_fault) else 1
        cfg = _config_from_args(args)
        command = {"train": cmd_train, "generate": cmd_generate, "evaluate": cmd_evaluate}[args.command]
        print(command(cfg))
        return 0
    except ErdError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
