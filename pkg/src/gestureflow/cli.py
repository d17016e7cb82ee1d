"""Command-line pipeline: prepare, train, synth, eval.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric failure.
A lock file in the workdir serializes commands that share it.
"""

import argparse
import dataclasses
import glob
import json
import os
import sys

import numpy as np
from filelock import FileLock

from . import data, evaluation, synthesis, training
from .audio import load_wav, mel_spectrogram
from .bvh import load_bvh, save_bvh
from .config import (PipelineConfig, config_hash, load_config, resolve_workdir,
                     test_profile, toy_profile)
from .errors import DataError, GestureFlowError, NumericError, UsageError
from .seeding import substream_seed
from .training import FORMAT_VERSION


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser():
    parser = _Parser(prog="gestureflow", description=__doc__)
    parser.add_argument("--config", help="TOML config file")
    parser.add_argument("--workdir", help="working directory (overrides config and env)")
    parser.add_argument("--seed", type=int, help="global seed override")
    parser.add_argument(
        "--profile", choices=["full", "toy", "test"], default=None,
        help="named defaults to start from (ignored when --config is given)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="build the standardized training corpus")
    p.add_argument("--manifest", help="corpus manifest JSON (BVH + WAV per episode)")
    p.add_argument("--toy", action="store_true", help="generate the synthetic toy corpus")
    p.add_argument("--episodes", type=int, default=6, help="toy corpus episode count")
    p.add_argument("--duration", type=float, default=10.0, help="toy episode length (s)")

    p = sub.add_parser("train", help="train the motion flow on the prepared corpus")
    p.add_argument("--steps", type=int, help="override the training step budget")
    p.add_argument("--resume", help="checkpoint path or 'latest'")

    p = sub.add_parser("synth", help="sample pose sequences for a speech waveform")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--wav", required=True)
    p.add_argument("--n", type=int, default=1, help="number of samples")
    p.add_argument("--temperature", type=float, default=None)
    p.add_argument("--out", help="output directory (default workdir/samples)")

    p = sub.add_parser("eval", help="gesture-space or velocity-peak analysis")
    p.add_argument("--checkpoint")
    p.add_argument("--wav", help="speech input to sample from")
    p.add_argument("--clips", help="directory of BVH clips to analyze instead of sampling")
    p.add_argument("--mode", choices=["space", "peaks"], required=True)
    p.add_argument("--manifest", help="corpus manifest for the training-data reference cloud")
    p.add_argument("--n", type=int, help="override the sample count")
    p.add_argument("--out", help="output directory (default workdir/eval)")
    return parser


def _load_pipeline_config(args):
    if args.config:
        cfg = load_config(args.config)
        explicit = True
    elif args.profile == "toy":
        cfg = toy_profile()
        explicit = False
    elif args.profile == "test":
        cfg = test_profile()
        explicit = False
    else:
        cfg = PipelineConfig()
        explicit = False
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg, explicit


def _meta_line(cfg):
    return f"config_hash={config_hash(cfg)} seed={cfg.seed} format_version={FORMAT_VERSION}"


def _prepared_path(workdir):
    return os.path.join(workdir, "prepared", "dataset.mgt")


def cmd_prepare(args, cfg, workdir):
    if bool(args.toy) == bool(args.manifest or cfg.manifest):
        raise UsageError("prepare needs exactly one of --toy or --manifest")
    if args.toy:
        corpus_seed = substream_seed(cfg.seed, "corpus")
        episodes = data.synthetic_corpus(
            corpus_seed, n_episodes=args.episodes, duration_s=args.duration,
            audio_config=cfg.audio,
        )
        data.write_corpus(episodes, os.path.join(workdir, "corpus"))
    else:
        episodes = data.load_corpus(args.manifest or cfg.manifest)
    dataset = data.prepare_dataset(episodes, cfg.audio, cfg.dataset)
    os.makedirs(os.path.join(workdir, "prepared"), exist_ok=True)
    data.save_prepared(
        _prepared_path(workdir),
        dataset,
        {
            "format_version": FORMAT_VERSION,
            "config_hash": config_hash(cfg),
            "seed": cfg.seed,
            "audio_config": cfg.audio.to_dict(),
            "dataset_config": cfg.dataset.to_dict(),
        },
    )
    print(
        f"prepared {len(dataset.train)} training / {len(dataset.test)} test "
        f"sequences -> {_prepared_path(workdir)}"
    )
    return 0


def cmd_train(args, cfg, workdir):
    prepared = _prepared_path(workdir)
    if not os.path.exists(prepared):
        raise DataError(f"no prepared dataset at {prepared}; run 'prepare' first")
    dataset, _ = data.load_prepared(prepared)
    train_cfg = cfg.train
    if args.steps is not None:
        train_cfg = dataclasses.replace(train_cfg, steps=args.steps)
    resume = args.resume
    if resume == "latest":
        candidates = sorted(glob.glob(os.path.join(workdir, "checkpoints", "step_*.mgt")))
        if not candidates:
            raise DataError("no checkpoint to resume from")
        resume = candidates[-1]
    path = training.train(
        dataset, cfg.flow, train_cfg, workdir,
        audio_config=cfg.audio, dataset_config=cfg.dataset,
        global_seed=cfg.seed, config_hash=config_hash(cfg), resume=resume,
    )
    print(f"final checkpoint: {path}")
    return 0


def _check_feature_config(bundle, cfg, config_was_explicit):
    if config_was_explicit and cfg.audio.to_dict() != bundle.audio_config.to_dict():
        import hashlib

        def h(d):
            return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:12]

        raise UsageError(
            "audio feature config does not match the checkpoint "
            f"(config {h(cfg.audio.to_dict())} vs checkpoint {h(bundle.audio_config.to_dict())}); "
            "drop the [audio] overrides or retrain"
        )


def cmd_synth(args, cfg, workdir, config_was_explicit):
    bundle = training.load_checkpoint(args.checkpoint)
    _check_feature_config(bundle, cfg, config_was_explicit)
    mel = mel_spectrogram(load_wav(args.wav), bundle.audio_config)
    out_dir = args.out or os.path.join(workdir, "samples")
    os.makedirs(out_dir, exist_ok=True)
    base_seed = cfg.sampling.seed
    if base_seed is None:
        base_seed = substream_seed(cfg.seed, "synth")
    temperature = cfg.sampling.temperature if args.temperature is None else args.temperature
    clips = synthesis.batch_sample(bundle, mel, args.n, base_seed, temperature)
    for i, clip in enumerate(clips):
        stem = os.path.join(out_dir, f"sample_{i:03d}")
        save_bvh(stem + ".bvh", bundle.skeleton, clip)
        with open(stem + ".json", "w", encoding="utf-8") as fh:
            json.dump(
                {
                    "seed": base_seed + i,
                    "temperature": temperature,
                    "config_hash": config_hash(cfg),
                    "checkpoint_id": bundle.checkpoint_id,
                    "format_version": FORMAT_VERSION,
                    "frames": clip.frame_count,
                },
                fh, indent=2, sort_keys=True,
            )
            fh.write("\n")
    print(f"wrote {len(clips)} clips ({clips[0].frame_count} frames each) to {out_dir}")
    return 0


def _clips_from_dir(directory):
    paths = sorted(glob.glob(os.path.join(directory, "*.bvh")))
    if not paths:
        raise DataError(f"no BVH clips in {directory}")
    skeleton = None
    clips = []
    for p in paths:
        skel, clip = load_bvh(p)
        if skeleton is None:
            skeleton = skel
        clips.append(clip)
    return skeleton, clips


def cmd_eval(args, cfg, workdir, config_was_explicit):
    out_dir = args.out or os.path.join(workdir, "eval")
    os.makedirs(out_dir, exist_ok=True)
    meta = _meta_line(cfg)
    eval_cfg = cfg.eval
    base_seed = cfg.sampling.seed
    if base_seed is None:
        base_seed = substream_seed(cfg.seed, "eval")

    if args.clips:
        skeleton, clips = _clips_from_dir(args.clips)
        source = "clips"
    elif args.checkpoint and args.wav:
        bundle = training.load_checkpoint(args.checkpoint)
        _check_feature_config(bundle, cfg, config_was_explicit)
        mel = mel_spectrogram(load_wav(args.wav), bundle.audio_config)
        count = args.n or (
            eval_cfg.space_samples if args.mode == "space" else eval_cfg.peaks_samples
        )
        clips = synthesis.batch_sample(
            bundle, mel, count, base_seed, cfg.sampling.temperature
        )
        skeleton = bundle.skeleton
        source = "model"
    else:
        raise UsageError("eval needs either --clips or both --checkpoint and --wav")

    if args.mode == "space":
        clouds = [
            evaluation.gesture_space_cloud(
                skeleton, clips, eval_cfg.upper_body_joints, eval_cfg.space_stride, source
            )
        ]
        if args.manifest:
            episodes = data.load_corpus(args.manifest)
            train_clips = [clip for _, _, clip, _ in episodes[:-1]]
            clouds.append(
                evaluation.gesture_space_cloud(
                    skeleton, train_clips, eval_cfg.upper_body_joints,
                    eval_cfg.space_stride, "training",
                )
            )
            overlap = evaluation.occupancy_overlap(
                clouds[0], clouds[1], eval_cfg.histogram_bins
            )
            evaluation.write_overlap_json(
                os.path.join(out_dir, "overlap.json"),
                overlap,
                {"config_hash": config_hash(cfg), "seed": cfg.seed,
                 "format_version": FORMAT_VERSION},
            )
            print(f"occupancy overlap: {overlap:.4f}")
        evaluation.write_cloud_csv(os.path.join(out_dir, "cloud_points.csv"), clouds, meta)
        print(f"wrote gesture-space cloud to {out_dir}/cloud_points.csv")
    else:
        dist = evaluation.peak_distribution_of_clips(skeleton, clips, eval_cfg)
        evaluation.write_density_csv(
            os.path.join(out_dir, "peak_densities.csv"), [(source, dist)], meta
        )
        print(f"wrote velocity-peak densities to {out_dir}/peak_densities.csv")
    return 0


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        cfg, explicit = _load_pipeline_config(args)
        workdir = resolve_workdir(args.workdir, cfg)
        os.makedirs(workdir, exist_ok=True)
        with FileLock(os.path.join(workdir, ".lock")):
            if args.command == "prepare":
                return cmd_prepare(args, cfg, workdir)
            if args.command == "train":
                return cmd_train(args, cfg, workdir)
            if args.command == "synth":
                return cmd_synth(args, cfg, workdir, explicit)
            if args.command == "eval":
                return cmd_eval(args, cfg, workdir, explicit)
            raise UsageError(f"unknown command {args.command!r}")
    except GestureFlowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return getattr(exc, "exit_code", 1)


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
