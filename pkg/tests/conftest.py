"""Shared fixtures: the toy corpus and trained models at two scales.

`toy_run` is the expensive one (5000 training steps, a few minutes); it is
session-scoped and shared by the acceptance suite and the sampling-quality
tests. `micro_run` is a seconds-scale model for plumbing tests that just need
a valid checkpoint.
"""

import dataclasses
import time
from dataclasses import dataclass

import numpy as np
import pytest

from gestureflow import config as config_mod
from gestureflow import data, training

TOY_CORPUS_SEED = 123
TOY_GLOBAL_SEED = 11


@dataclass
class TrainedRun:
    episodes: list
    dataset: data.PreparedDataset
    checkpoint_path: str
    bundle: training.CheckpointBundle
    pipeline: config_mod.PipelineConfig
    train_seconds: float
    log_path: str


def _run_training(workdir, episodes, pipeline, global_seed):
    dataset = data.prepare_dataset(episodes, pipeline.audio, pipeline.dataset)
    start = time.monotonic()
    path = training.train(
        dataset, pipeline.flow, pipeline.train, str(workdir),
        audio_config=pipeline.audio, dataset_config=pipeline.dataset,
        global_seed=global_seed,
    )
    elapsed = time.monotonic() - start
    return TrainedRun(
        episodes=episodes,
        dataset=dataset,
        checkpoint_path=path,
        bundle=training.load_checkpoint(path),
        pipeline=pipeline,
        train_seconds=elapsed,
        log_path=str(workdir / "train_log.csv"),
    )


@pytest.fixture(scope="session")
def toy_run(tmp_path_factory):
    """Toy-profile model trained for the full 5000-step budget."""
    workdir = tmp_path_factory.mktemp("toy_run")
    episodes = data.synthetic_corpus(TOY_CORPUS_SEED, n_episodes=6, duration_s=10.0)
    return _run_training(workdir, episodes, config_mod.toy_profile(), TOY_GLOBAL_SEED)


@pytest.fixture(scope="session")
def micro_run(tmp_path_factory):
    """Tiny test-profile model; valid checkpoint in seconds, not trained to quality."""
    workdir = tmp_path_factory.mktemp("micro_run")
    episodes = data.synthetic_corpus(7, n_episodes=2, duration_s=4.0)
    return _run_training(workdir, episodes, config_mod.test_profile(), 3)


@pytest.fixture(scope="session")
def micro_corpus():
    return data.synthetic_corpus(7, n_episodes=2, duration_s=4.0)
