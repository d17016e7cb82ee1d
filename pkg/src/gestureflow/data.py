"""Corpus preparation: alignment, episode split, mirror augmentation,
standardization, training windows, and the synthetic toy corpus.

The toy corpus is a small stand-in dataset: an 8-joint upper-body humanoid
whose arm swing amplitude follows the speech amplitude envelope, speaking in
noise bursts separated by silence. It exists so the whole pipeline can be
trained and evaluated on a desktop in minutes.
"""

import json
import os
from dataclasses import dataclass

import numpy as np

from . import audio, kinematics
from .audio import AudioConfig, Waveform, amplitude_envelope, mel_spectrogram
from .bvh import Joint, MotionClip, Skeleton
from .errors import DataError
from .kinematics import RootState, build_mirror_map, mirror_pose_sequence


@dataclass(frozen=True)
class DatasetConfig:
    mirror_augment: bool = True
    standardize_pose: bool = True
    standardize_mel: bool = True
    left_prefix: str = "Left"
    right_prefix: str = "Right"
    max_misalignment: int = 20  # frames (1 s at 20 fps)

    def to_dict(self):
        return {
            "mirror_augment": self.mirror_augment,
            "standardize_pose": self.standardize_pose,
            "standardize_mel": self.standardize_mel,
            "left_prefix": self.left_prefix,
            "right_prefix": self.right_prefix,
            "max_misalignment": self.max_misalignment,
        }


@dataclass(frozen=True)
class AlignedSequence:
    poses: np.ndarray  # (T, D_pose)
    mels: np.ndarray  # (T, n_mels)
    episode_id: str

    def __post_init__(self):
        if self.poses.shape[0] != self.mels.shape[0]:
            raise ValueError("pose and mel streams must have equal length")

    @property
    def length(self):
        return self.poses.shape[0]


@dataclass(frozen=True)
class TrainingWindow:
    target: np.ndarray  # (D,) pose at t
    pose_history: np.ndarray  # (H, D) poses at t-H .. t-1
    speech_context: np.ndarray  # (2w+1, n_mels) mels at t-w .. t+w


class Standardizer:
    """Per-dimension mean/std transform fitted on training data only."""

    def __init__(self, mean, std):
        self.mean = np.asarray(mean, dtype=np.float64)
        self.std = np.maximum(np.asarray(std, dtype=np.float64), 1e-6)

    @classmethod
    def fit(cls, frames):
        frames = np.asarray(frames, dtype=np.float64)
        return cls(frames.mean(axis=0), frames.std(axis=0))

    @classmethod
    def identity(cls, dim):
        return cls(np.zeros(dim), np.ones(dim))

    def transform(self, x):
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.std

    def inverse_transform(self, x):
        return np.asarray(x, dtype=np.float64) * self.std + self.mean


def align(poses, mels, episode_id="", max_misalignment=20):
    """Truncate both streams to the shorter one; large gaps signal a bad pair."""
    t1, t2 = len(poses), len(mels)
    if abs(t1 - t2) > max_misalignment:
        raise DataError(
            f"episode {episode_id!r}: pose stream ({t1} frames) and mel stream "
            f"({t2} frames) differ by more than {max_misalignment} frames"
        )
    t = min(t1, t2)
    return AlignedSequence(np.asarray(poses)[:t], np.asarray(mels)[:t], episode_id)


def split_by_episode(sequences):
    """Hold out every sequence of the last (sorted) episode id as test data."""
    ids = sorted({s.episode_id for s in sequences})
    if len(ids) < 2:
        raise DataError("need at least 2 episodes to hold one out")
    test_id = ids[-1]
    train = [s for s in sequences if s.episode_id != test_id]
    test = [s for s in sequences if s.episode_id == test_id]
    return train, test


def augment_mirror(sequences, mirror_map):
    """Append a laterally mirrored copy of every sequence (pose space must be
    unstandardized); mel features are shared unchanged."""
    out = list(sequences)
    for seq in sequences:
        out.append(
            AlignedSequence(
                mirror_pose_sequence(seq.poses, mirror_map),
                seq.mels,
                seq.episode_id + "#mirror",
            )
        )
    return out


def window_arrays(poses, mels, history_len, context_radius):
    """Vectorized windows for a whole sequence.

    Returns (targets (T, D), histories (T, H, D), contexts (T, 2w+1, M));
    indices past either end are edge-replicated.
    """
    poses = np.asarray(poses)
    mels = np.asarray(mels)
    t = poses.shape[0]
    hist_idx = np.arange(t)[:, None] - history_len + np.arange(history_len)[None, :]
    ctx_idx = np.arange(t)[:, None] + np.arange(-context_radius, context_radius + 1)[None, :]
    histories = poses[np.clip(hist_idx, 0, t - 1)]
    contexts = mels[np.clip(ctx_idx, 0, t - 1)]
    return poses, histories, contexts


def make_windows(sequence, history_len, context_radius):
    """One TrainingWindow per frame of an aligned sequence."""
    targets, histories, contexts = window_arrays(
        sequence.poses, sequence.mels, history_len, context_radius
    )
    return [
        TrainingWindow(targets[i], histories[i], contexts[i])
        for i in range(sequence.length)
    ]


@dataclass
class PreparedDataset:
    """Standardized, split, optionally mirror-augmented corpus."""

    train: list
    test: list
    pose_standardizer: Standardizer
    mel_standardizer: Standardizer
    skeleton: Skeleton
    rest_root_position: np.ndarray  # (3,) mean frame-0 root position of train episodes
    n_mels: int

    @property
    def pose_dim(self):
        return kinematics.pose_dim(self.skeleton)


def prepare_dataset(episodes, audio_config=AudioConfig(), config=DatasetConfig(), mirror_map=None):
    """Full preparation pipeline over (episode_id, skeleton, clip, waveform) tuples.

    Pose and mel streams are aligned at 20 fps, split by episode (last id held
    out), the training split is mirror-augmented, and standardization
    statistics are computed on the augmented training split only.
    """
    if not episodes:
        raise DataError("no episodes to prepare")
    skeleton = episodes[0][1]
    names = skeleton.joint_names
    sequences = []
    root_positions = []
    train_ids = sorted(ep[0] for ep in episodes)[:-1]
    for episode_id, skel, clip, waveform in episodes:
        if skel.joint_names != names:
            raise DataError(f"episode {episode_id!r}: skeleton differs from first episode")
        clip = kinematics.resample_clip(clip, audio_config.frame_rate)
        poses, initial = kinematics.clip_to_pose_sequence(skel, clip)
        mel = mel_spectrogram(waveform, audio_config)
        sequences.append(align(poses, mel.frames, episode_id, config.max_misalignment))
        if episode_id in train_ids:
            root_positions.append(initial.position)
    train, test = split_by_episode(sequences)
    if config.mirror_augment:
        if mirror_map is None:
            mirror_map = build_mirror_map(skeleton, config.left_prefix, config.right_prefix)
        train = augment_mirror(train, mirror_map)

    pose_dim = train[0].poses.shape[1]
    n_mels = train[0].mels.shape[1]
    if config.standardize_pose:
        pose_std = Standardizer.fit(np.concatenate([s.poses for s in train]))
    else:
        pose_std = Standardizer.identity(pose_dim)
    if config.standardize_mel:
        mel_std = Standardizer.fit(np.concatenate([s.mels for s in train]))
    else:
        mel_std = Standardizer.identity(n_mels)

    def transform(seqs):
        return [
            AlignedSequence(pose_std.transform(s.poses), mel_std.transform(s.mels), s.episode_id)
            for s in seqs
        ]

    return PreparedDataset(
        train=transform(train),
        test=transform(test),
        pose_standardizer=pose_std,
        mel_standardizer=mel_std,
        skeleton=skeleton,
        rest_root_position=np.mean(root_positions, axis=0),
        n_mels=n_mels,
    )


def save_prepared(path, dataset: PreparedDataset, metadata=None):
    """Persist a prepared dataset as one MGT1 tensor file."""
    from .bvh import skeleton_to_dict
    from .tensorfile import write_tensors

    arrays = {}
    for split_name, split in (("train", dataset.train), ("test", dataset.test)):
        for i, seq in enumerate(split):
            arrays[f"{split_name}/{i}/poses"] = seq.poses.astype(np.float64)
            arrays[f"{split_name}/{i}/mels"] = seq.mels.astype(np.float64)
    arrays["pose_std/mean"] = dataset.pose_standardizer.mean
    arrays["pose_std/std"] = dataset.pose_standardizer.std
    arrays["mel_std/mean"] = dataset.mel_standardizer.mean
    arrays["mel_std/std"] = dataset.mel_standardizer.std
    arrays["rest_root_position"] = np.asarray(dataset.rest_root_position, dtype=np.float64)
    meta = dict(metadata or {})
    meta.update(
        {
            "skeleton": skeleton_to_dict(dataset.skeleton),
            "train_ids": [s.episode_id for s in dataset.train],
            "test_ids": [s.episode_id for s in dataset.test],
            "n_mels": dataset.n_mels,
        }
    )
    write_tensors(path, arrays, meta)


def load_prepared(path):
    """Inverse of save_prepared; returns (PreparedDataset, metadata)."""
    from .bvh import skeleton_from_dict
    from .tensorfile import read_tensors

    arrays, meta = read_tensors(path)

    def split(name, ids):
        return [
            AlignedSequence(arrays[f"{name}/{i}/poses"], arrays[f"{name}/{i}/mels"], episode_id)
            for i, episode_id in enumerate(ids)
        ]

    dataset = PreparedDataset(
        train=split("train", meta["train_ids"]),
        test=split("test", meta["test_ids"]),
        pose_standardizer=Standardizer(arrays["pose_std/mean"], arrays["pose_std/std"]),
        mel_standardizer=Standardizer(arrays["mel_std/mean"], arrays["mel_std/std"]),
        skeleton=skeleton_from_dict(meta["skeleton"]),
        rest_root_position=arrays["rest_root_position"],
        n_mels=int(meta["n_mels"]),
    )
    return dataset, meta


# --- synthetic toy corpus ---------------------------------------------------

TOY_ROOT_HEIGHT = 95.0  # cm


def toy_skeleton():
    """8-joint upper-body humanoid, laterally symmetric."""
    root_channels = (
        "Xposition", "Yposition", "Zposition",
        "Zrotation", "Xrotation", "Yrotation",
    )
    rot = ("Zrotation", "Xrotation", "Yrotation")
    j = [
        Joint("Hips", None, np.zeros(3), root_channels),
        Joint("Spine", 0, np.array([0.0, 20.0, 0.0]), rot),
        Joint("Neck", 1, np.array([0.0, 22.0, 0.0]), rot),
        Joint("Head", 2, np.array([0.0, 10.0, 0.0]), rot, np.array([0.0, 10.0, 0.0])),
        Joint("LeftArm", 1, np.array([14.0, 18.0, 0.0]), rot),
        Joint("LeftHand", 4, np.array([24.0, 0.0, 0.0]), rot, np.array([8.0, 0.0, 0.0])),
        Joint("RightArm", 1, np.array([-14.0, 18.0, 0.0]), rot),
        Joint("RightHand", 6, np.array([-24.0, 0.0, 0.0]), rot, np.array([-8.0, 0.0, 0.0])),
    ]
    return Skeleton(tuple(j))


def _smooth(x, width):
    """Centered moving average along axis 0 with edge replication."""
    from scipy.ndimage import uniform_filter1d

    return uniform_filter1d(np.asarray(x, dtype=float), size=width, axis=0, mode="nearest")


def _toy_waveform(rng, duration_s, sample_rate):
    """Amplitude-modulated noise bursts separated by silences."""
    n = int(round(duration_s * sample_rate))
    samples = np.zeros(n)
    t = 0.3 + 0.2 * rng.random()
    while t < duration_s - 1.0:
        burst_len = 0.6 + 0.8 * rng.random()
        start = int(t * sample_rate)
        stop = min(int((t + burst_len) * sample_rate), n)
        length = stop - start
        if length <= 0:
            break
        am_freq = 0.15 + 0.3 * rng.random()
        am_phase = 2.0 * np.pi * rng.random()
        tt = np.arange(length) / sample_rate
        am = 0.25 + 0.55 * (0.5 + 0.5 * np.sin(2.0 * np.pi * am_freq * tt + am_phase))
        edge = min(int(0.05 * sample_rate), length // 2)
        ramp = np.ones(length)
        if edge > 0:
            fade = 0.5 - 0.5 * np.cos(np.linspace(0.0, np.pi, edge))
            ramp[:edge] = fade
            ramp[-edge:] = fade[::-1]
        samples[start:stop] = 0.28 * rng.standard_normal(length) * am * ramp
        t += burst_len + 0.6 + 0.8 * rng.random()
    return Waveform(np.clip(samples, -0.999, 0.999), sample_rate)


def _smooth_noise(rng, t, amplitude):
    return amplitude * _smooth(rng.standard_normal(t), 9)


def toy_motion_poses(skeleton, envelope, rng, frame_rate=20.0):
    """Model-space poses whose arm swing amplitude tracks the speech envelope."""
    t = len(envelope)
    env = envelope / max(envelope.max(), 1e-12)
    env = _smooth(env, 3)
    secs = np.arange(t) / frame_rate
    phase = 2.0 * np.pi * 1.2 * secs
    j = len(skeleton.joints)
    # background jitter on every axis keeps all pose dimensions non-degenerate
    rot = 0.004 * _smooth(rng.standard_normal((t, j * 3)), 9).reshape(t, j, 3)
    idx = {name: skeleton.joint_index(name) for name in skeleton.joint_names}
    rot[:, idx["Hips"], 0] += _smooth_noise(rng, t, 0.005)
    rot[:, idx["Hips"], 2] += _smooth_noise(rng, t, 0.005)
    rot[:, idx["Spine"], 0] += 0.02 * np.sin(2.0 * np.pi * 0.25 * secs)
    rot[:, idx["Spine"], 2] += 0.02 * np.cos(2.0 * np.pi * 0.2 * secs)
    rot[:, idx["Neck"], 2] += 0.015 * np.sin(2.0 * np.pi * 0.15 * secs)
    rot[:, idx["LeftArm"], 2] += -0.25 + 1.0 * env * np.sin(phase) + _smooth_noise(rng, t, 0.006)
    rot[:, idx["LeftHand"], 2] += 0.3 * env * np.sin(1.7 * phase + 1.0)
    rot[:, idx["RightArm"], 2] += 0.25 - 1.0 * env * np.sin(phase + 0.6) + _smooth_noise(rng, t, 0.006)
    rot[:, idx["RightHand"], 2] += -0.3 * env * np.sin(1.7 * phase + 2.1)
    deltas = np.zeros((t, 3))
    deltas[:, 0] = 0.04 * np.sin(2.0 * np.pi * 0.08 * secs) + _smooth_noise(rng, t, 0.01)
    deltas[:, 1] = 0.04 * np.cos(2.0 * np.pi * 0.06 * secs) + _smooth_noise(rng, t, 0.01)
    deltas[:, 2] = 0.004 * np.sin(2.0 * np.pi * 0.05 * secs) + _smooth_noise(rng, t, 0.001)
    deltas[0] = 0.0
    return np.concatenate([rot.reshape(t, -1), deltas], axis=1)


def synthetic_corpus(seed, n_episodes=6, duration_s=10.0, sample_rate=16000, audio_config=AudioConfig()):
    """Seed-deterministic toy episodes as (episode_id, skeleton, clip, waveform)."""
    skeleton = toy_skeleton()
    episodes = []
    for i in range(n_episodes):
        rng = np.random.default_rng([seed, 1000 + i])
        waveform = _toy_waveform(rng, duration_s, sample_rate)
        envelope = amplitude_envelope(waveform, audio_config)
        frames = int(round(duration_s * audio_config.frame_rate))
        envelope = envelope[:frames]
        poses = toy_motion_poses(skeleton, envelope, rng, audio_config.frame_rate)
        clip = kinematics.pose_sequence_to_clip(
            skeleton,
            poses,
            RootState(np.array([0.0, TOY_ROOT_HEIGHT, 0.0]), 0.0),
            frame_time=1.0 / audio_config.frame_rate,
        )
        episodes.append((f"ep_{i:02d}", skeleton, clip, waveform))
    return episodes


# --- corpus manifests --------------------------------------------------------


def write_corpus(episodes, directory):
    """Write episodes as BVH + WAV next to a manifest.json; returns manifest path."""
    from .bvh import save_bvh

    os.makedirs(directory, exist_ok=True)
    entries = []
    for episode_id, skeleton, clip, waveform in episodes:
        bvh_name = f"{episode_id}.bvh"
        wav_name = f"{episode_id}.wav"
        save_bvh(os.path.join(directory, bvh_name), skeleton, clip)
        audio.save_wav(os.path.join(directory, wav_name), waveform)
        entries.append({"id": episode_id, "bvh": bvh_name, "wav": wav_name})
    manifest_path = os.path.join(directory, "manifest.json")
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump({"episodes": entries}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest_path


def load_corpus(manifest_path):
    """Load (episode_id, skeleton, clip, waveform) tuples from a manifest."""
    from .bvh import load_bvh

    try:
        with open(manifest_path, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
        entries = manifest["episodes"]
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise DataError(f"{manifest_path}: cannot read manifest ({exc})") from exc
    base = os.path.dirname(os.path.abspath(manifest_path))
    episodes = []
    for entry in entries:
        try:
            episode_id, bvh_rel, wav_rel = entry["id"], entry["bvh"], entry["wav"]
        except (KeyError, TypeError) as exc:
            raise DataError(f"{manifest_path}: malformed episode entry {entry!r}") from exc
        bvh_path = os.path.join(base, bvh_rel)
        wav_path = os.path.join(base, wav_rel)
        for p in (bvh_path, wav_path):
            if not os.path.exists(p):
                raise DataError(f"episode {episode_id!r}: missing file {p}")
        skeleton, clip = load_bvh(bvh_path)
        waveform = audio.load_wav(wav_path)
        episodes.append((episode_id, skeleton, clip, waveform))
    if not episodes:
        raise DataError(f"{manifest_path}: manifest lists no episodes")
    return episodes
