"""Autoregressive stochastic sampling of pose sequences from speech features.

Every output frame draws a latent z ~ N(0, sigma^2 I) keyed by
(seed, chain, frame) and maps it through the inverse flow conditioned on the
last H generated poses and the speech context around the frame, so repeated
runs with the same seed are bit-identical and parallel sampling matches
sequential sampling.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
import torch

from .errors import DataError, NumericError
from .kinematics import RootState, pose_sequence_to_clip
from .seeding import counter_rng


@dataclass(frozen=True)
class SamplingConfig:
    seed: Optional[int] = None  # None: derive from the global seed
    temperature: float = 1.0  # sigma scaling the latent std; 0 gives the mode-like path
    init_pose: Optional[np.ndarray] = None  # unstandardized pose; None = rest pose

    def to_dict(self):
        return {
            "seed": self.seed,
            "temperature": self.temperature,
            "init_pose": None if self.init_pose is None else list(map(float, self.init_pose)),
        }


def sample_poses(bundle, mel_frames_std, seed, temperature=1.0, init_pose_std=None,
                 chain=0):
    """Sample a standardized pose sequence (T, D) for standardized mel frames."""
    model = bundle.model
    cfg = model.config
    t_total = mel_frames_std.shape[0]
    if t_total < 1:
        raise DataError("need at least one mel frame to sample")
    if mel_frames_std.shape[1] != cfg.n_mels:
        raise DataError(
            f"mel features have {mel_frames_std.shape[1]} bins but the model "
            f"expects {cfg.n_mels}"
        )
    dtype = model.dtype
    mels = torch.as_tensor(np.ascontiguousarray(mel_frames_std), dtype=dtype)
    if init_pose_std is None:
        init_pose_std = bundle.pose_standardizer.transform(np.zeros(cfg.pose_dim))
    history = torch.as_tensor(init_pose_std, dtype=dtype).repeat(cfg.history_len, 1)

    w = cfg.context_radius
    out = torch.empty((t_total, cfg.pose_dim), dtype=dtype)
    state = None
    sigma = float(temperature)
    with torch.no_grad():
        for t in range(t_total):
            ctx_idx = np.clip(np.arange(t - w, t + w + 1), 0, t_total - 1)
            context = mels[ctx_idx]
            cond, state = model.encode(
                history.reshape(1, 1, cfg.history_len, cfg.pose_dim),
                context.reshape(1, 1, cfg.context_len, cfg.n_mels),
                state,
            )
            z = sigma * counter_rng(seed, chain, t).standard_normal(cfg.pose_dim)
            x = model.flow_inverse(
                torch.as_tensor(z, dtype=dtype).reshape(1, -1), cond.reshape(1, -1)
            )
            if not torch.isfinite(x).all():
                raise NumericError(f"non-finite sampled pose at frame {t}")
            out[t] = x[0]
            history = torch.cat([history[1:], x], dim=0)
    return out.numpy()


def sample_sequence(bundle, mel, config=SamplingConfig()):
    """Sample one MotionClip (20 fps, one frame per mel frame) from raw log-mel features."""
    seed = 0 if config.seed is None else config.seed
    mel_std = bundle.mel_standardizer.transform(mel.frames)
    poses_std = sample_poses(
        bundle,
        mel_std,
        seed=seed,
        temperature=config.temperature,
        init_pose_std=None
        if config.init_pose is None
        else bundle.pose_standardizer.transform(config.init_pose),
    )
    poses = bundle.pose_standardizer.inverse_transform(poses_std)
    initial = RootState(np.asarray(bundle.rest_root_position, dtype=float), 0.0)
    return pose_sequence_to_clip(
        bundle.skeleton, poses, initial, frame_time=1.0 / mel.frame_rate
    )


def batch_sample(bundle, mel, n, base_seed, temperature=1.0, init_pose=None, workers=1):
    """n independent clips; clip i uses seed base_seed + i. Parallel execution
    over worker threads returns exactly the sequential results."""
    if n < 1:
        raise DataError("need n >= 1 samples")
    configs = [
        SamplingConfig(seed=base_seed + i, temperature=temperature, init_pose=init_pose)
        for i in range(n)
    ]
    if workers <= 1:
        return [sample_sequence(bundle, mel, c) for c in configs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda c: sample_sequence(bundle, mel, c), configs))
