"""Gesture-space occupancy and hand-velocity-peak analyses.

Two views of sampled motion: (a) pooled hip-centered upper-body joint
positions projected to the frontal plane ("gesture space"), with a
Bhattacharyya-coefficient overlap score between two clouds; (b) kernel
density estimates over the times of the top-N hand-speed peaks pooled across
many sampled sequences, one curve per N.
"""

import json
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DataError
from .kinematics import clip_joint_positions
from .synthesis import batch_sample


@dataclass(frozen=True)
class EvalConfig:
    space_samples: int = 15
    space_stride: int = 8  # pool every 8th frame
    peaks_samples: int = 300
    peak_n_min: int = 2
    peak_n_max: int = 12
    kde_bandwidth: float = 0.1  # seconds
    histogram_bins: int = 64
    hand_mode: str = "right"  # right | left | max
    hand_joint: str = "RightHand"
    left_hand_joint: str = "LeftHand"
    upper_body_joints: Optional[tuple] = None  # None = every joint

    def to_dict(self):
        return {
            "space_samples": self.space_samples,
            "space_stride": self.space_stride,
            "peaks_samples": self.peaks_samples,
            "peak_n_min": self.peak_n_min,
            "peak_n_max": self.peak_n_max,
            "kde_bandwidth": self.kde_bandwidth,
            "histogram_bins": self.histogram_bins,
            "hand_mode": self.hand_mode,
            "hand_joint": self.hand_joint,
            "left_hand_joint": self.left_hand_joint,
            "upper_body_joints": None
            if self.upper_body_joints is None
            else list(self.upper_body_joints),
        }


def hand_speed(skeleton, clip, hand_joint="RightHand"):
    """Per-frame hand speed (cm/s) in hip-centered coordinates; frame 0 is 0."""
    j = skeleton.joint_index(hand_joint)
    positions = clip_joint_positions(skeleton, clip)
    rel = positions[:, j] - positions[:, 0]
    speed = np.zeros(clip.frame_count)
    if clip.frame_count > 1:
        speed[1:] = np.linalg.norm(np.diff(rel, axis=0), axis=1) / clip.frame_time
    return speed


def _hand_series(skeleton, clip, config):
    if config.hand_mode == "right":
        return hand_speed(skeleton, clip, config.hand_joint)
    if config.hand_mode == "left":
        return hand_speed(skeleton, clip, config.left_hand_joint)
    if config.hand_mode == "max":
        return np.maximum(
            hand_speed(skeleton, clip, config.hand_joint),
            hand_speed(skeleton, clip, config.left_hand_joint),
        )
    raise DataError(f"unknown hand mode {config.hand_mode!r}")


def top_n_peaks(series, n, frame_time=0.05):
    """Times (s) of the N highest local maxima of a series.

    A peak is strictly greater than its neighbors; a plateau higher than both
    sides counts once, at its first frame. Ties rank by earlier time. Fewer
    than N peaks returns all of them.
    """
    if n < 1:
        raise DataError("need n >= 1 peaks")
    s = np.asarray(series, dtype=float)
    t = len(s)
    peaks = []  # (height, index)
    i = 0
    while i < t:
        j = i
        while j + 1 < t and s[j + 1] == s[i]:
            j += 1
        if i > 0 and j < t - 1 and s[i - 1] < s[i] and s[j + 1] < s[i]:
            peaks.append((s[i], i))
        i = j + 1
    peaks.sort(key=lambda p: (-p[0], p[1]))
    return np.array([idx * frame_time for _, idx in peaks[:n]])


def kde(points, bandwidth, grid):
    """Mean of Gaussian kernels (stddev = bandwidth) centered at `points`."""
    if bandwidth <= 0:
        raise DataError("bandwidth must be positive")
    grid = np.asarray(grid, dtype=float)
    points = np.asarray(points, dtype=float)
    if points.size == 0:
        warnings.warn("kde: empty point set, returning a zero curve")
        return np.zeros_like(grid)
    norm = 1.0 / (bandwidth * np.sqrt(2.0 * np.pi))
    out = np.empty_like(grid)
    for start in range(0, len(grid), 512):
        g = grid[start : start + 512, None]
        out[start : start + 512] = np.mean(
            norm * np.exp(-0.5 * ((g - points[None, :]) / bandwidth) ** 2), axis=1
        )
    return out


def kde_grid(lo, hi, bandwidth):
    """Evaluation grid padded by 4 bandwidths, spaced at bandwidth / 4."""
    lo, hi = lo - 4.0 * bandwidth, hi + 4.0 * bandwidth
    count = max(2, int(np.ceil((hi - lo) / (bandwidth / 4.0))) + 1)
    return np.linspace(lo, hi, count)


@dataclass
class PeakDistribution:
    """Per-N KDE curves over pooled hand-velocity peak times."""

    grid: np.ndarray  # (G,) seconds
    densities: dict  # N -> (G,) density curve
    n_samples: int
    bandwidth: float

    def validate(self):
        for n, curve in self.densities.items():
            if (curve < 0).any():
                raise DataError(f"negative density for N={n}")
            if curve.any():
                integral = np.trapezoid(curve, self.grid)
                if abs(integral - 1.0) > 1e-3:
                    raise DataError(f"density for N={n} integrates to {integral:.5f}")


def peak_distribution(bundle, mel, config=EvalConfig(), n_samples=None, base_seed=0,
                      temperature=1.0, workers=1):
    """Sample many clips from one input and KDE the pooled top-N peak times."""
    n_samples = config.peaks_samples if n_samples is None else n_samples
    clips = batch_sample(bundle, mel, n_samples, base_seed, temperature, workers=workers)
    return peak_distribution_of_clips(bundle.skeleton, clips, config)


def peak_distribution_of_clips(skeleton, clips, config=EvalConfig()):
    if not clips:
        raise DataError("no clips to analyze")
    frame_time = clips[0].frame_time
    duration = max(c.frame_count for c in clips) * frame_time
    series = [_hand_series(skeleton, c, config) for c in clips]
    grid = kde_grid(0.0, duration, config.kde_bandwidth)
    densities = {}
    for n in range(config.peak_n_min, config.peak_n_max + 1):
        pooled = np.concatenate([top_n_peaks(s, n, frame_time) for s in series])
        densities[n] = kde(pooled, config.kde_bandwidth, grid)
    dist = PeakDistribution(grid, densities, len(clips), config.kde_bandwidth)
    dist.validate()
    return dist


@dataclass(frozen=True)
class GestureSpaceCloud:
    """Hip-centered frontal-plane joint positions pooled over frames."""

    points: np.ndarray  # (N, 2) cm: horizontal x, vertical y
    source: str = ""


def gesture_space_cloud(skeleton, clips, upper_body_joints=None, stride=8, source=""):
    """Pool FK positions of the chosen joints every `stride` frames, hip at origin."""
    if upper_body_joints is None:
        indices = list(range(len(skeleton.joints)))
    else:
        indices = [skeleton.joint_index(n) for n in upper_body_joints]
    chunks = []
    for clip in clips:
        positions = clip_joint_positions(skeleton, clip)
        frames = positions[::stride]
        rel = frames[:, indices] - frames[:, 0:1]
        chunks.append(rel[..., :2].reshape(-1, 2))  # frontal plane: keep (x, y)
    if not chunks:
        raise DataError("no clips to pool")
    return GestureSpaceCloud(np.concatenate(chunks), source)


def occupancy_overlap(a, b, bins=64):
    """Bhattacharyya coefficient of the two clouds' normalized 2D histograms."""
    if a.points.size == 0 or b.points.size == 0:
        raise DataError("cannot compute overlap of an empty cloud")
    both = np.concatenate([a.points, b.points])
    lo = both.min(axis=0)
    hi = both.max(axis=0)
    pad = 0.05 * np.maximum(hi - lo, 1e-9)
    ranges = [(lo[0] - pad[0], hi[0] + pad[0]), (lo[1] - pad[1], hi[1] + pad[1])]
    h_a, _, _ = np.histogram2d(a.points[:, 0], a.points[:, 1], bins=bins, range=ranges)
    h_b, _, _ = np.histogram2d(b.points[:, 0], b.points[:, 1], bins=bins, range=ranges)
    p = h_a / h_a.sum()
    q = h_b / h_b.sum()
    return float(np.sqrt(p * q).sum())


def speech_motion_correlation(skeleton, clip, envelope, smoothing=11,
                              joints=("RightHand", "LeftHand")):
    """Pearson r between smoothed hand speed (max over the given joints) and
    the speech amplitude envelope; the desk-scale speech-gesture coupling measure."""
    from scipy.ndimage import uniform_filter1d

    speed = np.max([hand_speed(skeleton, clip, j) for j in joints], axis=0)
    t = min(len(speed), len(envelope))
    a = uniform_filter1d(speed[:t], smoothing, mode="nearest")
    b = uniform_filter1d(np.asarray(envelope[:t], dtype=float), smoothing, mode="nearest")
    if a.std() == 0 or b.std() == 0:
        return 0.0
    return float(np.corrcoef(a, b)[0, 1])


# --- report files -------------------------------------------------------------


def write_density_csv(path, distributions, meta_line=""):
    """distributions: iterable of (source, PeakDistribution)."""
    with open(path, "w", encoding="utf-8") as fh:
        if meta_line:
            fh.write(f"# {meta_line}\n")
        fh.write("grid_time,N,density,source\n")
        for source, dist in distributions:
            for n in sorted(dist.densities):
                for t, d in zip(dist.grid, dist.densities[n]):
                    fh.write(f"{t:.6f},{n},{d:.8g},{source}\n")


def write_cloud_csv(path, clouds, meta_line=""):
    with open(path, "w", encoding="utf-8") as fh:
        if meta_line:
            fh.write(f"# {meta_line}\n")
        fh.write("x,y,source\n")
        for cloud in clouds:
            for x, y in cloud.points:
                fh.write(f"{x:.4f},{y:.4f},{cloud.source}\n")


def write_overlap_json(path, overlap, meta=None):
    payload = dict(meta or {})
    payload["occupancy_overlap"] = overlap
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
