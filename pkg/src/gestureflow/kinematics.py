"""Pose parameterization and kinematics.

Model-space pose layout is [expmap per joint (3 each), forward, lateral,
angular]: exponential-map joint rotations followed by heading-local root
displacement per frame (cm forward, cm sideways, radians of turn). Heading
is the rotation about the vertical y axis extracted from the root rotation;
the residual tilt stays in the root joint's exponential map.
"""

import json
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from .bvh import MotionClip, POSITION_CHANNELS
from .errors import ContractViolation, DataError


def pose_dim(skeleton):
    """Model pose dimension: 3 per joint plus 3 root deltas."""
    return 3 * len(skeleton.joints) + 3


@dataclass(frozen=True)
class PoseVector:
    joint_rotations: np.ndarray  # (J, 3) exponential maps, radians*axis
    root_deltas: np.ndarray  # (3,) forward cm, lateral cm, angular rad

    def to_array(self):
        return np.concatenate([self.joint_rotations.reshape(-1), self.root_deltas])

    @classmethod
    def from_array(cls, vec):
        vec = np.asarray(vec, dtype=float)
        return cls(vec[:-3].reshape(-1, 3), vec[-3:])


@dataclass(frozen=True)
class RootState:
    position: np.ndarray  # (3,) world cm
    heading: float  # radians about +y


def expmap_to_rotation(v):
    """Rodrigues formula; accepts (..., 3) and returns (..., 3, 3)."""
    v = np.asarray(v, dtype=float)
    angle = np.linalg.norm(v, axis=-1, keepdims=True)
    small = angle < 1e-8
    axis = np.where(small, 0.0, v / np.where(small, 1.0, angle))
    a = angle[..., None]
    x, y, z = axis[..., 0], axis[..., 1], axis[..., 2]
    zero = np.zeros_like(x)
    k = np.stack(
        [
            np.stack([zero, -z, y], axis=-1),
            np.stack([z, zero, -x], axis=-1),
            np.stack([-y, x, zero], axis=-1),
        ],
        axis=-2,
    )
    eye = np.broadcast_to(np.eye(3), k.shape)
    r = eye + np.sin(a) * k + (1.0 - np.cos(a)) * (k @ k)
    # second-order Taylor keeps tiny rotations exact to float precision
    skew_small = np.zeros_like(k)
    skew_small[..., 0, 1] = -v[..., 2]
    skew_small[..., 0, 2] = v[..., 1]
    skew_small[..., 1, 0] = v[..., 2]
    skew_small[..., 1, 2] = -v[..., 0]
    skew_small[..., 2, 0] = -v[..., 1]
    skew_small[..., 2, 1] = v[..., 0]
    r_small = eye + skew_small + 0.5 * (skew_small @ skew_small)
    return np.where(small[..., None], r_small, r)


def _check_rotation(r, tol=1e-4):
    if r.shape[-2:] != (3, 3):
        raise ContractViolation("rotation must be 3x3")
    err = np.abs(r @ np.swapaxes(r, -1, -2) - np.eye(3)).max()
    det = np.linalg.det(r)
    if err > tol or np.abs(det - 1.0).max() > tol:
        raise ContractViolation(
            f"not a rotation matrix (orthogonality err {err:.2e}, det {det})"
        )


def rotation_to_expmap(r):
    """Canonical exponential map (norm <= pi) of a rotation matrix."""
    r = np.asarray(r, dtype=float)
    _check_rotation(r)
    cos_angle = np.clip((np.trace(r) - 1.0) / 2.0, -1.0, 1.0)
    angle = np.arccos(cos_angle)
    skew = np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    if angle < 1e-6:
        return 0.5 * skew
    if np.pi - angle > 1e-6:
        return (angle / (2.0 * np.sin(angle))) * skew
    # near pi the skew part vanishes; recover the axis from R + I
    b = (r + np.eye(3)) / 2.0
    axis = np.sqrt(np.clip(np.diag(b), 0.0, None))
    k = int(np.argmax(axis))
    if axis[k] > 0:
        for i in range(3):
            if i != k and axis[i] > 1e-8:
                if b[k, i] < 0:
                    axis[i] = -axis[i]
    axis = axis / np.linalg.norm(axis)
    return angle * axis


def euler_to_matrix(angles_deg, order):
    """Intrinsic rotations applied in declared order, e.g. 'ZXY'."""
    return Rotation.from_euler(order, angles_deg, degrees=True).as_matrix()


def matrix_to_euler(r, order):
    """Inverse of euler_to_matrix; gimbal-locked inputs pick the zero-third-angle branch."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        return Rotation.from_matrix(r).as_euler(order, degrees=True)


def rotation_about_y(angle):
    angle = np.asarray(angle, dtype=float)
    c, s = np.cos(angle), np.sin(angle)
    zero, one = np.zeros_like(c), np.ones_like(c)
    return np.stack(
        [
            np.stack([c, zero, s], axis=-1),
            np.stack([zero, one, zero], axis=-1),
            np.stack([-s, zero, c], axis=-1),
        ],
        axis=-2,
    )


def heading_of(r):
    """Yaw about +y: angle of the root's local z axis projected to the ground plane."""
    r = np.asarray(r, dtype=float)
    sin_h, cos_h = r[..., 0, 2], r[..., 2, 2]
    degenerate = np.hypot(sin_h, cos_h) < 1e-8
    fallback = np.arctan2(-r[..., 2, 0], r[..., 0, 0])
    return np.where(degenerate, fallback, np.arctan2(sin_h, cos_h))


def forward_kinematics(skeleton, pose, root_state):
    """World positions (J, 3) of every joint for a single pose."""
    if isinstance(pose, PoseVector):
        vec = pose.to_array()
    else:
        vec = np.asarray(pose, dtype=float)
    if vec.shape != (pose_dim(skeleton),):
        raise ContractViolation(
            f"pose dimension {vec.shape} does not match skeleton ({pose_dim(skeleton)},)"
        )
    rotations = expmap_to_rotation(vec[:-3].reshape(-1, 3))
    world_r = np.empty_like(rotations)
    world_p = np.empty((len(skeleton.joints), 3))
    world_r[0] = rotation_about_y(root_state.heading) @ rotations[0]
    world_p[0] = np.asarray(root_state.position, dtype=float)
    for j, joint in enumerate(skeleton.joints):
        if j == 0:
            continue
        p = joint.parent_index
        world_r[j] = world_r[p] @ rotations[j]
        world_p[j] = world_p[p] + world_r[p] @ joint.rest_offset
    return world_p


def _clip_local_rotations(skeleton, clip):
    """(T, J, 3, 3) local rotation matrices from the clip's euler channels."""
    t = clip.frame_count
    out = np.empty((t, len(skeleton.joints), 3, 3))
    for j, joint in enumerate(skeleton.joints):
        base = skeleton.channel_offset(j)
        cols = [base + k for k, c in enumerate(joint.channels) if c.endswith("rotation")]
        angles = clip.frames[:, cols]
        out[:, j] = Rotation.from_euler(joint.rotation_order, angles, degrees=True).as_matrix()
    return out


def _root_positions(skeleton, clip):
    root = skeleton.joints[0]
    base = skeleton.channel_offset(0)
    cols = {c: base + k for k, c in enumerate(root.channels)}
    pos = np.stack([clip.frames[:, cols[c]] for c in POSITION_CHANNELS], axis=-1)
    return pos + root.rest_offset


def clip_joint_positions(skeleton, clip):
    """World positions (T, J, 3) of every joint for every frame, straight from channels."""
    local = _clip_local_rotations(skeleton, clip)
    t = clip.frame_count
    world_r = np.empty_like(local)
    world_p = np.empty((t, len(skeleton.joints), 3))
    world_r[:, 0] = local[:, 0]
    world_p[:, 0] = _root_positions(skeleton, clip)
    for j, joint in enumerate(skeleton.joints):
        if j == 0:
            continue
        p = joint.parent_index
        world_r[:, j] = world_r[:, p] @ local[:, j]
        world_p[:, j] = world_p[:, p] + np.einsum("tab,b->ta", world_r[:, p], joint.rest_offset)
    return world_p


def _wrap_angle(a):
    return (a + np.pi) % (2.0 * np.pi) - np.pi


def clip_to_pose_sequence(skeleton, clip):
    """Convert a clip to model-space poses plus the initial root state.

    Root world motion becomes per-frame heading-local forward/lateral/angular
    deltas (frame 0 gets zeros); vertical root displacement is not
    representable and is dropped.
    """
    local = _clip_local_rotations(skeleton, clip)
    t = clip.frame_count
    headings = heading_of(local[:, 0])
    tilt = np.einsum("tab,tbc->tac", rotation_about_y(-headings), local[:, 0])
    expmaps = np.empty((t, len(skeleton.joints), 3))
    for f in range(t):
        expmaps[f, 0] = rotation_to_expmap(tilt[f])
        for j in range(1, len(skeleton.joints)):
            expmaps[f, j] = rotation_to_expmap(local[f, j])

    positions = _root_positions(skeleton, clip)
    deltas = np.zeros((t, 3))
    if t > 1:
        step = positions[1:] - positions[:-1]
        local_step = np.einsum("tab,tb->ta", rotation_about_y(-headings[:-1]), step)
        deltas[1:, 0] = local_step[:, 2]  # forward = heading-local z
        deltas[1:, 1] = local_step[:, 0]  # lateral = heading-local x
        deltas[1:, 2] = _wrap_angle(headings[1:] - headings[:-1])
    poses = np.concatenate([expmaps.reshape(t, -1), deltas], axis=1)
    return poses, RootState(positions[0].copy(), float(headings[0]))


def reintegrate_root(deltas, initial):
    """Integrate (forward, lateral, angular) deltas into per-frame root states.

    Returns (positions (T, 3), headings (T,)); frame t applies deltas[t] to
    the previous frame's state, so zero deltas reproduce `initial`.
    """
    deltas = np.asarray(deltas, dtype=float)
    t = deltas.shape[0]
    positions = np.empty((t, 3))
    headings = np.empty(t)
    prev_p = np.asarray(initial.position, dtype=float)
    prev_h = float(initial.heading)
    for f in range(t):
        fwd, lat, ang = deltas[f]
        step = rotation_about_y(prev_h) @ np.array([lat, 0.0, fwd])
        prev_p = prev_p + step
        prev_h = prev_h + ang
        positions[f] = prev_p
        headings[f] = prev_h
    return positions, headings


def pose_sequence_to_clip(skeleton, poses, initial, frame_time=0.05):
    """Inverse of clip_to_pose_sequence: rebuild BVH channel rows."""
    poses = np.asarray(poses, dtype=float)
    t, d = poses.shape
    if d != pose_dim(skeleton):
        raise ContractViolation("pose dimension does not match skeleton")
    positions, headings = reintegrate_root(poses[:, -3:], initial)
    expmaps = poses[:, :-3].reshape(t, -1, 3)
    rows = np.zeros((t, skeleton.channel_count))
    for j, joint in enumerate(skeleton.joints):
        base = skeleton.channel_offset(j)
        rot = expmap_to_rotation(expmaps[:, j])
        if j == 0:
            rot = np.einsum("tab,tbc->tac", rotation_about_y(headings), rot)
        angles = np.atleast_2d(matrix_to_euler(rot, joint.rotation_order))
        rot_cols = [base + k for k, c in enumerate(joint.channels) if c.endswith("rotation")]
        rows[:, rot_cols] = angles
        if j == 0:
            chan_pos = positions - joint.rest_offset
            for k, c in enumerate(joint.channels):
                if c in POSITION_CHANNELS:
                    rows[:, base + k] = chan_pos[:, POSITION_CHANNELS.index(c)]
    return MotionClip(frame_time, rows)


def resample_clip(clip, target_fps=20.0):
    """Nearest-frame resampling to the target rate (no interpolation)."""
    src_fps = 1.0 / clip.frame_time
    if abs(src_fps - target_fps) < 1e-9:
        return clip
    duration = clip.frame_count * clip.frame_time
    count = max(1, int(round(duration * target_fps)))
    idx = np.clip(np.round(np.arange(count) * src_fps / target_fps).astype(int), 0, clip.frame_count - 1)
    return MotionClip(1.0 / target_fps, clip.frames[idx].copy())


@dataclass(frozen=True)
class MirrorMap:
    joint_pairs: tuple  # (left_index, right_index) pairs
    self_mirrored: tuple  # midline joint indices

    def validate(self, n_joints):
        seen = []
        for l, r in self.joint_pairs:
            seen += [l, r]
        seen += list(self.self_mirrored)
        if sorted(seen) != list(range(n_joints)):
            raise ContractViolation(
                "mirror map must cover every joint exactly once "
                f"(got {sorted(seen)} for {n_joints} joints)"
            )


def build_mirror_map(skeleton, left_prefix="Left", right_prefix="Right"):
    """Pair joints by Left/Right name prefixes; everything else is midline."""
    names = skeleton.joint_names
    pairs = []
    self_mirrored = []
    for i, name in enumerate(names):
        if name.startswith(left_prefix):
            partner = right_prefix + name[len(left_prefix):]
            if partner not in names:
                raise DataError(f"no right-side partner for joint {name!r}")
            pairs.append((i, names.index(partner)))
        elif name.startswith(right_prefix):
            partner = left_prefix + name[len(right_prefix):]
            if partner not in names:
                raise DataError(f"no left-side partner for joint {name!r}")
        else:
            self_mirrored.append(i)
    mmap = MirrorMap(tuple(pairs), tuple(self_mirrored))
    mmap.validate(len(names))
    return mmap


def load_mirror_map(path, skeleton):
    """JSON override: {"joint_pairs": [[l, r], ...], "self_mirrored": [...]}; names or indices."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)

    def as_index(item):
        return item if isinstance(item, int) else skeleton.joint_index(item)

    try:
        pairs = tuple((as_index(l), as_index(r)) for l, r in raw["joint_pairs"])
        selfs = tuple(as_index(s) for s in raw["self_mirrored"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: malformed mirror-map file ({exc})") from exc
    mmap = MirrorMap(pairs, selfs)
    mmap.validate(len(skeleton.joints))
    return mmap


def mirror_pose_sequence(poses, mirror_map, n_joints=None):
    """Reflect poses across the sagittal plane; accepts (D,) or (T, D)."""
    poses = np.asarray(poses, dtype=float)
    single = poses.ndim == 1
    vecs = np.atleast_2d(poses)
    t, d = vecs.shape
    j = (d - 3) // 3
    if n_joints is not None and n_joints != j:
        raise ContractViolation("mirror map does not match pose dimension")
    perm = np.arange(j)
    for l, r in mirror_map.joint_pairs:
        perm[l], perm[r] = r, l
    rotations = vecs[:, : 3 * j].reshape(t, j, 3)[:, perm]
    rotations = rotations * np.array([1.0, -1.0, -1.0])  # (x, y, z) -> (x, -y, -z)
    deltas = vecs[:, -3:] * np.array([1.0, -1.0, -1.0])  # forward kept, lateral/angular flipped
    out = np.concatenate([rotations.reshape(t, -1), deltas], axis=1)
    return out[0] if single else out


def mirror_pose(pose: PoseVector, mirror_map: MirrorMap) -> PoseVector:
    mirror_map.validate(len(pose.joint_rotations))
    return PoseVector.from_array(mirror_pose_sequence(pose.to_array(), mirror_map))
