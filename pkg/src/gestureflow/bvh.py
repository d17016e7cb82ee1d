"""BVH motion-capture parsing and serialization.

A BVH document is HIERARCHY (joint tree with OFFSET/CHANNELS) followed by
MOTION (frame count, frame time, one row of channel values per frame).
Rotations are degrees, positions centimetres; the declared channel order is
authoritative and preserved.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import BvhParseError, ContractViolation

POSITION_CHANNELS = ("Xposition", "Yposition", "Zposition")
ROTATION_CHANNELS = ("Xrotation", "Yrotation", "Zrotation")


@dataclass(frozen=True)
class Joint:
    name: str
    parent_index: Optional[int]
    rest_offset: np.ndarray  # (3,) cm
    channels: tuple  # channel labels in declared order
    end_site: Optional[np.ndarray] = None  # (3,) cm, leaf joints only

    @property
    def rotation_order(self):
        """Axis string like 'ZXY' built from the declared rotation channels."""
        return "".join(c[0] for c in self.channels if c.endswith("rotation"))


@dataclass(frozen=True)
class Skeleton:
    joints: tuple

    def __post_init__(self):
        roots = [i for i, j in enumerate(self.joints) if j.parent_index is None]
        if roots != [0]:
            raise ValueError("skeleton must have exactly one root at index 0")
        for i, joint in enumerate(self.joints):
            if joint.parent_index is not None and not 0 <= joint.parent_index < i:
                raise ValueError(f"joint {joint.name!r} parent must precede it")
            rot = [c for c in joint.channels if c in ROTATION_CHANNELS]
            pos = [c for c in joint.channels if c in POSITION_CHANNELS]
            if len(rot) != 3 or len(set(rot)) != 3:
                raise ValueError(f"joint {joint.name!r} needs 3 distinct rotation channels")
            if i == 0:
                if len(pos) != 3 or len(set(pos)) != 3 or len(joint.channels) != 6:
                    raise ValueError("root needs 3 position + 3 rotation channels")
            elif pos:
                raise ValueError(f"non-root joint {joint.name!r} cannot have position channels")

    @property
    def joint_names(self):
        return [j.name for j in self.joints]

    @property
    def end_sites(self):
        return [j.end_site for j in self.joints]

    @property
    def channel_count(self):
        return sum(len(j.channels) for j in self.joints)

    def channel_offset(self, joint_index):
        """Column of the first channel of `joint_index` in a frame row."""
        return sum(len(j.channels) for j in self.joints[:joint_index])

    def joint_index(self, name):
        for i, j in enumerate(self.joints):
            if j.name == name:
                return i
        raise KeyError(f"no joint named {name!r}")

    def children(self, joint_index):
        return [i for i, j in enumerate(self.joints) if j.parent_index == joint_index]


@dataclass(frozen=True)
class MotionClip:
    frame_time: float  # seconds per frame
    frames: np.ndarray  # (frame_count, channel_count)

    def __post_init__(self):
        if self.frame_time <= 0:
            raise ValueError("frame_time must be positive")
        if self.frames.ndim != 2:
            raise ValueError("frames must be a 2-D array")

    @property
    def frame_count(self):
        return self.frames.shape[0]

    @property
    def fps(self):
        return 1.0 / self.frame_time


class _Tokens:
    """Whitespace-tolerant token stream that remembers line numbers."""

    def __init__(self, text):
        self.items = []  # (token, line)
        for lineno, line in enumerate(text.splitlines(), start=1):
            for tok in line.split():
                self.items.append((tok, lineno))
        self.pos = 0
        self.last_line = 1

    @property
    def line(self):
        if self.pos < len(self.items):
            return self.items[self.pos][1]
        return self.items[-1][1] if self.items else 1

    def peek(self):
        if self.pos >= len(self.items):
            raise BvhParseError("unexpected end of file", self.line)
        return self.items[self.pos][0]

    def next(self):
        tok = self.peek()
        self.last_line = self.items[self.pos][1]
        self.pos += 1
        return tok

    def expect(self, keyword):
        tok = self.next()
        if tok != keyword:
            raise BvhParseError(f"expected {keyword!r}, got {tok!r}", self.last_line)

    def next_float(self):
        tok, line = self.items[self.pos] if self.pos < len(self.items) else (None, self.line)
        if tok is None:
            raise BvhParseError("unexpected end of file", line)
        try:
            value = float(tok)
        except ValueError:
            raise BvhParseError(f"expected a number, got {tok!r}", line) from None
        self.pos += 1
        self.last_line = line
        return value

    def next_int(self):
        value = self.next_float()
        if value != int(value):
            raise BvhParseError(f"expected an integer, got {value}", self.last_line)
        return int(value)

    def exhausted(self):
        return self.pos >= len(self.items)


def _parse_offset(tokens):
    tokens.expect("OFFSET")
    return np.array([tokens.next_float() for _ in range(3)])


def _parse_channels(tokens):
    tokens.expect("CHANNELS")
    count = tokens.next_int()
    channels = []
    for _ in range(count):
        tok = tokens.next()
        if tok not in POSITION_CHANNELS + ROTATION_CHANNELS:
            raise BvhParseError(f"unknown channel {tok!r}", tokens.line)
        channels.append(tok)
    return tuple(channels)


def _parse_joint(tokens, parent_index, joints):
    name = tokens.next()
    index = len(joints)
    tokens.expect("{")
    offset = _parse_offset(tokens)
    channels = _parse_channels(tokens)
    joints.append(Joint(name, parent_index, offset, channels))
    end_site = None
    while True:
        tok = tokens.next()
        if tok == "JOINT":
            _parse_joint(tokens, index, joints)
        elif tok == "End":
            tokens.expect("Site")
            tokens.expect("{")
            end_site = _parse_offset(tokens)
            tokens.expect("}")
        elif tok == "}":
            break
        else:
            raise BvhParseError(f"expected JOINT, End Site, or '}}', got {tok!r}", tokens.line)
    if end_site is not None:
        joints[index] = Joint(name, parent_index, offset, channels, end_site)


def parse_bvh(text):
    """Parse a BVH document into (Skeleton, MotionClip).

    Raises BvhParseError (with the offending line) on malformed hierarchy,
    frame-count mismatch, or non-numeric motion data.
    """
    tokens = _Tokens(text)
    tokens.expect("HIERARCHY")
    tokens.expect("ROOT")
    joints = []
    _parse_joint(tokens, None, joints)
    try:
        skeleton = Skeleton(tuple(joints))
    except ValueError as exc:
        raise BvhParseError(str(exc), tokens.line) from None

    tokens.expect("MOTION")
    tok = tokens.next()
    if tok == "Frames:":
        pass
    elif tok == "Frames":
        tokens.expect(":")
    else:
        raise BvhParseError(f"expected 'Frames:', got {tok!r}", tokens.line)
    frame_count = tokens.next_int()
    if frame_count < 0:
        raise BvhParseError("frame count must be nonnegative", tokens.line)
    tok = tokens.next()
    if tok == "Frame":
        tok = tokens.next()
        if tok == "Time:":
            pass
        elif tok == "Time":
            tokens.expect(":")
        else:
            raise BvhParseError(f"expected 'Time:', got {tok!r}", tokens.line)
    else:
        raise BvhParseError(f"expected 'Frame Time:', got {tok!r}", tokens.line)
    frame_time = tokens.next_float()
    if frame_time <= 0:
        raise BvhParseError("frame time must be positive", tokens.line)

    width = skeleton.channel_count
    values = np.empty((frame_count, width))
    for f in range(frame_count):
        for c in range(width):
            if tokens.exhausted():
                raise BvhParseError(
                    f"motion data ended early: expected {frame_count} frames "
                    f"x {width} channels, stopped in frame {f}",
                    tokens.line,
                )
            values[f, c] = tokens.next_float()
    if not tokens.exhausted():
        raise BvhParseError(
            f"trailing data after {frame_count} declared frames", tokens.line
        )
    return skeleton, MotionClip(frame_time, values)


def load_bvh(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_bvh(fh.read())


def _fmt(value):
    return f"{value:.6f}"


def _write_joint(skeleton, index, lines, depth):
    joint = skeleton.joints[index]
    indent = "\t" * depth
    keyword = "ROOT" if joint.parent_index is None else "JOINT"
    lines.append(f"{indent}{keyword} {joint.name}")
    lines.append(f"{indent}{{")
    lines.append(f"{indent}\tOFFSET " + " ".join(_fmt(v) for v in joint.rest_offset))
    lines.append(f"{indent}\tCHANNELS {len(joint.channels)} " + " ".join(joint.channels))
    for child in skeleton.children(index):
        _write_joint(skeleton, child, lines, depth + 1)
    if joint.end_site is not None:
        lines.append(f"{indent}\tEnd Site")
        lines.append(f"{indent}\t{{")
        lines.append(f"{indent}\t\tOFFSET " + " ".join(_fmt(v) for v in joint.end_site))
        lines.append(f"{indent}\t}}")
    lines.append(f"{indent}}}")


def write_bvh(skeleton, clip):
    """Serialize (Skeleton, MotionClip) to BVH text with '\\n' line endings."""
    if clip.frames.shape[1] != skeleton.channel_count:
        raise ContractViolation(
            f"clip width {clip.frames.shape[1]} != skeleton channel count "
            f"{skeleton.channel_count}"
        )
    lines = ["HIERARCHY"]
    _write_joint(skeleton, 0, lines, 0)
    lines.append("MOTION")
    lines.append(f"Frames: {clip.frame_count}")
    lines.append(f"Frame Time: {clip.frame_time:.6f}")
    for row in clip.frames:
        lines.append(" ".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def save_bvh(path, skeleton, clip):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(write_bvh(skeleton, clip))


def skeleton_to_dict(skeleton):
    """JSON-ready skeleton description (used in checkpoint metadata)."""
    return {
        "joints": [
            {
                "name": j.name,
                "parent_index": j.parent_index,
                "rest_offset": [float(v) for v in j.rest_offset],
                "channels": list(j.channels),
                "end_site": None if j.end_site is None else [float(v) for v in j.end_site],
            }
            for j in skeleton.joints
        ]
    }


def skeleton_from_dict(data):
    joints = tuple(
        Joint(
            name=j["name"],
            parent_index=j["parent_index"],
            rest_offset=np.array(j["rest_offset"], dtype=float),
            channels=tuple(j["channels"]),
            end_site=None if j["end_site"] is None else np.array(j["end_site"], dtype=float),
        )
        for j in data["joints"]
    )
    return Skeleton(joints)
