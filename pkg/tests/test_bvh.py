import numpy as np
import pytest

from bvh_fixtures import FIXTURE_CORPUS, THREE_JOINT_FIVE_FRAMES
from gestureflow.bvh import (MotionClip, parse_bvh, skeleton_from_dict,
                             skeleton_to_dict, write_bvh)
from gestureflow.errors import BvhParseError, ContractViolation


def independent_reference_read(text):
    """Minimal line-based BVH reader, independent of the production parser:
    collects OFFSET triples in document order and the motion rows."""
    offsets, rows = [], []
    frames = frame_time = None
    lines = text.splitlines()
    i = 0
    while i < len(lines):
        tokens = lines[i].split()
        if tokens[:1] == ["OFFSET"]:
            offsets.append([float(v) for v in tokens[1:4]])
        elif tokens[:1] == ["Frames:"]:
            frames = int(tokens[1])
        elif tokens[:2] == ["Frame", "Time:"]:
            frame_time = float(tokens[2])
            values = []
            for line in lines[i + 1 :]:
                values.extend(float(v) for v in line.split())
            rows = values
            break
        i += 1
    return offsets, frames, frame_time, rows


class TestParse:
    def test_single_joint_zero_motion(self):
        skeleton, clip = parse_bvh(FIXTURE_CORPUS["single_joint_zero"])
        assert len(skeleton.joints) == 1
        assert skeleton.joints[0].parent_index is None
        assert clip.frame_count == 1
        np.testing.assert_array_equal(clip.frames, np.zeros((1, 6)))

    def test_child_offset_is_echoed(self):
        skeleton, _ = parse_bvh(FIXTURE_CORPUS["two_joint_chain"])
        np.testing.assert_array_equal(skeleton.joints[1].rest_offset, [0.0, 10.0, 0.0])
        assert skeleton.joints[1].parent_index == 0

    def test_against_independent_reference_reader(self):
        skeleton, clip = parse_bvh(THREE_JOINT_FIVE_FRAMES)
        offsets, frames, frame_time, flat = independent_reference_read(
            THREE_JOINT_FIVE_FRAMES
        )
        got_offsets = [list(j.rest_offset) for j in skeleton.joints]
        got_offsets.append(list(skeleton.joints[-1].end_site))
        assert got_offsets == offsets
        assert clip.frame_count == frames == 5
        assert clip.frame_time == frame_time
        np.testing.assert_allclose(
            clip.frames, np.array(flat).reshape(5, -1), rtol=0, atol=0
        )

    def test_channel_orders_preserved(self):
        skeleton, _ = parse_bvh(FIXTURE_CORPUS["all_rotation_orders"])
        orders = [j.rotation_order for j in skeleton.joints]
        assert orders == ["XYZ", "XZY", "YXZ", "YZX", "ZYX", "ZXY"]

    def test_whitespace_tolerance(self):
        skeleton, clip = parse_bvh(FIXTURE_CORPUS["messy_whitespace"])
        assert clip.frame_count == 2
        np.testing.assert_allclose(clip.frames[1], [7, 8, 9, 10, 11, 12])

    def test_empty_clip(self):
        _, clip = parse_bvh(FIXTURE_CORPUS["empty_clip"])
        assert clip.frame_count == 0


class TestParseErrors:
    def test_missing_hierarchy_keyword(self):
        with pytest.raises(BvhParseError, match="line 1"):
            parse_bvh("HIERARCH\nROOT a\n")

    def test_bad_joint_keyword(self):
        text = FIXTURE_CORPUS["two_joint_chain"].replace("JOINT", "JOIN")
        with pytest.raises(BvhParseError):
            parse_bvh(text)

    def test_non_numeric_motion_value_reports_line(self):
        text = FIXTURE_CORPUS["two_joint_chain"].replace("45 0 0", "45 oops 0")
        with pytest.raises(BvhParseError, match="line 15"):
            parse_bvh(text)

    def test_too_few_values_for_declared_frames(self):
        text = FIXTURE_CORPUS["two_joint_chain"].replace("Frames: 2", "Frames: 3")
        with pytest.raises(BvhParseError, match="ended early"):
            parse_bvh(text)

    def test_trailing_values_rejected(self):
        text = FIXTURE_CORPUS["two_joint_chain"] + "99\n"
        with pytest.raises(BvhParseError, match="trailing"):
            parse_bvh(text)

    def test_zero_frame_time_rejected(self):
        text = FIXTURE_CORPUS["single_joint_zero"].replace("0.050000", "0.0")
        with pytest.raises(BvhParseError, match="positive"):
            parse_bvh(text)

    def test_bad_channel_name(self):
        text = FIXTURE_CORPUS["single_joint_zero"].replace("Xrotation", "Xrot")
        with pytest.raises(BvhParseError, match="unknown channel"):
            parse_bvh(text)

    def test_parsing_is_total_over_fixture_corpus(self):
        # every fixture parses or raises a positioned error; no other exception
        for name, text in FIXTURE_CORPUS.items():
            parse_bvh(text)
        for name, text in FIXTURE_CORPUS.items():
            mutated = text.replace("OFFSET", "OFFSETS", 1)
            with pytest.raises(BvhParseError) as err:
                parse_bvh(mutated)
            assert err.value.line is not None


def _random_skeleton_and_clip(rng, n_joints=5, n_frames=4):
    from gestureflow.bvh import Joint, Skeleton

    orders = ["XYZ", "XZY", "YXZ", "YZX", "ZXY", "ZYX"]
    joints = []
    for j in range(n_joints):
        order = orders[rng.integers(len(orders))]
        rot = tuple(f"{axis}rotation" for axis in order)
        channels = ("Xposition", "Yposition", "Zposition") + rot if j == 0 else rot
        joints.append(
            Joint(
                name=f"j{j}",
                parent_index=None if j == 0 else int(rng.integers(j)),
                rest_offset=rng.uniform(-20, 20, 3),
                channels=channels,
                end_site=rng.uniform(-5, 5, 3) if rng.random() < 0.3 else None,
            )
        )
    skeleton = Skeleton(tuple(joints))
    frames = rng.uniform(-170, 170, (n_frames, skeleton.channel_count))
    return skeleton, MotionClip(0.05, frames)


class TestWrite:
    def test_round_trip_fixture_corpus(self):
        for name, text in FIXTURE_CORPUS.items():
            skeleton, clip = parse_bvh(text)
            skeleton2, clip2 = parse_bvh(write_bvh(skeleton, clip))
            assert skeleton2.joint_names == skeleton.joint_names
            assert [j.channels for j in skeleton2.joints] == [
                j.channels for j in skeleton.joints
            ]
            for a, b in zip(skeleton.joints, skeleton2.joints):
                np.testing.assert_allclose(b.rest_offset, a.rest_offset, atol=1e-4)
            np.testing.assert_allclose(clip2.frames, clip.frames, atol=1e-4)
            assert abs(clip2.frame_time - clip.frame_time) < 1e-4

    def test_round_trip_random_skeletons(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            skeleton, clip = _random_skeleton_and_clip(rng)
            skeleton2, clip2 = parse_bvh(write_bvh(skeleton, clip))
            for a, b in zip(skeleton.joints, skeleton2.joints):
                assert a.parent_index == b.parent_index
                np.testing.assert_allclose(b.rest_offset, a.rest_offset, atol=1e-4)
                if a.end_site is None:
                    assert b.end_site is None
                else:
                    np.testing.assert_allclose(b.end_site, a.end_site, atol=1e-4)
            np.testing.assert_allclose(clip2.frames, clip.frames, atol=1e-4)

    def test_empty_clip_writes_no_rows(self):
        skeleton, clip = parse_bvh(FIXTURE_CORPUS["empty_clip"])
        text = write_bvh(skeleton, clip)
        assert "Frames: 0" in text
        assert text.rstrip().endswith("Frame Time: 0.033333")

    def test_rewrite_reproduces_five_frames(self):
        skeleton, clip = parse_bvh(THREE_JOINT_FIVE_FRAMES)
        _, clip2 = parse_bvh(write_bvh(skeleton, clip))
        assert clip2.frame_count == 5
        np.testing.assert_allclose(clip2.frames, clip.frames, atol=1e-4)

    def test_width_mismatch_rejected(self):
        skeleton, clip = parse_bvh(FIXTURE_CORPUS["two_joint_chain"])
        bad = MotionClip(0.05, np.zeros((2, 5)))
        with pytest.raises(ContractViolation, match="channel count"):
            write_bvh(skeleton, bad)


def test_skeleton_dict_round_trip():
    skeleton, _ = parse_bvh(THREE_JOINT_FIVE_FRAMES)
    clone = skeleton_from_dict(skeleton_to_dict(skeleton))
    assert clone.joint_names == skeleton.joint_names
    for a, b in zip(skeleton.joints, clone.joints):
        assert a.channels == b.channels
        np.testing.assert_array_equal(a.rest_offset, b.rest_offset)
