import math
import re
from pathlib import Path

import numpy as np
import pytest

from conftest import random_rotation
from scene_fixtures import GOLDEN_QUERY, GOLDEN_SCENES, pose_matrix
from spatialprompt.errors import EmptyInput, UnknownFrame
from spatialprompt.prompting import (
    DEFAULT_ANNOTATION,
    PREAMBLE,
    EulerAngles,
    build_prompt,
    bundle_from_dict,
    bundle_to_dict,
    bundle_to_json,
    euler_to_matrix,
    format_pose_block,
    resize_image,
    rotation_to_euler,
    round_decimal,
)
from spatialprompt.scene import CameraPose, load_manifest

GOLDENS = Path(__file__).parent / "goldens"


def pose(yaw=0.0, pitch=0.0, roll=0.0, t=(0, 0, 0)):
    return CameraPose(np.array(pose_matrix(yaw, pitch, roll, t)).reshape(4, 4))


# -- euler -------------------------------------------------------------------------


def test_euler_identity():
    e = rotation_to_euler(pose())
    assert (e.roll_deg, e.pitch_deg, e.yaw_deg) == (0.0, 0.0, 0.0)


def test_euler_single_axis_yaw():
    e = rotation_to_euler(pose(yaw=90))
    assert e.roll_deg == pytest.approx(0.0, abs=1e-9)
    assert e.pitch_deg == pytest.approx(0.0, abs=1e-9)
    assert e.yaw_deg == pytest.approx(90.0)


def test_euler_round_trip_random():
    rng = np.random.default_rng(8)
    for _ in range(500):
        m = np.eye(4)
        m[:3, :3] = random_rotation(rng)
        p = CameraPose(m)
        e = rotation_to_euler(p)
        err = np.linalg.norm(euler_to_matrix(e) - p.rotation)
        assert err < 1e-6
        for angle in (e.roll_deg, e.pitch_deg, e.yaw_deg):
            assert -180.0 < angle <= 180.0


def test_euler_gimbal_lock_rule():
    for pitch in (90.0, -90.0):
        for yaw in (0.0, 35.0, -120.0):
            p = pose(yaw=yaw, pitch=pitch, roll=0.0)
            e = rotation_to_euler(p)
            assert e.roll_deg == 0.0  # canonical: roll pinned at lock
            assert abs(e.pitch_deg) == pytest.approx(90.0)
            err = np.linalg.norm(euler_to_matrix(e) - p.rotation)
            assert err < 1e-6


def test_euler_gimbal_lock_absorbs_roll_into_yaw():
    # decompose a locked pose that was built *with* roll: yaw must absorb it
    p = pose(yaw=50.0, pitch=90.0, roll=20.0)
    e = rotation_to_euler(p)
    assert e.roll_deg == 0.0
    assert np.linalg.norm(euler_to_matrix(e) - p.rotation) < 1e-6


# -- formatting --------------------------------------------------------------------


def test_round_decimal_half_away_from_zero():
    assert round_decimal(1.23456, 2) == "1.23"
    assert round_decimal(-0.005, 2) == "-0.01"
    assert round_decimal(2.0, 2) == "2.00"
    assert round_decimal(1.005, 2) == "1.01"
    assert round_decimal(0.25, 1) == "0.3"
    assert round_decimal(-0.25, 1) == "-0.3"


def test_round_decimal_negative_zero_normalized():
    assert round_decimal(-0.001, 2) == "0.00"
    assert round_decimal(-0.04, 1) == "0.0"


def test_format_pose_block_spec_example():
    p = pose(t=(1.23456, -0.005, 2.0))
    position, rotation = format_pose_block(p)
    assert position == "Camera position: [x=1.23m, y=-0.01m, z=2.00m]"
    assert rotation == "Camera rotation: [x=0.0°, y=0.0°, z=0.0°]"


def test_format_pose_block_yaw90():
    _, rotation = format_pose_block(pose(yaw=90))
    assert rotation == "Camera rotation: [x=0.0°, y=0.0°, z=90.0°]"


def test_rounding_idempotent():
    p = pose(yaw=33.333, pitch=-12.77, roll=4.005, t=(0.1234, -9.8765, 3.14159))
    position, rotation = format_pose_block(p)
    nums = [float(v) for v in re.findall(r"-?\d+\.\d+", position)]
    refmt = (
        f"Camera position: [x={round_decimal(nums[0], 2)}m, "
        f"y={round_decimal(nums[1], 2)}m, z={round_decimal(nums[2], 2)}m]"
    )
    assert refmt == position


# -- resize ------------------------------------------------------------------------


def test_resize_exact_halving():
    img = np.zeros((672, 1344, 3), np.uint8)
    out = resize_image(img, 336)
    assert out.shape == (336, 672, 3)


def test_resize_passthrough():
    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, (336, 100, 3), dtype=np.uint8)
    out = resize_image(img, 336)
    assert out is img


def test_resize_constant_invariance():
    img = np.full((50, 100, 3), 77, np.uint8)
    up = resize_image(img, 336)
    assert up.shape == (336, 672, 3)
    assert np.all(up == 77)
    down = resize_image(up, 50)
    assert np.all(down == 77)


def test_resize_min_width_one():
    img = np.zeros((500, 1, 3), np.uint8)
    assert resize_image(img, 10).shape == (10, 1, 3)


# -- bundles -----------------------------------------------------------------------


@pytest.fixture(scope="module")
def golden_scene_dirs(tmp_path_factory):
    base = tmp_path_factory.mktemp("golden-scenes")
    return {name: builder(base / name) for name, builder in GOLDEN_SCENES.items()}


def test_prompt_goldens_byte_identical(golden_scene_dirs):
    for name, manifest_path in golden_scene_dirs.items():
        scene = load_manifest(manifest_path)
        bundle = build_prompt(scene, scene.frame_ids, GOLDEN_QUERY)
        golden = (GOLDENS / f"prompt_{name}.json").read_text(encoding="utf-8")
        assert bundle_to_json(bundle) == golden, f"golden mismatch: {name}"


def test_default_annotation_verbatim_sentence():
    assert "Note that the user does not know the images that you have." in DEFAULT_ANNOTATION


def test_build_prompt_structure(golden_scene_dirs):
    scene = load_manifest(golden_scene_dirs["simple"])
    bundle = build_prompt(scene, [1, 0], "test?")  # shuffled kept
    assert bundle.preamble == PREAMBLE
    assert len(bundle.blocks) == 2
    # timestamp order regardless of kept order
    assert bundle.blocks[0].position_text.endswith("[x=0.00m, y=0.00m, z=0.00m]")
    assert bundle.blocks[1].position_text.endswith("[x=1.50m, y=-2.25m, z=0.75m]")
    assert bundle.query == "test?"


def test_build_prompt_role_prefix(golden_scene_dirs):
    scene = load_manifest(golden_scene_dirs["simple"])
    role = "You are an excellent home assistant system."
    bundle = build_prompt(scene, [0], "q?", role=role)
    assert bundle.preamble.startswith(role)
    assert bundle.preamble.endswith(PREAMBLE)


def test_build_prompt_no_pose(golden_scene_dirs):
    scene = load_manifest(golden_scene_dirs["simple"])
    bundle = build_prompt(scene, scene.frame_ids, "q?", include_pose=False)
    serialized = bundle_to_json(bundle)
    assert "Camera position" not in serialized
    assert "Camera rotation" not in serialized


def test_build_prompt_errors(golden_scene_dirs):
    scene = load_manifest(golden_scene_dirs["simple"])
    with pytest.raises(EmptyInput):
        build_prompt(scene, [], "q?")
    with pytest.raises(UnknownFrame):
        build_prompt(scene, [0, 77], "q?")
    with pytest.raises(EmptyInput):
        build_prompt(scene, [0], "")


def test_bundle_deterministic(golden_scene_dirs):
    scene = load_manifest(golden_scene_dirs["simple"])
    a = bundle_to_json(build_prompt(scene, scene.frame_ids, "q?"))
    b = bundle_to_json(build_prompt(scene, scene.frame_ids, "q?"))
    assert a == b


def test_bundle_dict_round_trip(golden_scene_dirs):
    scene = load_manifest(golden_scene_dirs["gimbal"])
    bundle = build_prompt(scene, scene.frame_ids, "q?")
    again = bundle_from_dict(bundle_to_dict(bundle))
    assert again == bundle
