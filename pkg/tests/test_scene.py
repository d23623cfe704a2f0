import json

import numpy as np
import pytest
from PIL import Image

from scene_fixtures import IDENTITY_POSE, pose_matrix, write_png16, write_scene
from spatialprompt.errors import (
    DimensionMismatch,
    MalformedManifest,
    MissingFile,
    NonRigidPose,
    UnsupportedColorEncoding,
    UnsupportedDepthEncoding,
)
from spatialprompt.scene import (
    CameraIntrinsics,
    CameraPose,
    load_color,
    load_depth,
    load_manifest,
    save_manifest,
)


def test_valid_three_frame_manifest(tmp_path):
    path = write_scene(tmp_path, [IDENTITY_POSE] * 3)
    scene = load_manifest(path)
    assert scene.frame_ids == [0, 1, 2]
    assert scene.scene_id == "fixture"
    assert scene.intrinsics.width == 16


def test_bad_bottom_row_is_nonrigid(tmp_path):
    pose = list(IDENTITY_POSE)
    pose[15] = 2  # bottom row (0, 0, 0, 2)
    path = write_scene(tmp_path, [IDENTITY_POSE, pose])
    with pytest.raises(NonRigidPose, match="frame 1"):
        load_manifest(path)


def test_non_orthogonal_rotation_is_nonrigid(tmp_path):
    pose = list(IDENTITY_POSE)
    pose[0] = 1.2
    path = write_scene(tmp_path, [pose])
    with pytest.raises(NonRigidPose):
        load_manifest(path)


def test_reflection_is_nonrigid(tmp_path):
    pose = list(IDENTITY_POSE)
    pose[0] = -1.0  # det = -1
    path = write_scene(tmp_path, [pose])
    with pytest.raises(NonRigidPose):
        load_manifest(path)


def test_duplicate_frame_id_is_malformed(tmp_path):
    path = write_scene(tmp_path, [IDENTITY_POSE] * 3, frame_ids=[5, 5, 6])
    with pytest.raises(MalformedManifest, match="duplicate"):
        load_manifest(path)


def test_decreasing_timestamp_is_malformed(tmp_path):
    path = write_scene(tmp_path, [IDENTITY_POSE] * 2, timestamps=[1.0, 0.5])
    with pytest.raises(MalformedManifest, match="timestamp"):
        load_manifest(path)


def test_equal_timestamps_allowed(tmp_path):
    path = write_scene(tmp_path, [IDENTITY_POSE] * 2, timestamps=[1.0, 1.0])
    assert len(load_manifest(path).frames) == 2


def test_missing_color_file(tmp_path):
    path = write_scene(tmp_path, [IDENTITY_POSE])
    (tmp_path / "color_0000.png").unlink()
    with pytest.raises(MissingFile, match="color"):
        load_manifest(path)


def test_bad_depth_format_rejected(tmp_path):
    path = write_scene(tmp_path, [IDENTITY_POSE])
    doc = json.loads(path.read_text())
    doc["depth_format"] = "exr"
    path.write_text(json.dumps(doc))
    with pytest.raises(MalformedManifest, match="depth_format"):
        load_manifest(path)


def test_load_twice_is_identical(tmp_path):
    path = write_scene(tmp_path, [IDENTITY_POSE, pose_matrix(yaw_deg=30)])
    a = load_manifest(path)
    b = load_manifest(path)
    assert a.scene_id == b.scene_id
    assert a.intrinsics == b.intrinsics
    for fa, fb in zip(a.frames, b.frames):
        assert fa.frame_id == fb.frame_id
        assert fa.timestamp == fb.timestamp
        assert np.array_equal(fa.pose.matrix, fb.pose.matrix)


def test_manifest_round_trip(tmp_path):
    path = write_scene(tmp_path, [IDENTITY_POSE, pose_matrix(yaw_deg=45, translation=(1, 2, 3))])
    scene = load_manifest(path)
    out = tmp_path / "scene2.json"
    save_manifest(scene, out)
    again = load_manifest(out)
    assert again.scene_id == scene.scene_id
    assert again.intrinsics == scene.intrinsics
    assert again.max_depth_m == scene.max_depth_m
    assert again.depth_format == scene.depth_format
    for fa, fb in zip(scene.frames, again.frames):
        assert fa.frame_id == fb.frame_id
        assert fa.timestamp == fb.timestamp
        assert np.array_equal(fa.pose.matrix, fb.pose.matrix)


# -- depth ----------------------------------------------------------------------


def test_depth_scale(tmp_path):
    path = write_scene(tmp_path, [IDENTITY_POSE], depth_mm=1500)
    scene = load_manifest(path)
    depth = load_depth(scene.frames[0], scene.intrinsics)
    assert np.all(depth == 1.5)


def test_depth_zero_is_invalid_marker(tmp_path):
    path = write_scene(tmp_path, [IDENTITY_POSE])
    scene = load_manifest(path)
    arr = np.full((12, 16), 1200, np.uint16)
    arr[0, 0] = 0
    write_png16(scene.frames[0].depth_ref, arr)
    depth = load_depth(scene.frames[0], scene.intrinsics)
    assert np.isnan(depth[0, 0])
    assert depth[5, 5] == pytest.approx(1.2)


def test_depth_beyond_cutoff_is_invalid(tmp_path):
    path = write_scene(tmp_path, [IDENTITY_POSE], max_depth_m=2.0)
    scene = load_manifest(path)
    arr = np.full((12, 16), 1000, np.uint16)
    arr[3, 3] = 2500  # 2.5 m > 2.0 m cutoff
    write_png16(scene.frames[0].depth_ref, arr)
    depth = load_depth(scene.frames[0], scene.intrinsics, max_depth_m=scene.max_depth_m)
    assert np.isnan(depth[3, 3])
    assert depth[0, 0] == pytest.approx(1.0)


def test_depth_dimension_mismatch(tmp_path):
    path = write_scene(tmp_path, [IDENTITY_POSE])
    scene = load_manifest(path)
    write_png16(scene.frames[0].depth_ref, np.zeros((24, 32), np.uint16))
    with pytest.raises(DimensionMismatch):
        load_depth(scene.frames[0], scene.intrinsics)


def test_depth_8bit_png_rejected(tmp_path):
    path = write_scene(tmp_path, [IDENTITY_POSE])
    scene = load_manifest(path)
    Image.fromarray(np.zeros((12, 16), np.uint8)).save(scene.frames[0].depth_ref)
    with pytest.raises(UnsupportedDepthEncoding):
        load_depth(scene.frames[0], scene.intrinsics)


def test_depth_raw16le(tmp_path):
    path = write_scene(tmp_path, [IDENTITY_POSE], depth_format="raw16le", depth_mm=750)
    scene = load_manifest(path)
    depth = load_depth(scene.frames[0], scene.intrinsics, "raw16le")
    assert np.all(depth == 0.75)


def test_depth_raw16le_wrong_size(tmp_path):
    path = write_scene(tmp_path, [IDENTITY_POSE], depth_format="raw16le")
    scene = load_manifest(path)
    scene.frames[0].depth_ref.write_bytes(b"\x00" * 10)
    with pytest.raises(DimensionMismatch):
        load_depth(scene.frames[0], scene.intrinsics, "raw16le")


def test_depth_values_valid_or_positive(tmp_path):
    path = write_scene(tmp_path, [IDENTITY_POSE])
    scene = load_manifest(path)
    arr = np.arange(12 * 16, dtype=np.uint16).reshape(12, 16)  # includes a zero
    write_png16(scene.frames[0].depth_ref, arr)
    depth = load_depth(scene.frames[0], scene.intrinsics)
    finite = depth[np.isfinite(depth)]
    assert np.all(finite > 0)


# -- color ----------------------------------------------------------------------


def test_color_all_black(tmp_path):
    path = write_scene(tmp_path, [IDENTITY_POSE],
                       images=[np.zeros((12, 16, 3), np.uint8)])
    scene = load_manifest(path)
    img = load_color(scene.frames[0])
    assert img.shape == (12, 16, 3)
    assert not img.any()


def test_color_known_pixel(tmp_path):
    arr = np.zeros((12, 16, 3), np.uint8)
    arr[0, 0] = (255, 0, 0)
    path = write_scene(tmp_path, [IDENTITY_POSE], images=[arr])
    scene = load_manifest(path)
    assert tuple(load_color(scene.frames[0])[0, 0]) == (255, 0, 0)


def test_truncated_color_rejected(tmp_path):
    path = write_scene(tmp_path, [IDENTITY_POSE])
    scene = load_manifest(path)
    blob = scene.frames[0].color_ref.read_bytes()
    scene.frames[0].color_ref.write_bytes(blob[: len(blob) // 2])
    with pytest.raises(UnsupportedColorEncoding):
        load_color(scene.frames[0])


def test_grayscale_color_rejected(tmp_path):
    path = write_scene(tmp_path, [IDENTITY_POSE])
    scene = load_manifest(path)
    Image.fromarray(np.zeros((12, 16), np.uint8), mode="L").save(scene.frames[0].color_ref)
    with pytest.raises(UnsupportedColorEncoding):
        load_color(scene.frames[0])


# -- type validation -------------------------------------------------------------


def test_intrinsics_invariants():
    with pytest.raises(MalformedManifest):
        CameraIntrinsics(fx=-1, fy=1, cx=0, cy=0, width=4, height=4, depth_scale=0.001)
    with pytest.raises(MalformedManifest):
        CameraIntrinsics(fx=1, fy=1, cx=4, cy=0, width=4, height=4, depth_scale=0.001)
    with pytest.raises(MalformedManifest):
        CameraIntrinsics(fx=1, fy=1, cx=0, cy=0, width=4, height=4, depth_scale=0)


def test_pose_requires_4x4():
    with pytest.raises(NonRigidPose):
        CameraPose(np.eye(3))
