"""Seeded synthetic RGB-D trajectories for desk-scale testing.

Scenes are a rectangular room (axis-aligned box centered at the origin) seen
from poses on a parametric path. Depth comes from analytic ray-box
intersection, color from a procedural checker on the hit walls, and
embeddings from a smooth function of the camera pose, so semantically similar
views really are nearby views. Identical specs produce byte-identical output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, ImageFilter

from .embeddings import save_embeddings
from .features import back_project, stride_for, to_world
from .scene import (
    CameraIntrinsics,
    CameraPose,
    FrameRecord,
    SceneManifest,
    load_depth,
    save_manifest,
)

PATH_KINDS = ("circle", "line", "random-walk")

COVERAGE_VOXEL_M = 0.25

FPS = 30.0


@dataclass(frozen=True)
class SyntheticSpec:
    seed: int
    path_kind: str = "random-walk"
    frame_count: int = 100
    room: tuple[float, float, float] = (6.0, 5.0, 3.0)
    embedding_dim: int = 32
    embedding_model: str = "pose-bucket"
    width: int = 80
    height: int = 60

    def __post_init__(self):
        if self.path_kind not in PATH_KINDS:
            raise ValueError(f"path_kind must be one of {PATH_KINDS}")
        if self.frame_count < 2:
            raise ValueError("frame_count must be >= 2")
        if any(e <= 0 for e in self.room):
            raise ValueError("room extents must be positive")
        if self.embedding_dim < 1:
            raise ValueError("embedding_dim must be >= 1")


def _look_at(eye: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Camera-to-world pose for a pinhole camera (x right, y down, z forward)
    at `eye` looking toward `target`, world z up."""
    forward = target - eye
    forward = forward / np.linalg.norm(forward)
    up = np.array([0.0, 0.0, 1.0])
    right = np.cross(forward, up)
    norm = np.linalg.norm(right)
    if norm < 1e-9:  # looking straight up/down; pick an arbitrary right
        right = np.array([1.0, 0.0, 0.0])
    else:
        right = right / norm
    down = np.cross(forward, right)
    m = np.eye(4)
    m[:3, 0] = right
    m[:3, 1] = down
    m[:3, 2] = forward
    m[:3, 3] = eye
    return m


def _path_poses(spec: SyntheticSpec, rng: np.random.Generator) -> list[np.ndarray]:
    ex, ey, ez = spec.room
    n = spec.frame_count
    center = np.zeros(3)
    poses = []

    if spec.path_kind == "circle":
        radius = 0.35 * min(ex, ey)
        for k in range(n):
            angle = 2.0 * math.pi * k / n
            eye = np.array([radius * math.cos(angle), radius * math.sin(angle), 0.0])
            poses.append(_look_at(eye, center))
    elif spec.path_kind == "line":
        xs = np.linspace(-0.35 * ex, 0.35 * ex, n)
        for k in range(n):
            eye = np.array([xs[k], -0.2 * ey, 0.0])
            target = np.array([xs[k] * 0.5, 0.4 * ey, 0.0])
            poses.append(_look_at(eye, target))
    else:  # random-walk with dwell segments, so time-uniform sampling oversamples pauses
        bounds = 0.3 * np.array([ex, ey, ez])
        pos = rng.uniform(-0.5, 0.5, 3) * bounds
        yaw = rng.uniform(0.0, 2.0 * math.pi)
        dwell = 0
        for _ in range(n):
            if dwell > 0:
                dwell -= 1
                step = rng.normal(0.0, 0.01, 3)
                yaw += rng.normal(0.0, 0.02)
            else:
                if rng.random() < 0.15:
                    dwell = int(rng.integers(5, 15))
                step = rng.normal(0.0, 0.25, 3) * np.array([1.0, 1.0, 0.2])
                yaw += rng.normal(0.0, 0.6)
            pos = np.clip(pos + step, -bounds, bounds)
            pitch = rng.normal(0.0, 0.1)
            forward = np.array(
                [math.cos(yaw) * math.cos(pitch), math.sin(yaw) * math.cos(pitch), math.sin(pitch)]
            )
            poses.append(_look_at(pos, pos + forward))
    return poses


def _render_frame(
    pose: np.ndarray,
    intr: CameraIntrinsics,
    room: tuple[float, float, float],
    face_shades: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Analytic ray-box rendering: returns (depth_m, color_u8)."""
    half = np.array(room) / 2.0
    r = pose[:3, :3]
    origin = pose[:3, 3]

    u = np.arange(intr.width, dtype=np.float64)
    v = np.arange(intr.height, dtype=np.float64)
    uu, vv = np.meshgrid(u, v)
    dirs_cam = np.stack(
        [(uu - intr.cx) / intr.fx, (vv - intr.cy) / intr.fy, np.ones_like(uu)], axis=-1
    )
    dirs = dirs_cam @ r.T  # (H, W, 3) world-frame ray directions

    # exit parameter of each ray from inside the box (slab method)
    with np.errstate(divide="ignore", invalid="ignore"):
        t_lo = (-half - origin) / dirs
        t_hi = (half - origin) / dirs
    t_far = np.where(np.isnan(t_lo) | np.isnan(t_hi), np.inf, np.maximum(t_lo, t_hi))
    exit_axis = np.argmin(t_far, axis=-1)
    t_exit = np.min(t_far, axis=-1)

    depth = t_exit  # dirs_cam z-component is 1, so camera-frame z == t
    hit = origin + dirs * t_exit[..., None]

    # checkerboard over the two in-face axes, shaded per face
    axis_a = (exit_axis + 1) % 3
    axis_b = (exit_axis + 2) % 3
    coord_a = np.take_along_axis(hit, axis_a[..., None], axis=-1)[..., 0]
    coord_b = np.take_along_axis(hit, axis_b[..., None], axis=-1)[..., 0]
    checker = (np.floor(coord_a / 0.5) + np.floor(coord_b / 0.5)).astype(np.int64) % 2
    side = (np.take_along_axis(dirs, exit_axis[..., None], axis=-1)[..., 0] > 0).astype(np.int64)
    face = exit_axis * 2 + side

    color = np.empty((intr.height, intr.width, 3), dtype=np.uint8)
    for ch in range(3):
        base = face_shades[face, ch]
        color[..., ch] = np.clip(base + checker * 55, 0, 255).astype(np.uint8)
    return depth, color


def generate_scene(spec: SyntheticSpec, out_dir) -> SceneManifest:
    """Emit a complete scene directory: manifest, depth/color rasters, and the
    embedding sidecar pair."""
    out = Path(out_dir)
    (out / "color").mkdir(parents=True, exist_ok=True)
    (out / "depth").mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(spec.seed)
    intr = CameraIntrinsics(
        fx=0.8 * spec.width, fy=0.8 * spec.width,
        cx=spec.width / 2.0, cy=spec.height / 2.0,
        width=spec.width, height=spec.height, depth_scale=0.001,
    )
    face_shades = rng.integers(60, 180, size=(6, 3))
    poses = _path_poses(spec, rng)
    blurred = rng.random(spec.frame_count) < 0.2

    records = []
    view_dirs = []
    positions = []
    for k, pose_mat in enumerate(poses):
        depth, color = _render_frame(pose_mat, intr, spec.room, face_shades)

        if blurred[k]:
            img = Image.fromarray(color).filter(ImageFilter.GaussianBlur(radius=2.0))
            color = np.asarray(img)

        stored = np.round(depth / intr.depth_scale).astype(np.uint16)
        depth_path = out / "depth" / f"{k:04d}.png"
        Image.fromarray(stored).save(depth_path)
        color_path = out / "color" / f"{k:04d}.png"
        Image.fromarray(color).save(color_path)

        records.append(
            FrameRecord(
                frame_id=k,
                color_ref=color_path,
                depth_ref=depth_path,
                pose=CameraPose(pose_mat),
                timestamp=k / FPS,
            )
        )
        view_dirs.append(pose_mat[:3, 2])
        positions.append(pose_mat[:3, 3])

    scene = SceneManifest(
        scene_id=f"synth-{spec.path_kind}-{spec.seed}",
        intrinsics=intr,
        frames=tuple(records),
        depth_format="png16",
        max_depth_m=float(math.ceil(np.linalg.norm(spec.room))),
    )
    save_manifest(scene, out / "scene.json")

    embeddings = _pose_bucket_embeddings(
        np.array(view_dirs), np.array(positions), np.array(spec.room), spec.embedding_dim, rng
    )
    save_embeddings(out / "embeddings.json", scene.frame_ids, embeddings, spec.embedding_model)
    return scene


def _pose_bucket_embeddings(
    view_dirs: np.ndarray, positions: np.ndarray, room: np.ndarray,
    dim: int, rng: np.random.Generator,
) -> np.ndarray:
    """Smooth pose-dependent embeddings: random Fourier features of the
    viewing direction and normalized position, fixed per scene."""
    g = np.concatenate([view_dirs, positions / room], axis=1)  # (N, 6)
    weights = rng.normal(0.0, 1.5, size=(dim, 6))
    phases = rng.uniform(0.0, 2.0 * math.pi, size=dim)
    return np.cos(g @ weights.T + phases)


def coverage_score(
    scene: SceneManifest,
    kept: list[int],
    voxel_m: float = COVERAGE_VOXEL_M,
    room_box: tuple[np.ndarray, np.ndarray] | None = None,
    max_points: int = 4096,
) -> float:
    """Fraction of the room's voxel grid observed by at least one kept
    frame's back-projected points.

    Without an explicit room box, the box is the bounding box of every
    frame's points (fixed per scene, independent of `kept`).
    """
    if not kept:
        raise ValueError("kept must be non-empty")

    clouds = {}
    for record in scene.frames:
        depth = load_depth(record, scene.intrinsics, scene.depth_format, scene.max_depth_m)
        stride = stride_for(int(np.isfinite(depth).sum()), max_points)
        pts = back_project(depth, scene.intrinsics, stride)
        clouds[record.frame_id] = to_world(pts, record.pose)

    if room_box is None:
        everything = np.vstack([c for c in clouds.values() if len(c)])
        lo = everything.min(axis=0)
        hi = everything.max(axis=0)
    else:
        lo, hi = np.asarray(room_box[0], dtype=float), np.asarray(room_box[1], dtype=float)

    dims = np.maximum(1, np.ceil((hi - lo) / voxel_m)).astype(int)
    seen = np.zeros(dims, dtype=bool)
    for fid in kept:
        pts = clouds[fid]
        if not len(pts):
            continue
        idx = np.floor((pts - lo) / voxel_m).astype(int)
        idx = np.clip(idx, 0, dims - 1)
        inside = np.all((pts >= lo - 1e-9) & (pts <= hi + 1e-9), axis=1)
        idx = idx[inside]
        seen[idx[:, 0], idx[:, 1], idx[:, 2]] = True
    return float(seen.sum() / seen.size)
