"""Per-frame spatial statistics: back-projected point clouds, their mean and
covariance, spread (covariance determinant), image sharpness, and the fused
quality score used to rank frames during selection.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ImageTooSmall
from .scene import CameraIntrinsics, CameraPose, SceneManifest, load_color, load_depth

# Frames with fewer valid depth points than this carry unusable geometry and
# are ranked below everything else (quality -inf).
MIN_VALID_POINTS = 100

# cloud_stats cannot produce a trustworthy 3x3 covariance from fewer points.
MIN_STATS_POINTS = 4

# Rec.601 luma weights.
LUMA_WEIGHTS = (0.299, 0.587, 0.114)


@dataclass(frozen=True)
class PointCloudStats:
    mean: np.ndarray          # (3,) meters
    covariance: np.ndarray    # (3, 3) meters^2, population (1/N)
    point_count: int
    spread: float             # det(covariance), meters^6
    degenerate: bool


@dataclass(frozen=True)
class FrameFeatures:
    frame_id: int
    stats: PointCloudStats
    sharpness: float
    quality: float
    embedding_ref: int


def back_project(depth: np.ndarray, intr: CameraIntrinsics, stride: int = 1) -> np.ndarray:
    """Lift valid depth pixels to camera-frame 3D points.

    Samples pixels (u, v) with u = 0 (mod stride) and v = 0 (mod stride);
    each valid pixel yields ((u-cx)*d/fx, (v-cy)*d/fy, d). Returns an (N, 3)
    array; N may be zero.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    d = depth[::stride, ::stride]
    v, u = np.nonzero(np.isfinite(d))
    z = d[v, u]
    u = u.astype(np.float64) * stride
    v = v.astype(np.float64) * stride
    x = (u - intr.cx) * z / intr.fx
    y = (v - intr.cy) * z / intr.fy
    return np.column_stack([x, y, z])


def project(points: np.ndarray, intr: CameraIntrinsics) -> np.ndarray:
    """Project camera-frame points through K; returns (N, 2) pixel coordinates."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    u = pts[:, 0] * intr.fx / pts[:, 2] + intr.cx
    v = pts[:, 1] * intr.fy / pts[:, 2] + intr.cy
    return np.column_stack([u, v])


def to_world(points: np.ndarray, pose: CameraPose) -> np.ndarray:
    """Map camera-frame points into world coordinates via the camera pose."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    return pts @ pose.rotation.T + pose.translation


def cloud_stats(points: np.ndarray) -> PointCloudStats:
    """Mean, population covariance, and spread of a point set.

    Fewer than MIN_STATS_POINTS points flags the result degenerate with
    spread 0; the mean/covariance of whatever points exist are still reported.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    n = pts.shape[0]
    if n == 0:
        return PointCloudStats(
            mean=np.zeros(3), covariance=np.zeros((3, 3)),
            point_count=0, spread=0.0, degenerate=True,
        )
    mean = pts.mean(axis=0)
    centered = pts - mean
    cov = centered.T @ centered / n
    cov = (cov + cov.T) / 2.0
    degenerate = n < MIN_STATS_POINTS
    spread = 0.0 if degenerate else float(np.linalg.det(cov))
    return PointCloudStats(
        mean=mean, covariance=cov, point_count=n, spread=spread, degenerate=degenerate,
    )


def luma(image: np.ndarray) -> np.ndarray:
    """Rec.601 luma of an 8-bit RGB image, as float64 in [0, 255]."""
    img = np.asarray(image, dtype=np.float64)
    r, g, b = LUMA_WEIGHTS
    return r * img[..., 0] + g * img[..., 1] + b * img[..., 2]


def laplacian_variance(image: np.ndarray) -> float:
    """Sharpness: population variance of the 4-neighbour Laplacian of the luma.

    Interior pixels only; kernel [[0,1,0],[1,-4,1],[0,1,0]].
    """
    if image.shape[0] < 3 or image.shape[1] < 3:
        raise ImageTooSmall(f"image is {image.shape[1]}x{image.shape[0]}, need at least 3x3")
    lum = luma(image)
    resp = (
        lum[:-2, 1:-1] + lum[2:, 1:-1] + lum[1:-1, :-2] + lum[1:-1, 2:]
        - 4.0 * lum[1:-1, 1:-1]
    )
    return float(resp.var())


def stride_for(valid_pixels: int, max_points: int) -> int:
    """Subsampling stride keeping at most ~max_points valid pixels."""
    if valid_pixels <= max_points:
        return 1
    return math.ceil(math.sqrt(valid_pixels / max_points))


def compute_frame_features(scene: SceneManifest, frame_id: int, config) -> FrameFeatures:
    """Full per-frame feature chain: depth -> points -> world -> stats, plus
    sharpness and the quality score spread + beta * sharpness.

    Frames with fewer than MIN_VALID_POINTS valid depth pixels get quality
    -inf and degenerate stats so the selector prunes them first.
    """
    record = scene.frame(frame_id)
    intr = scene.intrinsics
    depth = load_depth(record, intr, scene.depth_format, scene.max_depth_m)
    color = load_color(record)

    valid = int(np.isfinite(depth).sum())
    stride = stride_for(valid, config.max_points)
    points = back_project(depth, intr, stride)
    stats = cloud_stats(to_world(points, record.pose))
    if valid < MIN_VALID_POINTS:
        stats = PointCloudStats(
            mean=stats.mean, covariance=stats.covariance,
            point_count=stats.point_count, spread=stats.spread, degenerate=True,
        )
    sharpness = laplacian_variance(color)
    quality = -math.inf if stats.degenerate else stats.spread + config.beta * sharpness
    embedding_ref = scene.frame_ids.index(frame_id)
    return FrameFeatures(
        frame_id=frame_id, stats=stats, sharpness=sharpness,
        quality=quality, embedding_ref=embedding_ref,
    )


def compute_scene_features(scene: SceneManifest, config, jobs: int = 1) -> list[FrameFeatures]:
    """Features for every frame, in manifest (timestamp) order. Per-frame
    work is pure, so jobs > 1 fans it out over threads without changing any
    result.

    With config.normalize_quality, spread and sharpness are z-scored across
    the scene before fusing, which puts the two terms on comparable scales.
    """
    if jobs > 1 and len(scene.frames) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            feats = list(pool.map(
                lambda fid: compute_frame_features(scene, fid, config), scene.frame_ids
            ))
    else:
        feats = [compute_frame_features(scene, fid, config) for fid in scene.frame_ids]
    if not config.normalize_quality:
        return feats

    usable = [f for f in feats if not f.stats.degenerate]
    if len(usable) < 2:
        return feats
    spreads = np.array([f.stats.spread for f in usable])
    sharps = np.array([f.sharpness for f in usable])

    def zscore(x: np.ndarray) -> np.ndarray:
        sd = x.std()
        return np.zeros_like(x) if sd == 0 else (x - x.mean()) / sd

    zq = dict(zip((f.frame_id for f in usable), zscore(spreads) + config.beta * zscore(sharps)))
    return [
        f if f.stats.degenerate else FrameFeatures(
            frame_id=f.frame_id, stats=f.stats, sharpness=f.sharpness,
            quality=float(zq[f.frame_id]), embedding_ref=f.embedding_ref,
        )
        for f in feats
    ]


def save_feature_cache(features: list[FrameFeatures], path) -> None:
    """Write features.json; floats serialize at full round-trip precision."""
    doc = {
        "frames": [
            {
                "frame_id": f.frame_id,
                "mean": [float(v) for v in f.stats.mean],
                "covariance": [float(v) for v in f.stats.covariance.reshape(-1)],
                "point_count": f.stats.point_count,
                "degenerate": f.stats.degenerate,
                "sharpness": f.sharpness,
                "quality": f.quality,
                "embedding_ref": f.embedding_ref,
            }
            for f in features
        ]
    }
    Path(path).write_text(
        json.dumps(doc, indent=2, allow_nan=True) + "\n", encoding="utf-8"
    )


def load_feature_cache(path) -> list[FrameFeatures]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    out = []
    for fr in doc["frames"]:
        stats = PointCloudStats(
            mean=np.array(fr["mean"], dtype=np.float64),
            covariance=np.array(fr["covariance"], dtype=np.float64).reshape(3, 3),
            point_count=int(fr["point_count"]),
            spread=float(np.linalg.det(np.array(fr["covariance"]).reshape(3, 3)))
            if not fr["degenerate"] else 0.0,
            degenerate=bool(fr["degenerate"]),
        )
        out.append(
            FrameFeatures(
                frame_id=int(fr["frame_id"]), stats=stats,
                sharpness=float(fr["sharpness"]), quality=float(fr["quality"]),
                embedding_ref=int(fr["embedding_ref"]),
            )
        )
    return out
