"""Scene loading: manifest, depth maps, color images.

A scene lives in one directory with a self-describing ``scene.json`` manifest;
relative paths inside the manifest resolve against the manifest's directory so
scenes stay relocatable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import (
    DimensionMismatch,
    MalformedManifest,
    MissingFile,
    NonRigidPose,
    UnsupportedColorEncoding,
    UnsupportedDepthEncoding,
)

DEPTH_FORMATS = ("png16", "raw16le")
DEFAULT_MAX_DEPTH_M = 10.0

# Depth maps use NaN for pixels with no valid measurement (stored zeros and
# readings beyond max_depth_m).
INVALID_DEPTH = float("nan")


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    depth_scale: float

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise MalformedManifest("intrinsics: focal lengths must be positive")
        if not (0 <= self.cx < self.width) or not (0 <= self.cy < self.height):
            raise MalformedManifest("intrinsics: principal point outside image")
        if self.depth_scale <= 0:
            raise MalformedManifest("intrinsics.depth_scale: must be positive")

    def matrix(self) -> np.ndarray:
        """3x3 pinhole matrix K."""
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )


ORTHOGONALITY_TOL = 1e-4
DETERMINANT_TOL = 1e-4


@dataclass(frozen=True)
class CameraPose:
    """4x4 row-major camera-to-world rigid transform, translation in meters."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.shape != (4, 4):
            raise NonRigidPose(f"pose matrix has shape {m.shape}, expected (4, 4)")
        object.__setattr__(self, "matrix", m)
        if not np.array_equal(m[3], [0.0, 0.0, 0.0, 1.0]):
            raise NonRigidPose(f"pose bottom row is {m[3].tolist()}, expected (0, 0, 0, 1)")
        r = m[:3, :3]
        if np.max(np.abs(r.T @ r - np.eye(3))) > ORTHOGONALITY_TOL:
            raise NonRigidPose("rotation block is not orthogonal")
        if abs(np.linalg.det(r) - 1.0) > DETERMINANT_TOL:
            raise NonRigidPose(f"rotation determinant {np.linalg.det(r):.6f} != +1")

    @property
    def rotation(self) -> np.ndarray:
        return self.matrix[:3, :3]

    @property
    def translation(self) -> np.ndarray:
        return self.matrix[:3, 3]


@dataclass(frozen=True)
class FrameRecord:
    frame_id: int
    color_ref: Path
    depth_ref: Path
    pose: CameraPose
    timestamp: float


@dataclass(frozen=True)
class SceneManifest:
    scene_id: str
    intrinsics: CameraIntrinsics
    frames: tuple[FrameRecord, ...]
    depth_format: str = "png16"
    max_depth_m: float = DEFAULT_MAX_DEPTH_M

    def frame(self, frame_id: int) -> FrameRecord:
        for rec in self.frames:
            if rec.frame_id == frame_id:
                return rec
        raise KeyError(f"frame {frame_id} not in scene {self.scene_id}")

    @property
    def frame_ids(self) -> list[int]:
        return [rec.frame_id for rec in self.frames]


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise MalformedManifest(f"{where}.{key}: missing")
    return obj[key]


def load_manifest(path) -> SceneManifest:
    """Load and validate a scene manifest.

    Raises MalformedManifest on schema violations, NonRigidPose when a pose
    fails the rigid-transform checks, MissingFile when a referenced raster is
    absent.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise MissingFile(str(path))
    except json.JSONDecodeError as e:
        raise MalformedManifest(f"{path}: not valid JSON ({e})")
    if not isinstance(raw, dict):
        raise MalformedManifest("manifest: top level must be an object")

    base = path.parent
    scene_id = _require(raw, "scene_id", "manifest")
    if not isinstance(scene_id, str) or not scene_id:
        raise MalformedManifest("manifest.scene_id: must be a non-empty string")

    depth_format = raw.get("depth_format", "png16")
    if depth_format not in DEPTH_FORMATS:
        raise MalformedManifest(
            f"manifest.depth_format: {depth_format!r} not one of {DEPTH_FORMATS}"
        )
    max_depth_m = float(raw.get("max_depth_m", DEFAULT_MAX_DEPTH_M))
    if max_depth_m <= 0:
        raise MalformedManifest("manifest.max_depth_m: must be positive")

    intr_raw = _require(raw, "intrinsics", "manifest")
    try:
        intrinsics = CameraIntrinsics(
            fx=float(_require(intr_raw, "fx", "intrinsics")),
            fy=float(_require(intr_raw, "fy", "intrinsics")),
            cx=float(_require(intr_raw, "cx", "intrinsics")),
            cy=float(_require(intr_raw, "cy", "intrinsics")),
            width=int(_require(intr_raw, "width", "intrinsics")),
            height=int(_require(intr_raw, "height", "intrinsics")),
            depth_scale=float(_require(intr_raw, "depth_scale", "intrinsics")),
        )
    except (TypeError, ValueError) as e:
        raise MalformedManifest(f"intrinsics: {e}")

    frames_raw = _require(raw, "frames", "manifest")
    if not isinstance(frames_raw, list) or not frames_raw:
        raise MalformedManifest("manifest.frames: must be a non-empty list")

    frames = []
    seen_ids = set()
    prev_ts = None
    for k, fr in enumerate(frames_raw):
        where = f"frames[{k}]"
        frame_id = _require(fr, "frame_id", where)
        if not isinstance(frame_id, int) or frame_id < 0:
            raise MalformedManifest(f"{where}.frame_id: must be a non-negative integer")
        if frame_id in seen_ids:
            raise MalformedManifest(f"{where}.frame_id: duplicate frame_id {frame_id}")
        seen_ids.add(frame_id)

        timestamp = float(_require(fr, "timestamp", where))
        if prev_ts is not None and timestamp < prev_ts:
            raise MalformedManifest(
                f"{where}.timestamp: {timestamp} decreases (previous {prev_ts})"
            )
        prev_ts = timestamp

        pose_raw = _require(fr, "pose", where)
        if not isinstance(pose_raw, list) or len(pose_raw) != 16:
            raise MalformedManifest(f"{where}.pose: must be a list of 16 numbers")
        try:
            pose = CameraPose(np.array(pose_raw, dtype=np.float64).reshape(4, 4))
        except NonRigidPose as e:
            raise NonRigidPose(f"frame {frame_id}: {e}")

        color_ref = base / _require(fr, "color", where)
        depth_ref = base / _require(fr, "depth", where)
        if not color_ref.is_file():
            raise MissingFile(f"frame {frame_id}: color file {color_ref}")
        if not depth_ref.is_file():
            raise MissingFile(f"frame {frame_id}: depth file {depth_ref}")

        frames.append(
            FrameRecord(
                frame_id=frame_id,
                color_ref=color_ref,
                depth_ref=depth_ref,
                pose=pose,
                timestamp=timestamp,
            )
        )

    return SceneManifest(
        scene_id=scene_id,
        intrinsics=intrinsics,
        frames=tuple(frames),
        depth_format=depth_format,
        max_depth_m=max_depth_m,
    )


def save_manifest(scene: SceneManifest, path) -> None:
    """Write a manifest in the documented schema; raster paths become relative
    where possible, absolute otherwise."""
    path = Path(path)
    base = path.parent

    def ref(p) -> str:
        p = Path(p)
        try:
            return str(p.relative_to(base))
        except ValueError:
            return str(p.resolve())
    intr = scene.intrinsics
    doc = {
        "scene_id": scene.scene_id,
        "depth_format": scene.depth_format,
        "max_depth_m": scene.max_depth_m,
        "intrinsics": {
            "fx": intr.fx,
            "fy": intr.fy,
            "cx": intr.cx,
            "cy": intr.cy,
            "width": intr.width,
            "height": intr.height,
            "depth_scale": intr.depth_scale,
        },
        "frames": [
            {
                "frame_id": rec.frame_id,
                "color": ref(rec.color_ref),
                "depth": ref(rec.depth_ref),
                "timestamp": rec.timestamp,
                "pose": [float(v) for v in rec.pose.matrix.reshape(-1)],
            }
            for rec in scene.frames
        ],
    }
    path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def load_depth(record: FrameRecord, intr: CameraIntrinsics,
               depth_format: str = "png16",
               max_depth_m: float = DEFAULT_MAX_DEPTH_M) -> np.ndarray:
    """Decode a depth map to meters (float64, height x width).

    Stored zeros and readings beyond max_depth_m become NaN.
    """
    if depth_format == "png16":
        try:
            with Image.open(record.depth_ref) as img:
                img.load()
                if img.mode not in ("I;16", "I;16B", "I"):
                    raise UnsupportedDepthEncoding(
                        f"{record.depth_ref}: mode {img.mode}, expected 16-bit grayscale"
                    )
                stored = np.asarray(img, dtype=np.uint32)
        except UnsupportedDepthEncoding:
            raise
        except Exception as e:
            raise UnsupportedDepthEncoding(f"{record.depth_ref}: {e}")
        if stored.ndim != 2:
            raise UnsupportedDepthEncoding(
                f"{record.depth_ref}: {stored.ndim} channels, expected single-channel"
            )
    elif depth_format == "raw16le":
        data = Path(record.depth_ref).read_bytes()
        expected = intr.width * intr.height * 2
        if len(data) != expected:
            raise DimensionMismatch(
                f"{record.depth_ref}: {len(data)} bytes, expected {expected} "
                f"for {intr.width}x{intr.height} raw16le"
            )
        stored = np.frombuffer(data, dtype="<u2").reshape(intr.height, intr.width)
    else:
        raise UnsupportedDepthEncoding(f"unknown depth_format {depth_format!r}")

    if stored.shape != (intr.height, intr.width):
        raise DimensionMismatch(
            f"{record.depth_ref}: depth is {stored.shape[1]}x{stored.shape[0]}, "
            f"intrinsics declare {intr.width}x{intr.height}"
        )

    depth = stored.astype(np.float64) * intr.depth_scale
    depth[stored == 0] = INVALID_DEPTH
    depth[depth > max_depth_m] = INVALID_DEPTH
    return depth


def load_color(record: FrameRecord) -> np.ndarray:
    """Decode a color image to uint8 (height x width x 3)."""
    try:
        with Image.open(record.color_ref) as img:
            img.load()
            if img.mode != "RGB":
                raise UnsupportedColorEncoding(
                    f"{record.color_ref}: mode {img.mode}, expected 8-bit RGB"
                )
            return np.asarray(img, dtype=np.uint8)
    except UnsupportedColorEncoding:
        raise
    except Exception as e:
        raise UnsupportedColorEncoding(f"{record.color_ref}: {e}")
