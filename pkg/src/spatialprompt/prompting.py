"""Prompt assembly: preamble, pose-annotated keyframe blocks, annotation,
and the user query, in that order.

Formatting is pinned for reproducibility: positions print with exactly two
decimals, rotations with one, both rounded half-away-from-zero on the decimal
rendering of the value, negative zero normalized away. Euler angles use the
intrinsic Z-Y-X (yaw-pitch-roll) convention.
"""

from __future__ import annotations

import base64
import io
import json
import math
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import EmptyInput, UnknownFrame
from .scene import CameraPose, SceneManifest, load_color

PREAMBLE = (
    "You will be provided with images captured from specific camera positions "
    "and orientations as follows:"
)

DEFAULT_ANNOTATION = (
    "Note that the user does not know the images that you have. Therefore, "
    "you should answer the question as concisely as possible without directly "
    'referring to the image with words such as "image" or "photo."'
)

ZERO_SHOT_ANNOTATION = "The answer should be a phrase or a single word."

DEFAULT_IMAGE_HEIGHT = 336
DEFAULT_JPEG_QUALITY = 90

GIMBAL_LOCK_EPS = 1e-7


@dataclass(frozen=True)
class EulerAngles:
    roll_deg: float
    pitch_deg: float
    yaw_deg: float


@dataclass(frozen=True)
class KeyframeBlock:
    position_text: str
    rotation_text: str
    image_payload: bytes
    media_type: str


@dataclass(frozen=True)
class PromptBundle:
    preamble: str
    blocks: tuple[KeyframeBlock, ...]
    annotation: str
    query: str


def _canonical_deg(angle_deg: float) -> float:
    """Map an angle in degrees into (-180, 180]."""
    a = math.fmod(angle_deg, 360.0)
    if a <= -180.0:
        a += 360.0
    elif a > 180.0:
        a -= 360.0
    return a


def rotation_to_euler(pose: CameraPose) -> EulerAngles:
    """Intrinsic Z-Y-X decomposition of the camera-to-world rotation:
    R = Rz(yaw) @ Ry(pitch) @ Rx(roll).

    At gimbal lock (|cos(pitch)| < 1e-7) roll is pinned to 0 and yaw absorbs
    the remaining free angle.
    """
    r = pose.rotation
    cos_pitch = math.hypot(r[0, 0], r[1, 0])
    pitch = math.atan2(-r[2, 0], cos_pitch)
    if cos_pitch < GIMBAL_LOCK_EPS:
        roll = 0.0
        yaw = math.atan2(-r[0, 1], r[1, 1])
    else:
        roll = math.atan2(r[2, 1], r[2, 2])
        yaw = math.atan2(r[1, 0], r[0, 0])
    return EulerAngles(
        roll_deg=_canonical_deg(math.degrees(roll)),
        pitch_deg=_canonical_deg(math.degrees(pitch)),
        yaw_deg=_canonical_deg(math.degrees(yaw)),
    )


def euler_to_matrix(angles: EulerAngles) -> np.ndarray:
    """Recompose Rz(yaw) @ Ry(pitch) @ Rx(roll)."""
    cr, sr = np.cos(np.radians(angles.roll_deg)), np.sin(np.radians(angles.roll_deg))
    cp, sp = np.cos(np.radians(angles.pitch_deg)), np.sin(np.radians(angles.pitch_deg))
    cy, sy = np.cos(np.radians(angles.yaw_deg)), np.sin(np.radians(angles.yaw_deg))
    rx = np.array([[1, 0, 0], [0, cr, -sr], [0, sr, cr]])
    ry = np.array([[cp, 0, sp], [0, 1, 0], [-sp, 0, cp]])
    rz = np.array([[cy, -sy, 0], [sy, cy, 0], [0, 0, 1]])
    return rz @ ry @ rx


def round_decimal(value: float, places: int) -> str:
    """Half-away-from-zero rounding of the decimal rendering of a float,
    with negative zero normalized to plain zero."""
    quantum = Decimal(1).scaleb(-places)
    text = str(Decimal(repr(float(value))).quantize(quantum, rounding=ROUND_HALF_UP))
    if text.startswith("-") and float(text) == 0.0:
        text = text[1:]
    return text


def format_pose_block(pose: CameraPose) -> tuple[str, str]:
    """Position and rotation lines for a keyframe block."""
    x, y, z = pose.translation
    position = (
        f"Camera position: [x={round_decimal(x, 2)}m, "
        f"y={round_decimal(y, 2)}m, z={round_decimal(z, 2)}m]"
    )
    e = rotation_to_euler(pose)
    rotation = (
        f"Camera rotation: [x={round_decimal(e.roll_deg, 1)}°, "
        f"y={round_decimal(e.pitch_deg, 1)}°, "
        f"z={round_decimal(e.yaw_deg, 1)}°]"
    )
    return position, rotation


def resize_image(image: np.ndarray, target_height: int) -> np.ndarray:
    """Scale to the target height, preserving aspect ratio (bilinear).

    Images already at the target height pass through unchanged.
    """
    h, w = image.shape[:2]
    if h == target_height:
        return image
    new_w = max(1, round(w * target_height / h))
    img = Image.fromarray(image)
    return np.asarray(img.resize((new_w, target_height), Image.BILINEAR))


def encode_jpeg(image: np.ndarray, quality: int = DEFAULT_JPEG_QUALITY) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(image).save(buf, format="JPEG", quality=quality)
    return buf.getvalue()


def build_blocks(
    scene: SceneManifest,
    kept: list[int],
    *,
    include_pose: bool = True,
    target_height: int = DEFAULT_IMAGE_HEIGHT,
    jpeg_quality: int = DEFAULT_JPEG_QUALITY,
) -> tuple[KeyframeBlock, ...]:
    """Keyframe blocks for the kept frames, in the scene's timestamp order
    regardless of the order ids arrive in. Query-independent, so callers
    evaluating many questions on one scene can reuse the result."""
    if not kept:
        raise EmptyInput("no keyframes to build a prompt from")
    kept_set = set(kept)
    unknown = kept_set - set(scene.frame_ids)
    if unknown:
        raise UnknownFrame(f"frames {sorted(unknown)} not in scene {scene.scene_id}")

    blocks = []
    for record in scene.frames:
        if record.frame_id not in kept_set:
            continue
        if include_pose:
            position, rotation = format_pose_block(record.pose)
        else:
            position, rotation = "", ""
        image = resize_image(load_color(record), target_height)
        blocks.append(
            KeyframeBlock(
                position_text=position,
                rotation_text=rotation,
                image_payload=encode_jpeg(image, jpeg_quality),
                media_type="image/jpeg",
            )
        )
    return tuple(blocks)


def assemble_bundle(
    blocks: tuple[KeyframeBlock, ...],
    query: str,
    annotation: str = DEFAULT_ANNOTATION,
    role: str | None = None,
) -> PromptBundle:
    if not query:
        raise EmptyInput("query must be non-empty")
    preamble = PREAMBLE if role is None else f"{role}\n{PREAMBLE}"
    return PromptBundle(preamble=preamble, blocks=blocks, annotation=annotation, query=query)


def build_prompt(
    scene: SceneManifest,
    kept: list[int],
    query: str,
    annotation: str = DEFAULT_ANNOTATION,
    *,
    role: str | None = None,
    include_pose: bool = True,
    target_height: int = DEFAULT_IMAGE_HEIGHT,
    jpeg_quality: int = DEFAULT_JPEG_QUALITY,
) -> PromptBundle:
    """Assemble the four prompt components for the kept frames.

    An optional role sentence is prepended to the preamble.
    """
    blocks = build_blocks(
        scene, kept, include_pose=include_pose,
        target_height=target_height, jpeg_quality=jpeg_quality,
    )
    return assemble_bundle(blocks, query, annotation, role)


def bundle_to_dict(bundle: PromptBundle) -> dict:
    return {
        "version": 1,
        "preamble": bundle.preamble,
        "blocks": [
            {
                "position": b.position_text,
                "rotation": b.rotation_text,
                "image_b64": base64.b64encode(b.image_payload).decode("ascii"),
                "media_type": b.media_type,
            }
            for b in bundle.blocks
        ],
        "annotation": bundle.annotation,
        "query": bundle.query,
    }


def bundle_to_json(bundle: PromptBundle) -> str:
    return json.dumps(bundle_to_dict(bundle), indent=2, ensure_ascii=False) + "\n"


def bundle_from_dict(doc: dict) -> PromptBundle:
    return PromptBundle(
        preamble=doc["preamble"],
        blocks=tuple(
            KeyframeBlock(
                position_text=b["position"],
                rotation_text=b["rotation"],
                image_payload=base64.b64decode(b["image_b64"]),
                media_type=b["media_type"],
            )
            for b in doc["blocks"]
        ),
        annotation=doc["annotation"],
        query=doc["query"],
    )


def load_bundle(path) -> PromptBundle:
    return bundle_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
