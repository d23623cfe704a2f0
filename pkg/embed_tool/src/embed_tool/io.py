"""Scene-manifest reading and embedding-sidecar writing.

Both formats are shared contracts with the prompt-generation engine; this
module speaks them directly so the tool stays a standalone process.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class SceneFrames:
    scene_id: str
    frame_ids: list[int]
    color_paths: list[Path]


def read_manifest_frames(path) -> SceneFrames:
    """Frame ids and color-image paths from a scene manifest, in manifest
    order; relative paths resolve against the manifest's directory."""
    path = Path(path)
    doc = json.loads(path.read_text(encoding="utf-8"))
    frames = doc["frames"]
    if not frames:
        raise ValueError(f"{path}: manifest has no frames")
    frame_ids = [int(f["frame_id"]) for f in frames]
    if len(set(frame_ids)) != len(frame_ids):
        raise ValueError(f"{path}: duplicate frame_ids")
    color_paths = [path.parent / f["color"] for f in frames]
    for fid, p in zip(frame_ids, color_paths):
        if not p.is_file():
            raise FileNotFoundError(f"frame {fid}: color file {p} missing")
    return SceneFrames(scene_id=str(doc["scene_id"]), frame_ids=frame_ids,
                       color_paths=color_paths)


def write_sidecar(out_dir, frame_ids, embeddings: np.ndarray, model_tag: str) -> Path:
    """Write embeddings.json + embeddings.bin (count x dim float32 LE,
    row-major, rows in frame_ids order). Returns the header path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    arr = np.ascontiguousarray(embeddings, dtype="<f4")
    count, dim = arr.shape
    if count != len(frame_ids):
        raise ValueError(f"{count} embedding rows for {len(frame_ids)} frames")
    header = {
        "dim": dim,
        "count": count,
        "model": model_tag,
        "frame_ids": [int(v) for v in frame_ids],
    }
    header_path = out / "embeddings.json"
    header_path.write_text(json.dumps(header, indent=2) + "\n", encoding="utf-8")
    (out / "embeddings.bin").write_bytes(arr.tobytes())
    return header_path
