"""Per-frame vision-language embeddings, loaded from a sidecar pair:

  embeddings.json  header {"dim", "count", "model", "frame_ids"}
  embeddings.bin   count x dim float32, little-endian, row-major,
                   rows in frame_ids order

Embeddings are produced externally; this store only answers cosine queries.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FrameCoverageError, HeaderMismatch, MissingFile, NonFiniteEmbedding, UnknownFrame
from .scene import SceneManifest


@dataclass(frozen=True)
class EmbeddingMatrix:
    dim: int
    count: int
    frame_ids: tuple[int, ...]
    data: np.ndarray  # (count, dim) float64 in memory
    model_tag: str

    def row(self, frame_id: int) -> np.ndarray:
        try:
            return self.data[self.frame_ids.index(frame_id)]
        except ValueError:
            raise UnknownFrame(f"frame {frame_id} has no embedding")


def load_embeddings(path, scene: SceneManifest | None = None) -> EmbeddingMatrix:
    """Load the sidecar pair next to `path` (the .json header).

    When a scene is given, rows must cover its frame_ids exactly: a missing or
    extra frame is a FrameCoverageError.
    """
    header_path = Path(path)
    if not header_path.is_file():
        raise MissingFile(str(header_path))
    header = json.loads(header_path.read_text(encoding="utf-8"))
    for key in ("dim", "count", "frame_ids"):
        if key not in header:
            raise HeaderMismatch(f"{header_path}: header missing {key!r}")
    dim = int(header["dim"])
    count = int(header["count"])
    frame_ids = [int(v) for v in header["frame_ids"]]
    model_tag = str(header.get("model", ""))

    if dim < 1 or count < 1:
        raise HeaderMismatch(f"{header_path}: dim={dim}, count={count} must be positive")
    if len(frame_ids) != count:
        raise HeaderMismatch(
            f"{header_path}: {len(frame_ids)} frame_ids but count={count}"
        )
    if len(set(frame_ids)) != count:
        raise HeaderMismatch(f"{header_path}: duplicate frame_ids")

    bin_path = header_path.with_suffix(".bin")
    if not bin_path.is_file():
        raise MissingFile(str(bin_path))
    blob = bin_path.read_bytes()
    expected = count * dim * 4
    if len(blob) != expected:
        raise HeaderMismatch(
            f"{bin_path}: {len(blob)} bytes, header claims {count}x{dim} "
            f"float32 ({expected} bytes)"
        )
    data = np.frombuffer(blob, dtype="<f4").reshape(count, dim).astype(np.float64)

    if not np.all(np.isfinite(data)):
        bad = sorted({frame_ids[i] for i in np.nonzero(~np.isfinite(data))[0]})
        raise NonFiniteEmbedding(f"non-finite entries in rows for frames {bad}")
    zero_rows = np.nonzero(~data.any(axis=1))[0]
    if zero_rows.size:
        bad = [frame_ids[i] for i in zero_rows]
        raise NonFiniteEmbedding(f"all-zero embedding for frames {bad} (cosine undefined)")

    if scene is not None:
        scene_ids = set(scene.frame_ids)
        have = set(frame_ids)
        missing = sorted(scene_ids - have)
        extra = sorted(have - scene_ids)
        if missing or extra:
            raise FrameCoverageError(
                f"embedding rows do not match scene {scene.scene_id}: "
                f"missing {missing}, extra {extra}"
            )

    return EmbeddingMatrix(
        dim=dim, count=count, frame_ids=tuple(frame_ids), data=data, model_tag=model_tag,
    )


def save_embeddings(path, frame_ids, data: np.ndarray, model_tag: str) -> None:
    """Write the sidecar pair; `path` is the .json header path."""
    header_path = Path(path)
    arr = np.ascontiguousarray(np.asarray(data), dtype="<f4")
    count, dim = arr.shape
    if count != len(frame_ids):
        raise ValueError(f"{count} rows for {len(frame_ids)} frame_ids")
    header = {
        "dim": dim,
        "count": count,
        "model": model_tag,
        "frame_ids": [int(v) for v in frame_ids],
    }
    header_path.write_text(json.dumps(header, indent=2) + "\n", encoding="utf-8")
    header_path.with_suffix(".bin").write_bytes(arr.tobytes())


def cosine_similarity(store: EmbeddingMatrix, i: int, j: int) -> float:
    """Cosine similarity between the embeddings of frames i and j.

    Arguments are canonicalized to (min, max) so S(i, j) and S(j, i) share the
    exact arithmetic and are bit-identical.
    """
    a, b = (i, j) if i <= j else (j, i)
    fa = store.row(a)
    fb = store.row(b)
    return float(fa @ fb / (np.linalg.norm(fa) * np.linalg.norm(fb)))
