"""Batched image-encoder inference.

The encoder is any CLIP-architecture checkpoint resolvable by transformers
(hub id or local directory). Rows are stored exactly as the encoder emits
them, unnormalized; consumers normalize inside cosine similarity. Inference
runs in eval mode with gradients off, so identical images produce identical
rows and batch size only affects floating-point accumulation order.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from . import ImageDecodeError, ModelLoadError
from .io import SceneFrames, read_manifest_frames, write_sidecar

DEFAULT_MODEL = "openai/clip-vit-large-patch14-336"


@dataclass(frozen=True)
class EmbedJob:
    scene_path: Path
    out_dir: Path
    model: str = DEFAULT_MODEL
    batch_size: int = 16
    device: str = "auto"


def resolve_device(selector: str) -> str:
    if selector != "auto":
        return selector
    return "cuda" if torch.cuda.is_available() else "cpu"


def load_encoder(model_tag: str, device: str):
    from transformers import CLIPImageProcessor, CLIPVisionModelWithProjection

    try:
        model = CLIPVisionModelWithProjection.from_pretrained(model_tag)
        processor = CLIPImageProcessor.from_pretrained(model_tag)
    except Exception as e:
        raise ModelLoadError(f"cannot load encoder {model_tag!r}: {e}")
    model.eval()
    model.to(device)
    return model, processor


def load_frame_image(path, frame_id: int) -> Image.Image:
    try:
        with Image.open(path) as img:
            return img.convert("RGB")
    except Exception as e:
        raise ImageDecodeError(f"frame {frame_id}: {path}: {e}")


@torch.no_grad()
def encode_frames(frames: SceneFrames, model, processor, device: str,
                  batch_size: int) -> np.ndarray:
    rows = []
    for start in range(0, len(frames.frame_ids), batch_size):
        ids = frames.frame_ids[start:start + batch_size]
        paths = frames.color_paths[start:start + batch_size]
        images = [load_frame_image(p, fid) for fid, p in zip(ids, paths)]
        inputs = processor(images=images, return_tensors="pt").to(device)
        out = model(**inputs)
        rows.append(out.image_embeds.cpu().to(torch.float32).numpy())
    return np.vstack(rows)


def embed_scene(job: EmbedJob) -> Path:
    """Run the encoder over every frame and write the sidecar pair.

    Returns the path of the written header file.
    """
    frames = read_manifest_frames(job.scene_path)
    device = resolve_device(job.device)
    model, processor = load_encoder(job.model, device)
    embeddings = encode_frames(frames, model, processor, device, job.batch_size)
    expected_dim = model.config.projection_dim
    if embeddings.shape[1] != expected_dim:
        raise ModelLoadError(
            f"encoder emitted dim {embeddings.shape[1]}, config declares {expected_dim}"
        )
    return write_sidecar(job.out_dir, frames.frame_ids, embeddings, job.model)
