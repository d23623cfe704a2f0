from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest
import torch
from PIL import Image

IDENTITY_POSE = [1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1]


@pytest.fixture(scope="session")
def tiny_encoder(tmp_path_factory):
    """CLIP-architecture checkpoint small enough to build in-process: random
    seeded weights, 32 px input, 16-dim projection. Exercises the exact
    loading/inference/export paths without downloading real weights."""
    from transformers import CLIPImageProcessor, CLIPVisionConfig, CLIPVisionModelWithProjection

    out = tmp_path_factory.mktemp("tiny-clip")
    config = CLIPVisionConfig(
        hidden_size=32, intermediate_size=64, num_hidden_layers=2,
        num_attention_heads=2, image_size=32, patch_size=8, projection_dim=16,
    )
    torch.manual_seed(0)
    model = CLIPVisionModelWithProjection(config)
    model.save_pretrained(out)
    processor = CLIPImageProcessor(
        size={"shortest_edge": 32}, crop_size={"height": 32, "width": 32},
    )
    processor.save_pretrained(out)
    return out


def frame_image(width: int, height: int, phase: int) -> np.ndarray:
    u = np.arange(width)[None, :]
    v = np.arange(height)[:, None]
    r = (u * 9 + phase * 41) % 256
    g = (v * 13 + phase * 23) % 256
    b = (u * 3 + v * 5 + phase * 7) % 256
    return np.stack(np.broadcast_arrays(r, g, b), axis=-1).astype(np.uint8)


def write_scene(out_dir, images: list[np.ndarray]) -> Path:
    """Scene manifest in the shared format, with depth planes so the manifest
    also satisfies the consumer's loader."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    height, width = images[0].shape[:2]
    frames = []
    for k, img in enumerate(images):
        color = f"color_{k:04d}.png"
        depth = f"depth_{k:04d}.png"
        Image.fromarray(img).save(out / color)
        Image.fromarray(np.full((height, width), 2000, np.uint16)).save(out / depth)
        frames.append({"frame_id": k, "color": color, "depth": depth,
                       "timestamp": k / 30.0, "pose": IDENTITY_POSE})
    manifest = {
        "scene_id": "embed-fixture",
        "depth_format": "png16",
        "max_depth_m": 10.0,
        "intrinsics": {"fx": 0.8 * width, "fy": 0.8 * width, "cx": width / 2,
                       "cy": height / 2, "width": width, "height": height,
                       "depth_scale": 0.001},
        "frames": frames,
    }
    path = out / "scene.json"
    path.write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    return path


@pytest.fixture(scope="session")
def scene_with_duplicates(tmp_path_factory):
    """4 frames; frames 1 and 3 share identical image bytes."""
    out = tmp_path_factory.mktemp("embed-scene")
    dup = frame_image(48, 36, phase=7)
    images = [frame_image(48, 36, phase=0), dup, frame_image(48, 36, phase=3), dup]
    return write_scene(out, images)
