from __future__ import annotations

import numpy as np
import pytest

from spatialprompt.embeddings import EmbeddingMatrix
from spatialprompt.features import FrameFeatures, PointCloudStats
from spatialprompt.scene import load_manifest
from spatialprompt.synth import SyntheticSpec, generate_scene


def make_stats(mean, cov, n: int = 200, degenerate: bool = False) -> PointCloudStats:
    cov = np.asarray(cov, dtype=float)
    return PointCloudStats(
        mean=np.asarray(mean, dtype=float),
        covariance=cov,
        point_count=n,
        spread=0.0 if degenerate else float(np.linalg.det(cov)),
        degenerate=degenerate,
    )


def make_store(frame_ids, vectors) -> EmbeddingMatrix:
    data = np.asarray(vectors, dtype=np.float64)
    return EmbeddingMatrix(
        dim=data.shape[1], count=data.shape[0],
        frame_ids=tuple(frame_ids), data=data, model_tag="test",
    )


def random_psd(rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    a = rng.normal(0.0, scale, (3, 3))
    return a @ a.T + 0.05 * scale * np.eye(3)


def random_instance(rng: np.random.Generator, n: int):
    """Random non-degenerate features + embeddings for selector tests.

    Returns (features, store, oracle_frames): the oracle gets plain dicts so
    it shares no code with the library path.
    """
    frame_ids = list(range(n))
    features = []
    oracle_frames = []
    vectors = rng.normal(0.0, 1.0, (n, 8))
    for fid in frame_ids:
        mean = rng.normal(0.0, 2.0, 3)
        cov = random_psd(rng)
        quality = float(rng.normal(0.0, 5.0))
        stats = make_stats(mean, cov)
        features.append(
            FrameFeatures(frame_id=fid, stats=stats, sharpness=0.0,
                          quality=quality, embedding_ref=fid)
        )
        oracle_frames.append(
            {"frame_id": fid, "mean": mean.copy(), "cov": cov.copy(),
             "quality": quality, "embedding": vectors[fid].copy(), "degenerate": False}
        )
    return features, make_store(frame_ids, vectors), oracle_frames


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    q = rng.normal(size=4)
    q = q / np.linalg.norm(q)
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


@pytest.fixture(scope="session")
def synth_scene_small(tmp_path_factory):
    """8-frame random-walk scene shared across tests."""
    out = tmp_path_factory.mktemp("synth-small")
    generate_scene(SyntheticSpec(seed=11, path_kind="random-walk", frame_count=8), out)
    return out


@pytest.fixture(scope="session")
def synth_scene_circle(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth-circle")
    generate_scene(SyntheticSpec(seed=3, path_kind="circle", frame_count=12), out)
    return out


@pytest.fixture(scope="session")
def small_manifest(synth_scene_small):
    return load_manifest(synth_scene_small / "scene.json")
