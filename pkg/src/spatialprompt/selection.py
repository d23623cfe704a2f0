"""Greedy keyframe selection.

All pairwise fused distances d' and per-frame quality scores are precomputed;
the greedy loop then repeatedly resolves the closest surviving pair, removing
its lower-quality member, until at most n_max frames remain. A lazy min-heap
over the static pair distances replaces the naive full rescan per step.
"""

from __future__ import annotations

import hashlib
import heapq
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .embeddings import EmbeddingMatrix, cosine_similarity
from .errors import DegenerateStats, EmptyInput
from .features import FrameFeatures, PointCloudStats

# Pooled covariance gets a ridge only when its condition estimate is worse.
CONDITION_LIMIT = 1e12

DEFAULT_ALPHA = 5.0
DEFAULT_BETA = 1.0
DEFAULT_N_MAX = 30


@dataclass(frozen=True)
class SelectionConfig:
    alpha: float = DEFAULT_ALPHA
    beta: float = DEFAULT_BETA
    n_max: int = DEFAULT_N_MAX
    ridge_epsilon: float = 1e-6
    max_points: int = 4096
    normalize_quality: bool = False

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")
        if self.n_max < 1:
            raise ValueError("n_max must be >= 1")
        if self.ridge_epsilon <= 0:
            raise ValueError("ridge_epsilon must be positive")
        if self.max_points < 1:
            raise ValueError("max_points must be >= 1")

    def digest(self) -> str:
        """Stable hash of the config, for cache keys."""
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class SelectionResult:
    kept: tuple[int, ...]                                  # timestamp order
    removal_log: tuple[tuple[int, int, float, int], ...]   # (removed, survivor, d', step)
    pair_count_evaluated: int


def mahalanobis(a: PointCloudStats, b: PointCloudStats, ridge: float) -> float:
    """Squared-form Mahalanobis distance between two frame point clouds:
    the quadratic form of the mean difference under the pooled covariance
    (Sigma_a + Sigma_b)/2. No square root is taken.

    Near-singular pooled covariances (condition estimate > 1e12) get a ridge
    scaled by the mean covariance trace, so planar scenes stay solvable.
    """
    if a.degenerate or b.degenerate:
        raise DegenerateStats(
            f"stats degenerate ({a.point_count} and {b.point_count} points)"
        )
    delta = a.mean - b.mean
    pooled = (a.covariance + b.covariance) / 2.0
    if np.linalg.cond(pooled) > CONDITION_LIMIT:
        scale = (np.trace(a.covariance) + np.trace(b.covariance)) / 2.0 / 3.0
        if scale <= 0.0:
            scale = 1.0
        pooled = pooled + ridge * scale * np.eye(3)
    return float(delta @ np.linalg.solve(pooled, delta))


def fused_distance(d: float, s: float, alpha: float) -> float:
    """Spatial distance plus alpha times semantic dissimilarity (1 - cosine)."""
    return d + alpha * (1.0 - s)


def pairwise_fused_distances(
    features: list[FrameFeatures], store: EmbeddingMatrix, config: SelectionConfig
) -> dict[tuple[int, int], float]:
    """d'(i, j) for every frame pair, keyed by (frame_id_i, frame_id_j), i < j.

    Pairs with a degenerate member get d' = -inf: they surface as the most
    redundant pairs so degenerate frames are pruned first.
    """
    out: dict[tuple[int, int], float] = {}
    ordered = sorted(features, key=lambda f: f.frame_id)
    for idx, fa in enumerate(ordered):
        for fb in ordered[idx + 1:]:
            key = (fa.frame_id, fb.frame_id)
            if fa.stats.degenerate or fb.stats.degenerate:
                out[key] = -math.inf
                continue
            d = mahalanobis(fa.stats, fb.stats, config.ridge_epsilon)
            s = cosine_similarity(store, fa.frame_id, fb.frame_id)
            out[key] = fused_distance(d, s, config.alpha)
    return out


def select_keyframes(
    features: list[FrameFeatures], store: EmbeddingMatrix, config: SelectionConfig
) -> SelectionResult:
    """Prune frames pairwise-greedily until at most n_max remain.

    Each step resolves the surviving pair with the smallest d' (exact ties
    broken by lexicographic frame-id pair); the member with strictly greater
    quality survives, so on equal quality frame i is removed.
    """
    if not features:
        raise EmptyInput("no frames to select from")

    order = [f.frame_id for f in features]  # input order == timestamp order
    quality = {f.frame_id: f.quality for f in features}
    distances = pairwise_fused_distances(features, store, config)

    heap = [(d, i, j) for (i, j), d in distances.items()]
    heapq.heapify(heap)

    alive = set(order)
    removal_log = []
    step = 0
    while len(alive) > config.n_max and heap:
        d, i, j = heapq.heappop(heap)
        if i not in alive or j not in alive:
            continue  # lazy invalidation: a member was already removed
        if quality[i] > quality[j]:
            removed, survivor = j, i
        else:
            removed, survivor = i, j
        alive.remove(removed)
        step += 1
        removal_log.append((removed, survivor, d, step))

    kept = tuple(fid for fid in order if fid in alive)
    return SelectionResult(
        kept=kept,
        removal_log=tuple(removal_log),
        pair_count_evaluated=len(distances),
    )


def uniform_selection(frame_ids: list[int], n_max: int) -> list[int]:
    """Baseline: every floor(N / n_max)-th frame starting at index 0,
    truncated to n_max frames."""
    n = len(frame_ids)
    if n <= n_max:
        return list(frame_ids)
    step = n // n_max
    return [frame_ids[k * step] for k in range(n_max)]


def save_selection(result: SelectionResult, scene_id: str, config: SelectionConfig,
                   path, include_log: bool = True) -> None:
    doc = {
        "version": 1,
        "scene_id": scene_id,
        "config": asdict(config),
        "kept": list(result.kept),
        "removal_log": [
            {"removed": r, "survivor": s, "d_prime": d, "step": st}
            for (r, s, d, st) in result.removal_log
        ] if include_log else [],
        "pair_count_evaluated": result.pair_count_evaluated,
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def load_selection(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))
