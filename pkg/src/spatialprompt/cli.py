"""Operator CLI.

Subcommands: synth, extract, prompt, ask, eval, inspect. Primary output goes
to stdout, diagnostics to stderr. Exit codes: 0 success, 2 validation/usage,
3 backend unavailable or replay miss, 4 unscored items under --strict.

Config precedence: flags > environment > config file > defaults. The API key
is taken only from the SPATIAL_PROMPT_API_KEY environment variable.
"""

from __future__ import annotations

import json
import os
import sys
import threading
from dataclasses import asdict
from pathlib import Path

import click

from . import __version__
from .client import API_KEY_ENV, BackendConfig, make_backend, to_chat_request
from .embeddings import load_embeddings
from .errors import BackendUnavailable, ProviderError, ReplayMiss, SpatialPromptError
from .evaluation import (
    aggregate_csv,
    build_answer_bank,
    load_qa_items,
    render_benchmark_annotation,
    report_to_dict,
    run_eval,
)
from .features import compute_scene_features, save_feature_cache
from .prompting import (
    DEFAULT_ANNOTATION,
    DEFAULT_IMAGE_HEIGHT,
    ZERO_SHOT_ANNOTATION,
    build_blocks,
    build_prompt,
    bundle_to_json,
)
from .scene import load_manifest
from .selection import (
    SelectionConfig,
    load_selection,
    save_selection,
    select_keyframes,
    uniform_selection,
)
from .synth import SyntheticSpec, generate_scene

EXIT_VALIDATION = 2
EXIT_BACKEND = 3
EXIT_STRICT = 4

ENV_PREFIX = "SPATIAL_PROMPT_"

# (config key, env var suffix, parser)
ENV_KEYS = [
    ("alpha", "ALPHA", float),
    ("beta", "BETA", float),
    ("max_frames", "MAX_FRAMES", int),
    ("model", "MODEL", str),
    ("base_url", "BASE_URL", str),
    ("backend", "BACKEND", str),
]

DEFAULTS = {
    "alpha": 5.0,
    "beta": 1.0,
    "max_frames": 30,
    "ridge_epsilon": 1e-6,
    "max_points": 4096,
    "normalize_quality": False,
    "model": "gpt-4o-2024-11-20",
    "base_url": "https://api.openai.com/v1",
    "backend": "http",
    "replay_file": None,
    "record": False,
    "retries": 3,
    "inflight": 4,
    "target_height": DEFAULT_IMAGE_HEIGHT,
    "jobs": 0,
}


def log(message: str) -> None:
    click.echo(message, err=True)


def effective_config(config_file: str | None, flag_values: dict) -> dict:
    """Merge flags > environment > config file > defaults."""
    merged = dict(DEFAULTS)
    if config_file:
        try:
            merged.update(json.loads(Path(config_file).read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError) as e:
            raise SpatialPromptError(f"config file {config_file}: {e}")
    for key, suffix, parse in ENV_KEYS:
        raw = os.environ.get(ENV_PREFIX + suffix)
        if raw is not None:
            merged[key] = parse(raw)
    for key, value in flag_values.items():
        if value is not None:
            merged[key] = value
    return merged


def selection_config(cfg: dict) -> SelectionConfig:
    return SelectionConfig(
        alpha=float(cfg["alpha"]),
        beta=float(cfg["beta"]),
        n_max=int(cfg["max_frames"]),
        ridge_epsilon=float(cfg["ridge_epsilon"]),
        max_points=int(cfg["max_points"]),
        normalize_quality=bool(cfg["normalize_quality"]),
    )


def backend_config(cfg: dict) -> BackendConfig:
    return BackendConfig(
        kind=cfg["backend"],
        model=cfg["model"],
        base_url=cfg["base_url"],
        replay_file=cfg["replay_file"],
        record=bool(cfg["record"]),
        retries=int(cfg["retries"]),
        inflight=int(cfg["inflight"]),
    )


def print_config_and_exit(cfg: dict) -> None:
    click.echo(json.dumps(cfg, indent=2, sort_keys=True))
    sys.exit(0)


def effective_jobs(cfg: dict) -> int:
    return int(cfg["jobs"]) or (os.cpu_count() or 1)


def fail(message: str, code: int) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


class SceneStore:
    """Resolves scene ids to manifests/embeddings under a root directory
    (root/<scene_id>/scene.json + embeddings.json) and caches per-scene
    keyframe selections and rendered prompt blocks, so evaluating hundreds of
    questions on one scene selects and encodes its images once. Selections
    optionally persist on disk keyed by (scene_id, config hash)."""

    def __init__(self, root, config: SelectionConfig, cache_dir=None, jobs: int = 1):
        self.root = Path(root)
        self.config = config
        self.cache_dir = Path(cache_dir) if cache_dir else None
        self.jobs = jobs
        self._lock = threading.Lock()
        self._scenes = {}
        self._selections = {}
        self._blocks = {}

    def scene(self, scene_id: str):
        with self._lock:
            if scene_id not in self._scenes:
                manifest = load_manifest(self.root / scene_id / "scene.json")
                store = load_embeddings(self.root / scene_id / "embeddings.json", manifest)
                self._scenes[scene_id] = (manifest, store)
            return self._scenes[scene_id]

    def keyframes(self, scene_id: str, uniform: bool = False):
        manifest, store = self.scene(scene_id)
        with self._lock:
            key = (scene_id, uniform)
            if key not in self._selections:
                if uniform:
                    kept = uniform_selection(manifest.frame_ids, self.config.n_max)
                else:
                    kept = list(self._select_cached(scene_id, manifest, store))
                self._selections[key] = kept
            return manifest, self._selections[key]

    def blocks(self, scene_id: str, uniform: bool = False, include_pose: bool = True,
               target_height: int = DEFAULT_IMAGE_HEIGHT):
        manifest, kept = self.keyframes(scene_id, uniform=uniform)
        with self._lock:
            key = (scene_id, uniform, include_pose, target_height)
            if key not in self._blocks:
                self._blocks[key] = build_blocks(
                    manifest, kept, include_pose=include_pose, target_height=target_height,
                )
            return self._blocks[key]

    def _select_cached(self, scene_id: str, manifest, store):
        cache_path = None
        if self.cache_dir:
            cache_path = self.cache_dir / f"{scene_id}-{self.config.digest()}.json"
            if cache_path.is_file():
                return load_selection(cache_path)["kept"]
        features = compute_scene_features(manifest, self.config, jobs=self.jobs)
        result = select_keyframes(features, store, self.config)
        if cache_path:
            self.cache_dir.mkdir(parents=True, exist_ok=True)
            save_selection(result, scene_id, self.config, cache_path)
        return result.kept


@click.group()
@click.version_option(version=__version__, prog_name="spatialprompt")
def main():
    """Keyframe-driven prompt generation and evaluation for spatial QA."""


@main.command()
@click.option("--out", required=True, type=click.Path(), help="Output scene directory.")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--path", "path_kind", default="random-walk", show_default=True,
              type=click.Choice(["circle", "line", "random-walk"]))
@click.option("--frames", default=100, show_default=True, type=click.IntRange(min=2))
@click.option("--room", default="6x5x3", show_default=True,
              help="Room extents in meters, AxBxC.")
@click.option("--dim", default=32, show_default=True, type=click.IntRange(min=1),
              help="Embedding dimension.")
def synth(out, seed, path_kind, frames, room, dim):
    """Generate a synthetic RGB-D scene with embeddings."""
    try:
        extents = tuple(float(v) for v in room.lower().split("x"))
        if len(extents) != 3:
            raise ValueError("expected three extents")
    except ValueError as e:
        fail(f"--room: {e}", EXIT_VALIDATION)
    try:
        spec = SyntheticSpec(
            seed=seed, path_kind=path_kind, frame_count=frames,
            room=extents, embedding_dim=dim,
        )
    except ValueError as e:
        fail(str(e), EXIT_VALIDATION)
    scene = generate_scene(spec, out)
    log(f"wrote scene {scene.scene_id} with {len(scene.frames)} frames to {out}")
    click.echo(str(Path(out) / "scene.json"))


@main.command()
@click.option("--scene", "scene_path", required=True, type=click.Path(exists=True))
@click.option("--embeddings", "embeddings_path", type=click.Path(), default=None,
              help="Embedding header path (default: embeddings.json next to the scene).")
@click.option("--out", default="keyframes.json", show_default=True, type=click.Path())
@click.option("--alpha", type=float, default=None, help="Semantic weight.")
@click.option("--beta", type=float, default=None, help="Sharpness weight.")
@click.option("--max-frames", type=int, default=None, help="Keyframe budget.")
@click.option("--normalize-quality", is_flag=True, default=None)
@click.option("--log-removals", is_flag=True, help="Include the removal log in the output.")
@click.option("--features-out", type=click.Path(), default=None,
              help="Also write the per-frame feature cache.")
@click.option("--jobs", type=int, default=None, help="Worker threads (0 = all cores).")
@click.option("--config", "config_file", type=click.Path(exists=True), default=None)
@click.option("--print-config", is_flag=True, help="Print the effective config and exit.")
def extract(scene_path, embeddings_path, out, alpha, beta, max_frames,
            normalize_quality, log_removals, features_out, jobs, config_file, print_config):
    """Select keyframes from a scene (greedy pairwise pruning)."""
    try:
        cfg = effective_config(config_file, {
            "alpha": alpha, "beta": beta, "max_frames": max_frames,
            "normalize_quality": normalize_quality, "jobs": jobs,
        })
        if print_config:
            print_config_and_exit(cfg)
        if int(cfg["max_frames"]) < 1:
            raise SpatialPromptError("--max-frames must be >= 1")
        sel_cfg = selection_config(cfg)
        manifest = load_manifest(scene_path)
        emb_path = embeddings_path or Path(scene_path).parent / "embeddings.json"
        store = load_embeddings(emb_path, manifest)
        features = compute_scene_features(manifest, sel_cfg, jobs=effective_jobs(cfg))
        result = select_keyframes(features, store, sel_cfg)
        if features_out:
            save_feature_cache(features, features_out)
        save_selection(result, manifest.scene_id, sel_cfg, out, include_log=log_removals)
    except SpatialPromptError as e:
        fail(str(e), EXIT_VALIDATION)
    log(f"kept {len(result.kept)} of {len(manifest.frames)} frames")
    click.echo(out)


@main.command()
@click.option("--scene", "scene_path", required=True, type=click.Path(exists=True))
@click.option("--keyframes", "keyframes_path", required=True, type=click.Path(exists=True))
@click.option("--query", required=True, help="User question.")
@click.option("--out", default="prompt.json", show_default=True, type=click.Path())
@click.option("--role", default=None, help="Optional role sentence prepended to the preamble.")
@click.option("--annotation", "annotation_kind", default="default", show_default=True,
              type=click.Choice(["default", "zero-shot", "none"]))
@click.option("--annotation-text", default=None,
              help="Explicit annotation text (overrides --annotation).")
@click.option("--no-pose", is_flag=True, help="Omit camera pose lines from keyframe blocks.")
@click.option("--target-height", type=int, default=None)
@click.option("--golden-check", type=click.Path(exists=True), default=None,
              help="Compare the serialized prompt against a golden file.")
@click.option("--config", "config_file", type=click.Path(exists=True), default=None)
@click.option("--print-config", is_flag=True)
def prompt(scene_path, keyframes_path, query, out, role, annotation_kind,
           annotation_text, no_pose, target_height, golden_check, config_file,
           print_config):
    """Build a prompt bundle from selected keyframes."""
    try:
        cfg = effective_config(config_file, {"target_height": target_height})
        if print_config:
            print_config_and_exit(cfg)
        manifest = load_manifest(scene_path)
        kept = load_selection(keyframes_path)["kept"]
        if annotation_text is not None:
            annotation = annotation_text
        elif annotation_kind == "default":
            annotation = DEFAULT_ANNOTATION
        elif annotation_kind == "zero-shot":
            annotation = ZERO_SHOT_ANNOTATION
        else:
            annotation = ""
        bundle = build_prompt(
            manifest, kept, query, annotation, role=role,
            include_pose=not no_pose, target_height=int(cfg["target_height"]),
        )
        serialized = bundle_to_json(bundle)
        Path(out).write_text(serialized, encoding="utf-8")
    except SpatialPromptError as e:
        fail(str(e), EXIT_VALIDATION)
    if golden_check:
        golden = Path(golden_check).read_text(encoding="utf-8")
        if golden != serialized:
            fail(f"prompt differs from golden {golden_check}", 1)
        log("golden check passed")
    click.echo(out)


def _ask_once(manifest, kept, query, annotation, cfg, backend):
    bundle = build_prompt(
        manifest, kept, query, annotation, target_height=int(cfg["target_height"])
    )
    request = to_chat_request(bundle, cfg["model"])
    return backend.send(request)


@main.command()
@click.option("--scene", "scene_path", required=True, type=click.Path(exists=True))
@click.option("--embeddings", "embeddings_path", type=click.Path(), default=None)
@click.option("--keyframes", "keyframes_path", type=click.Path(exists=True), default=None,
              help="Reuse a previous selection instead of recomputing.")
@click.option("--query", default=None, help="Question (required unless --interactive).")
@click.option("--interactive", is_flag=True, help="REPL: one question per line on stdin.")
@click.option("--backend", "backend_kind", default=None,
              type=click.Choice(["http", "replay", "echo"]))
@click.option("--replay-file", default=None, type=click.Path())
@click.option("--record", is_flag=True, default=None,
              help="Record responses into the replay file.")
@click.option("--model", default=None)
@click.option("--base-url", default=None)
@click.option("--max-frames", type=int, default=None)
@click.option("--config", "config_file", type=click.Path(exists=True), default=None)
@click.option("--print-config", is_flag=True)
def ask(scene_path, embeddings_path, keyframes_path, query, interactive, backend_kind,
        replay_file, record, model, base_url, max_frames, config_file, print_config):
    """Ask one question about a scene (or start a REPL with --interactive)."""
    try:
        cfg = effective_config(config_file, {
            "backend": backend_kind, "replay_file": replay_file, "record": record,
            "model": model, "base_url": base_url, "max_frames": max_frames,
        })
        if print_config:
            print_config_and_exit(cfg)
        if not interactive and not query:
            raise SpatialPromptError("--query is required unless --interactive")
        sel_cfg = selection_config(cfg)
        manifest = load_manifest(scene_path)
        if keyframes_path:
            kept = load_selection(keyframes_path)["kept"]
        else:
            emb_path = embeddings_path or Path(scene_path).parent / "embeddings.json"
            store = load_embeddings(emb_path, manifest)
            features = compute_scene_features(manifest, sel_cfg, jobs=effective_jobs(cfg))
            kept = list(select_keyframes(features, store, sel_cfg).kept)
    except SpatialPromptError as e:
        fail(str(e), EXIT_VALIDATION)

    try:
        backend = make_backend(backend_config(cfg))
        if interactive:
            log(f"interactive mode: {len(kept)} keyframes, EOF to exit")
            for line in sys.stdin:
                q = line.strip()
                if not q:
                    continue
                response = _ask_once(manifest, kept, q, DEFAULT_ANNOTATION, cfg, backend)
                click.echo(response.answer_text)
        else:
            response = _ask_once(manifest, kept, query, DEFAULT_ANNOTATION, cfg, backend)
            click.echo(response.answer_text)
    except (BackendUnavailable, ReplayMiss) as e:
        fail(str(e), EXIT_BACKEND)
    except ProviderError as e:
        fail(str(e), EXIT_BACKEND)


@main.command("eval")
@click.option("--dataset", required=True, type=click.Choice(["scanqa", "sqa3d"]))
@click.option("--questions", "questions_path", required=True, type=click.Path(exists=True),
              help="QaItem JSON-lines file.")
@click.option("--scene-root", required=True, type=click.Path(exists=True),
              help="Directory holding <scene_id>/scene.json + embeddings.")
@click.option("--train-questions", "train_path", type=click.Path(exists=True), default=None,
              help="Training items used to build the few-shot answer bank.")
@click.option("--out", default="report.json", show_default=True, type=click.Path())
@click.option("--csv", "csv_path", type=click.Path(), default=None,
              help="Also write the aggregate row as CSV.")
@click.option("--ablation", default=None,
              type=click.Choice(["no-pose", "uniform-kf", "zero-shot-annotation"]))
@click.option("--backend", "backend_kind", default=None,
              type=click.Choice(["http", "replay", "echo"]))
@click.option("--replay-file", default=None, type=click.Path())
@click.option("--record", is_flag=True, default=None)
@click.option("--model", default=None)
@click.option("--base-url", default=None)
@click.option("--max-frames", type=int, default=None)
@click.option("--cache-dir", type=click.Path(), default=None,
              help="Persist per-scene keyframe selections here.")
@click.option("--strict", is_flag=True, help="Exit 4 if any item is unscored.")
@click.option("--jobs", type=int, default=None, help="Parallel requests (default 4).")
@click.option("--config", "config_file", type=click.Path(exists=True), default=None)
@click.option("--print-config", is_flag=True)
def eval_cmd(dataset, questions_path, scene_root, train_path, out, csv_path, ablation,
             backend_kind, replay_file, record, model, base_url, max_frames,
             cache_dir, strict, jobs, config_file, print_config):
    """Run a benchmark evaluation and write the report."""
    try:
        cfg = effective_config(config_file, {
            "backend": backend_kind, "replay_file": replay_file, "record": record,
            "model": model, "base_url": base_url, "max_frames": max_frames, "jobs": jobs,
        })
        if print_config:
            print_config_and_exit(cfg)
        items = load_qa_items(questions_path)
        if ablation == "zero-shot-annotation":
            annotation = ZERO_SHOT_ANNOTATION
        elif train_path:
            bank = build_answer_bank(load_qa_items(train_path), dataset)
            annotation = render_benchmark_annotation(bank, dataset)
        else:
            raise SpatialPromptError(
                "--train-questions is required unless --ablation zero-shot-annotation"
            )
        store = SceneStore(scene_root, selection_config(cfg), cache_dir,
                           jobs=effective_jobs(cfg))
    except SpatialPromptError as e:
        fail(str(e), EXIT_VALIDATION)

    try:
        backend = make_backend(backend_config(cfg))
    except BackendUnavailable as e:
        fail(str(e), EXIT_BACKEND)

    inflight = int(cfg["jobs"]) or int(cfg["inflight"])
    try:
        report = run_eval(
            items, store, backend, dataset, annotation,
            model_tag=cfg["model"],
            include_pose=(ablation != "no-pose"),
            uniform_keyframes=(ablation == "uniform-kf"),
            target_height=int(cfg["target_height"]),
            inflight=inflight,
        )
    except SpatialPromptError as e:
        fail(str(e), EXIT_VALIDATION)
    Path(out).write_text(
        json.dumps(report_to_dict(report), indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
    if csv_path:
        Path(csv_path).write_text(aggregate_csv(report), encoding="utf-8")
    click.echo(aggregate_csv(report), nl=False)
    if report.unscored:
        log(f"{report.unscored} items unscored (partial report)")
        if strict:
            sys.exit(EXIT_STRICT)


@main.command()
@click.option("--scene", "scene_path", required=True, type=click.Path(exists=True))
@click.option("--config", "config_file", type=click.Path(exists=True), default=None)
def inspect(scene_path, config_file):
    """Print per-frame statistics for a scene."""
    try:
        cfg = effective_config(config_file, {})
        manifest = load_manifest(scene_path)
        features = compute_scene_features(manifest, selection_config(cfg),
                                          jobs=effective_jobs(cfg))
    except SpatialPromptError as e:
        fail(str(e), EXIT_VALIDATION)
    doc = {
        "version": 1,
        "scene_id": manifest.scene_id,
        "frame_count": len(manifest.frames),
        "duration_s": manifest.frames[-1].timestamp - manifest.frames[0].timestamp,
        "degenerate_frames": [f.frame_id for f in features if f.stats.degenerate],
        "frames": [
            {
                "frame_id": f.frame_id,
                "points": f.stats.point_count,
                "spread": f.stats.spread,
                "sharpness": f.sharpness,
                "quality": f.quality,
            }
            for f in features
        ],
    }
    click.echo(json.dumps(doc, indent=2))


if __name__ == "__main__":
    main()
