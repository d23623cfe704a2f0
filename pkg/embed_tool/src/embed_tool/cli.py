"""One-shot CLI: embed every frame of a scene and write the sidecar pair."""

from __future__ import annotations

import sys
from pathlib import Path

import click

from . import ImageDecodeError, ModelLoadError
from .encoder import DEFAULT_MODEL, EmbedJob, embed_scene


@click.command()
@click.option("--scene", "scene_path", required=True, type=click.Path(exists=True),
              help="Scene manifest (scene.json).")
@click.option("--out", "out_dir", required=True, type=click.Path(),
              help="Directory for embeddings.json + embeddings.bin.")
@click.option("--model", default=DEFAULT_MODEL, show_default=True,
              help="Encoder checkpoint (hub id or local directory).")
@click.option("--batch", "batch_size", default=16, show_default=True,
              type=click.IntRange(min=1))
@click.option("--device", default="auto", show_default=True,
              help="torch device, or 'auto'.")
def main(scene_path, out_dir, model, batch_size, device):
    job = EmbedJob(
        scene_path=Path(scene_path), out_dir=Path(out_dir),
        model=model, batch_size=batch_size, device=device,
    )
    try:
        header = embed_scene(job)
    except (ModelLoadError, ImageDecodeError, ValueError, FileNotFoundError) as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(2)
    click.echo(str(header))


if __name__ == "__main__":
    main()
