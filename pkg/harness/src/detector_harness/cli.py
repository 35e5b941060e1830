"""CLI: train a detector on an exported dataset, run detection over images."""
from __future__ import annotations

from pathlib import Path

import click


@click.group()
def main() -> None:
    """Glyph-detector training harness."""


@main.command()
@click.option("--manifest", type=click.Path(path_type=Path, exists=True), required=True)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True)
@click.option("--epochs", default=18, show_default=True, type=int)
@click.option("--input-size", default=192, show_default=True, type=int)
@click.option("--conf-floor", default=0.25, show_default=True, type=float)
@click.option("--seed", default=0, show_default=True, type=int)
def train(manifest: Path, out_dir: Path, epochs: int, input_size: int,
          conf_floor: float, seed: int) -> None:
    """Fine-tune the detector on a dataset manifest."""
    from .train import TrainConfig, train as run_train

    artifact, report = run_train(
        TrainConfig(
            manifest=manifest, out_dir=out_dir, epochs=epochs,
            input_size=input_size, conf_floor=conf_floor, seed=seed,
        )
    )
    click.echo(f"artifact: {artifact}")
    click.echo(f"model_id: {report.model_id}")
    click.echo(f"val recall@0.5: {report.val_recall_iou50}")


@main.command()
@click.option("--model", type=click.Path(path_type=Path, exists=True), required=True)
@click.option("--images", type=click.Path(path_type=Path, exists=True), required=True)
@click.option("--out", type=click.Path(path_type=Path), required=True)
@click.option("--conf-floor", default=0.25, show_default=True, type=float)
def detect(model: Path, images: Path, out: Path, conf_floor: float) -> None:
    """Emit a detection file for every PNG in a directory."""
    from .detect import detect as run_detect

    n = run_detect(model, images, out, conf_floor=conf_floor)
    click.echo(f"wrote {n} detections to {out}")


if __name__ == "__main__":
    main()
