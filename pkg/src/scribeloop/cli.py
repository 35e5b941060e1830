"""Command-line client for the pipeline service.

`scribeloop serve` runs the FastAPI service over a workspace; every other
subcommand is a thin HTTP client against a running server (--server or
SCRIBELOOP_SERVER, default http://127.0.0.1:8000).
"""
from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

import click
import httpx

DEFAULT_SERVER = "http://127.0.0.1:8000"


def _client(ctx: click.Context) -> httpx.Client:
    return httpx.Client(base_url=ctx.obj["server"], timeout=600.0)


def _call(ctx: click.Context, method: str, path: str, payload: dict | None = None) -> dict:
    with _client(ctx) as client:
        try:
            resp = client.request(method, path, json=payload)
        except httpx.ConnectError:
            raise click.ClickException(
                f"cannot reach {ctx.obj['server']}; start one with `scribeloop serve`"
            )
    if resp.status_code >= 400:
        try:
            body = resp.json()
            message = f"{body.get('error', resp.status_code)}: {body.get('detail', '')}"
        except json.JSONDecodeError:
            message = f"HTTP {resp.status_code}: {resp.text[:200]}"
        raise click.ClickException(message)
    return resp.json()


@click.group()
@click.option("--server", envvar="SCRIBELOOP_SERVER", default=DEFAULT_SERVER, show_default=True)
@click.pass_context
def main(ctx: click.Context, server: str) -> None:
    """Manuscript character-detection annotation loop."""
    ctx.ensure_object(dict)
    ctx.obj["server"] = server


@main.command()
@click.option("--workspace", type=click.Path(path_type=Path), required=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
@click.option("--ui", "ui_dir", type=click.Path(path_type=Path), default=None,
              help="Directory of built review-UI assets to serve at /")
def serve(workspace: Path, host: str, port: int, ui_dir: Path | None) -> None:
    """Run the pipeline service over a workspace directory."""
    import uvicorn

    from .orchestrator import Workspace
    from .service import create_app

    if ui_dir is None:
        bundled = Path(__file__).resolve().parents[2] / "frontend" / "dist"
        ui_dir = bundled if bundled.is_dir() else None
    app = create_app(Workspace(workspace), ui_dir=ui_dir)
    uvicorn.run(app, host=host, port=port, log_level="info")


@main.command()
@click.option("--images", type=click.Path(path_type=Path), default=None,
              help="Page image directory (defaults to the workspace pages/)")
@click.option("--manuscript", default=None)
@click.pass_context
def preprocess(ctx: click.Context, images: Path | None, manuscript: str | None) -> None:
    """Crop, clean and binarize page scans into column images."""
    body = _call(ctx, "POST", "/api/pipeline/preprocess",
                 {"images_dir": str(images) if images else None, "manuscript": manuscript})
    click.echo(f"preprocessed {body['pages']} pages into {body['columns']} columns")


@main.command()
@click.option("--manuscript", default=None)
@click.option("--scribe", required=True)
@click.option("--tau", default=0.55, show_default=True, type=float)
@click.option("--nms", "nms_iou", default=0.3, show_default=True, type=float)
@click.option("--sides", default="recto,verso", show_default=True)
@click.option("--pages", "max_pages", default=None, type=int,
              help="Limit matching to the first N pages")
@click.pass_context
def bootstrap(ctx, manuscript, scribe, tau, nms_iou, sides, max_pages) -> None:
    """Propose pending boxes by template matching the scribe's columns."""
    body = _call(ctx, "POST", "/api/pipeline/bootstrap", {
        "scribe": scribe,
        "manuscript": manuscript,
        "tau": tau,
        "nms_iou": nms_iou,
        "sides": [s.strip() for s in sides.split(",") if s.strip()],
        "max_pages": max_pages,
    })
    click.echo(f"created {body['created']} pending annotations")


def _echo_state(body: dict) -> None:
    manifest = body.get("manifest")
    click.echo(f"cycle {body['cycle']}: {body['phase']} (pending {body['pending_count']})")
    if manifest:
        click.echo(
            f"  train {len(manifest['train_columns'])} + val {len(manifest['val_columns'])} columns, "
            f"inference {len(manifest['inference_columns'])}"
        )


@main.group()
def cycle() -> None:
    """Annotation-cycle lifecycle."""


@cycle.command("start")
@click.option("--cycle", "cycle_number", default=None, type=int)
@click.pass_context
def cycle_start(ctx, cycle_number) -> None:
    _echo_state(_call(ctx, "POST", "/api/cycles/start", {"cycle": cycle_number}))


@cycle.command("status")
@click.pass_context
def cycle_status(ctx) -> None:
    _echo_state(_call(ctx, "GET", "/api/cycles/current"))


@cycle.command("merge")
@click.pass_context
def cycle_merge(ctx) -> None:
    _echo_state(_call(ctx, "POST", "/api/cycles/merge"))


@main.group()
def detections() -> None:
    """Detector output exchange."""


@detections.command("submit")
@click.argument("file", type=click.Path(path_type=Path, exists=True))
@click.pass_context
def detections_submit(ctx, file: Path) -> None:
    """Submit a detection file for review (content is uploaded)."""
    body = _call(ctx, "POST", "/api/detections",
                 {"content": file.read_text(encoding="utf-8")})
    _echo_state(body)


@main.group(name="eval")
def eval_group() -> None:
    """Quantitative evaluation."""


@eval_group.command("sweep")
@click.option("--target", required=True, help="Target scribe code")
@click.option("--taus", default="0.70:0.85:0.01", show_default=True,
              help="Threshold grid start:stop:step")
@click.option("--manuscript", default=None)
@click.option("--out", type=click.Path(path_type=Path), default=None)
@click.pass_context
def eval_sweep(ctx, target, taus, manuscript, out) -> None:
    """Sweep the confidence threshold and report accuracy/F-score."""
    from .evaluation import parse_tau_grid

    body = _call(ctx, "POST", "/api/eval/sweep",
                 {"target": target, "taus": parse_tau_grid(taus), "manuscript": manuscript})
    lines = [["tau", "tp", "fp", "fn", "tn", "accuracy", "f_score"]]
    for p in body["points"]:
        lines.append([f"{p['tau']:.4f}", p["tp"], p["fp"], p["fn"], p["tn"],
                      f"{p['accuracy']:.6f}", f"{p['f_score']:.6f}"])
    _write_csv(lines, out)


@eval_group.command("plot")
@click.option("--sweep", "sweep_csv", type=click.Path(path_type=Path, exists=True), required=True)
@click.option("--out", type=click.Path(path_type=Path), required=True)
def eval_plot(sweep_csv: Path, out: Path) -> None:
    """Render a sweep CSV as an SVG curve (accuracy and F-score vs threshold)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    taus, accs, fs = [], [], []
    with sweep_csv.open() as fh:
        for row in csv.DictReader(fh):
            taus.append(float(row["tau"]))
            accs.append(100.0 * float(row["accuracy"]))
            fs.append(100.0 * float(row["f_score"]))
    fig, ax = plt.subplots(figsize=(6.5, 4.0))
    ax.plot(taus, fs, marker="o", color="tab:blue", label="F-score (%)")
    ax.plot(taus, accs, marker="o", color="tab:orange", label="Accuracy (%)")
    ax.set_xlabel("Threshold")
    ax.set_ylim(0, 100)
    ax.grid(True, alpha=0.4)
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(out, format="svg")
    click.echo(f"wrote {out}")


@main.command()
@click.option("--manuscript", default=None)
@click.option("--out", type=click.Path(path_type=Path), default=None)
@click.pass_context
def stats(ctx, manuscript, out) -> None:
    """Per-scribe extraction statistics (occurrences, columns, confidence)."""
    body = _call(ctx, "POST", "/api/eval/stats", {"manuscript": manuscript})
    lines = [["scribe", "occurrences", "columns", "occ_per_column", "mean_confidence"]]
    for r in body["rows"]:
        lines.append([r["scribe"], r["occurrences"], r["columns"],
                      f"{r['occ_per_column']:.2f}", f"{r['mean_confidence']:.2f}"])
    _write_csv(lines, out)


@main.command()
@click.option("--rule", type=click.Choice(["any_above", "fraction_above", "majority_vote"]),
              default="any_above", show_default=True)
@click.option("--tau", default=0.83, show_default=True, type=float)
@click.option("--fraction", default=0.5, show_default=True, type=float)
@click.option("--unit", type=click.Choice(["page", "column"]), default="page", show_default=True)
@click.option("--manuscript", default=None)
@click.option("--out", type=click.Path(path_type=Path), default=None)
@click.pass_context
def attribute(ctx, rule, tau, fraction, unit, manuscript, out) -> None:
    """Attribute pages or columns to the target scribe from detections."""
    body = _call(ctx, "POST", "/api/eval/attribute", {
        "rule": rule, "tau": tau, "fraction": fraction, "unit": unit, "manuscript": manuscript,
    })
    lines = [["unit_id", "detections", "decision"]]
    for r in body["rows"]:
        lines.append([r["unit_id"], r["detections"], r["decision"]])
    _write_csv(lines, out)


def _write_csv(rows: list[list], out: Path | None) -> None:
    if out is None:
        writer = csv.writer(sys.stdout, lineterminator="\n")
        writer.writerows(rows)
    else:
        with Path(out).open("w", encoding="utf-8", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerows(rows)
        click.echo(f"wrote {out}")


if __name__ == "__main__":
    main()
