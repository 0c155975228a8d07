"""Command line interface.

Subcommands: ingest, segment, export, metrics, poisson, serve. Exit codes:
0 success, 1 usage error, 2 data error (unreadable or inconsistent inputs).
All outputs are deterministic given the same inputs and configuration.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from .compositor import export_bundle, label_map_hash, pixel_composite
from .config import load_config
from .errors import DataError
from .labelpng import load_label_png, save_label_png, save_rgb_png
from .metrics import metrics_report
from .pipeline import segment
from .poisson import poisson_blend
from .store import StackStore, strokes_from_json


@click.group(name="gpmcut")
@click.option("--data-dir", type=click.Path(path_type=Path), default=None,
              help="Data root (default: $GPM_DATA_DIR or ./gpm-data).")
@click.option("--config", "config_file", type=click.Path(path_type=Path),
              default=None, help="key=value configuration file.")
@click.pass_context
def cli(ctx, data_dir, config_file):
    """Composite stacks of aligned generated images by graph cut."""
    if config_file is not None and not config_file.is_file():
        raise DataError(f"config file not found: {config_file}")
    ctx.obj = load_config(config_file=config_file, data_dir=data_dir)


def _store(ctx) -> StackStore:
    return StackStore(ctx.obj.data_dir)


def _load_stack(ctx, stack_id: str):
    try:
        return _store(ctx).get_stack(stack_id)
    except KeyError:
        raise DataError(f"unknown stack {stack_id!r}; run ingest first")


def _load_labels(stack, path: Path) -> np.ndarray:
    """Read a label PNG and check it against the stack's segmentation grid."""
    labels = load_label_png(path)
    layer = stack.manifest.segmentation_layer
    want = (layer.feat_height, layer.feat_width)
    if labels.shape != want:
        raise DataError(
            f"label map {path} is {labels.shape}, expected {want} "
            f"(layer {layer.layer_id})"
        )
    if labels.max(initial=0) >= stack.manifest.n_images:
        raise DataError(
            f"label map {path} references image "
            f"{int(labels.max())} but the stack has {stack.manifest.n_images}"
        )
    return labels.astype(np.int32)


@cli.command()
@click.argument("manifest", type=click.Path(path_type=Path))
@click.pass_context
def ingest(ctx, manifest):
    """Copy a stack (manifest + referenced files) into the data directory."""
    if not manifest.is_file():
        raise DataError(f"manifest not found: {manifest}")
    stack_id = _store(ctx).ingest_manifest(manifest)
    click.echo(stack_id)


@cli.command(name="segment")
@click.option("--stack", "stack_id", required=True, help="Stack id.")
@click.option("--strokes", "strokes_path", required=True,
              type=click.Path(path_type=Path), help="Stroke set JSON.")
@click.option("--out", "out_dir", required=True,
              type=click.Path(path_type=Path), help="Output directory.")
@click.pass_context
def segment_cmd(ctx, stack_id, strokes_path, out_dir):
    """Solve the labeling for a stroke set; write labels, preview, report."""
    stack = _load_stack(ctx, stack_id)
    if not strokes_path.is_file():
        raise DataError(f"stroke file not found: {strokes_path}")
    try:
        doc = json.loads(strokes_path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"stroke file is not JSON: {exc}")
    man = stack.manifest
    try:
        strokes = strokes_from_json(doc, man.n_images, man.width, man.height)
    except ValueError as exc:
        raise DataError(str(exc))

    config = ctx.obj
    grids = _store(ctx).reduced_grids(stack_id, config.selection())
    result = segment(stack, strokes, selection=config.selection(),
                     params=config.params(), reduced_grids=grids)

    out_dir.mkdir(parents=True, exist_ok=True)
    labels = result.label_map.labels
    save_label_png(out_dir / "labels.png", labels)
    composite = pixel_composite(stack, labels)
    save_rgb_png(out_dir / "preview.png", composite.image)
    report = {
        "stack_id": stack_id,
        "energy": result.label_map.energy,
        "n_sweeps": result.label_map.n_sweeps,
        "honors_strokes": result.honors_strokes,
        "label_hash": label_map_hash(labels),
        "base_index": strokes.base_index,
        "timings": result.timings,
        "params": {
            "constraint_cost": config.constraint_cost,
            "smoothness": config.smoothness,
            "sigma": config.sigma,
        },
    }
    (out_dir / "report.json").write_text(json.dumps(report, indent=2,
                                                    sort_keys=True))
    click.echo(f"wrote {out_dir}/labels.png preview.png report.json")


@cli.command()
@click.option("--stack", "stack_id", required=True, help="Stack id.")
@click.option("--labels", "labels_path", required=True,
              type=click.Path(path_type=Path), help="Label map PNG.")
@click.option("--out", "out_dir", required=True,
              type=click.Path(path_type=Path), help="Bundle directory.")
@click.option("--base-index", type=int, default=0, show_default=True,
              help="Image whose live query stream the bundle keeps.")
@click.pass_context
def export(ctx, stack_id, labels_path, out_dir, base_index):
    """Write the composite bundle (masks, K/V tensors, previews) for a labeling."""
    stack = _load_stack(ctx, stack_id)
    if not labels_path.is_file():
        raise DataError(f"label map not found: {labels_path}")
    labels = _load_labels(stack, labels_path)
    if not 0 <= base_index < stack.manifest.n_images:
        raise DataError(f"base index {base_index} out of range")
    config = ctx.obj
    bundle = export_bundle(
        stack, labels, out_dir, base_index=base_index, stack_id=stack_id,
        params={
            "constraint_cost": config.constraint_cost,
            "smoothness": config.smoothness,
            "sigma": config.sigma,
        },
        manifest_path=str(_store(ctx).manifest_path(stack_id)),
    )
    click.echo(str(bundle))


@cli.command()
@click.option("--stack", "stack_id", required=True, help="Stack id.")
@click.option("--labels", "labels_path", required=True,
              type=click.Path(path_type=Path), help="Label map PNG.")
@click.option("--blended", "blended_path", default=None,
              type=click.Path(path_type=Path),
              help="Blended image to score (default: the hard composite).")
@click.pass_context
def metrics(ctx, stack_id, labels_path, blended_path):
    """Print the seam/fidelity metrics report for a labeling as JSON."""
    from PIL import Image

    stack = _load_stack(ctx, stack_id)
    if not labels_path.is_file():
        raise DataError(f"label map not found: {labels_path}")
    labels = _load_labels(stack, labels_path)
    composite = pixel_composite(stack, labels)
    if blended_path is not None:
        if not blended_path.is_file():
            raise DataError(f"blended image not found: {blended_path}")
        blended = np.asarray(Image.open(blended_path).convert("RGB"))
        if blended.shape != composite.image.shape:
            raise DataError(
                f"blended image is {blended.shape[1]}x{blended.shape[0]}, "
                f"stack is {stack.manifest.width}x{stack.manifest.height}"
            )
    else:
        blended = composite.image
    report = metrics_report(blended, stack.images, composite.fullres_labels)
    click.echo(json.dumps(report, indent=2, sort_keys=True))


@cli.command()
@click.option("--stack", "stack_id", required=True, help="Stack id.")
@click.option("--labels", "labels_path", required=True,
              type=click.Path(path_type=Path), help="Label map PNG.")
@click.option("--out", "out_path", required=True,
              type=click.Path(path_type=Path), help="Output PNG.")
@click.option("--base-index", type=int, default=0, show_default=True,
              help="Region kept fixed as the boundary condition.")
@click.pass_context
def poisson(ctx, stack_id, labels_path, out_path, base_index):
    """Gradient-domain blend of the composite; writes a PNG."""
    stack = _load_stack(ctx, stack_id)
    if not labels_path.is_file():
        raise DataError(f"label map not found: {labels_path}")
    labels = _load_labels(stack, labels_path)
    if not 0 <= base_index < stack.manifest.n_images:
        raise DataError(f"base index {base_index} out of range")
    composite = pixel_composite(stack, labels)
    blended = poisson_blend(composite, stack, base_index=base_index)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    save_rgb_png(out_path, blended)
    click.echo(str(out_path))


@cli.command()
@click.option("--addr", default="127.0.0.1:8000", show_default=True,
              help="host:port to bind.")
@click.pass_context
def serve(ctx, addr):
    """Run the HTTP service (blocking)."""
    from .service import serve as run_server

    run_server(ctx.obj, addr=addr)


def main(argv=None) -> int:
    """Entry point mapping exceptions to the documented exit codes."""
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.UsageError as exc:
        message = exc.format_message()
        if exc.ctx is not None:
            click.echo(exc.ctx.get_usage(), err=True)
        click.echo(f"error: {message}", err=True)
        return 1
    except click.ClickException as exc:
        exc.show(file=sys.stderr)
        return 1
    except click.Abort:
        click.echo("aborted", err=True)
        return 1
    except DataError as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    except OSError as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
