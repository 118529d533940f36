"""Batch entry points: train, segment, benchmark, synth, serve.

Exit codes: 0 ok, 1 usage error, 2 data error, 3 numeric failure.
"""
from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from .errors import DataError, NumericError
from .evaluate import AblationConfig, run_ablation
from .graphcut import EnergyConfig
from .grid import (BoundingBox, Grid2D, LabelMap, ScribbleSet, crop_with_margin,
                   load_image, load_instance_map, save_image)
from .model import ModelConfig, TrainConfig, load_model, save_model, train
from .pipeline import RefineConfig, final_labels, init_segment, refine
from .synth import SyntheticSpec, generate_dataset, write_dataset
from .evaluate import dice as dice_score


def _load_config_file(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"config file not found: {path}")
    text = path.read_bytes()
    if path.suffix.lower() == ".json":
        return json.loads(text)
    if path.suffix.lower() == ".toml":
        try:
            import tomllib
        except ImportError:
            import tomli as tomllib
        return tomllib.loads(text.decode())
    raise DataError(f"unsupported config format: {path.suffix}")


def _parse_box(text: str) -> BoundingBox:
    parts = text.split(",")
    if len(parts) != 4:
        raise click.UsageError("--box expects x_min,y_min,x_max,y_max")
    try:
        return BoundingBox(*[int(p) for p in parts])
    except ValueError as exc:
        raise click.UsageError(f"bad box '{text}': {exc}") from exc


def _read_scribble_file(path, width: int, height: int) -> ScribbleSet:
    """Plaintext scribbles: one `fg x y` or `bg x y` line per pixel, in
    crop (resized network grid) coordinates."""
    fg, bg = set(), set()
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3 or parts[0] not in ("fg", "bg"):
            raise DataError(f"{path}:{lineno}: expected 'fg|bg x y', got {line!r}")
        try:
            x, y = int(parts[1]), int(parts[2])
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: bad coordinates in {line!r}") from exc
        if not (0 <= x < width and 0 <= y < height):
            raise DataError(f"{path}:{lineno}: pixel ({x}, {y}) outside {width}x{height} crop")
        (fg if parts[0] == "fg" else bg).add((x, y))
    return ScribbleSet(frozenset(fg), frozenset(bg))


def _refine_config(d: dict | None) -> RefineConfig:
    if not d:
        return RefineConfig()
    d = dict(d)
    energy = EnergyConfig(**d.pop("energy", {}))
    return RefineConfig(energy=energy, **d)


@click.group()
def cli():
    """Interactive bounding-box segmentation with graph-cut refinement
    and image-specific classifier fine-tuning."""


@cli.command("train")
@click.option("--data", "manifest_path", required=True, type=click.Path(), help="dataset manifest JSON")
@click.option("--config", "config_path", type=click.Path(), help="model+train config (JSON/TOML)")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--seed", default=0, show_default=True)
def train_cmd(manifest_path, config_path, out_path, seed):
    """Crop every listed instance with a random margin and train a model."""
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise DataError(f"manifest not found: {manifest_path}")
    manifest = json.loads(manifest_path.read_text())
    entries = manifest["train"] if isinstance(manifest, dict) else manifest
    if not entries:
        raise DataError("manifest lists no training instances")
    cfg = _load_config_file(config_path) if config_path else {}
    model_cfg = ModelConfig(**{k: tuple(v) if isinstance(v, list) else v
                               for k, v in cfg.get("model", {}).items()})
    train_cfg = TrainConfig(**cfg.get("train", {}))

    base = manifest_path.parent
    dataset = []
    for i, entry in enumerate(entries):
        image = load_image(base / entry["image"])
        ids = load_instance_map(base / entry["label"])
        crop, lab, _ = crop_with_margin(image, ids, int(entry["instance_label"]),
                                        rng_seed=seed * 1_000_003 + i)
        dataset.append((crop, lab))
    click.echo(f"training on {len(dataset)} crops "
               f"({train_cfg.max_iterations} iterations)")
    model = train(dataset, train_cfg, seed=seed, model_config=model_cfg)
    save_model(out_path, model)
    curve_path = Path(out_path).with_suffix(".loss.csv")
    with open(curve_path, "w") as f:
        f.write("iteration,loss\n")
        for i, v in enumerate(model.loss_curve):
            f.write(f"{i},{v:.6f}\n")
    click.echo(f"wrote {out_path} and {curve_path} "
               f"(final loss {model.loss_curve[-1]:.4f})")


@cli.command("segment")
@click.option("--model", "model_path", required=True, type=click.Path())
@click.option("--image", "image_path", required=True, type=click.Path())
@click.option("--box", "box_text", required=True, help="x_min,y_min,x_max,y_max")
@click.option("--scribbles", "scribble_path", type=click.Path(),
              help="scribble file ('fg|bg x y' per line, crop coordinates); implies refinement")
@click.option("--unsupervised-refine", is_flag=True, help="refine without scribbles")
@click.option("--truth", "truth_path", type=click.Path(), help="ground-truth mask to score against")
@click.option("--config", "config_path", type=click.Path(), help="refine config (JSON/TOML)")
@click.option("--out", "out_path", required=True, type=click.Path())
def segment_cmd(model_path, image_path, box_text, scribble_path,
                unsupervised_refine, truth_path, config_path, out_path):
    """Segment one bounding box; optionally refine, optionally score."""
    model = load_model(model_path)
    image = load_image(image_path)
    box = _parse_box(box_text)
    session = init_segment(model, image, box)
    cfg = _refine_config(_load_config_file(config_path).get("refine") if config_path else None)
    if scribble_path is not None:
        scribbles = _read_scribble_file(scribble_path, session.crop.width, session.crop.height)
        refine(session, scribbles, cfg)
    elif unsupervised_refine:
        refine(session, ScribbleSet.empty(), cfg)
    mask = final_labels(session)
    save_image(out_path, Grid2D(mask.labels.astype(np.float32)))
    click.echo(f"wrote {out_path} ({mask.foreground_count()} foreground pixels)")
    if truth_path:
        truth = load_instance_map(truth_path)
        score = dice_score(mask, LabelMap((truth > 0).astype(np.uint8)))
        click.echo(f"dice: {score:.4f}")


@cli.command("synth")
@click.option("--spec", "spec_path", required=True, type=click.Path(), help="SyntheticSpec (JSON/TOML)")
@click.option("--out", "out_dir", required=True, type=click.Path())
def synth_cmd(spec_path, out_dir):
    """Generate a synthetic dataset with train/test manifests."""
    spec = SyntheticSpec.from_dict(_load_config_file(spec_path))
    dataset = generate_dataset(spec)
    write_dataset(dataset, out_dir)
    click.echo(f"wrote {len(dataset.train)} train / {len(dataset.test)} test cases to {out_dir}")


@cli.command("benchmark")
@click.option("--spec", "spec_path", required=True, type=click.Path(),
              help="synthetic spec plus optional 'refine'/'ablation' sections (JSON/TOML)")
@click.option("--model", "model_path", required=True, type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--threads", default=None, type=int, help="worker pool size (default: BIFSEG_THREADS or 4)")
def benchmark_cmd(spec_path, model_path, out_dir, threads):
    """Run the five-method ablation on held-out synthetic cases.

    Writes report.json/report.csv and per-case masks (deterministic for a
    fixed spec seed) plus wall-clock timings.json/timings.csv.
    """
    raw = _load_config_file(spec_path)
    spec = SyntheticSpec.from_dict(raw.get("synth", raw if "image_size" in raw else {}))
    abl = AblationConfig(refine=_refine_config(raw.get("refine")),
                         scribble_budget=int(raw.get("ablation", {}).get("scribble_budget", 30)),
                         seed=int(raw.get("ablation", {}).get("seed", 0)))
    model = load_model(model_path)
    dataset = generate_dataset(spec)

    out = Path(out_dir)
    (out / "masks").mkdir(parents=True, exist_ok=True)

    def mask_sink(i, method, mask):
        save_image(out / "masks" / f"case{i:03d}_{method}.png",
                   Grid2D(mask.labels.astype(np.float32)))

    report = run_ablation(model, dataset, abl, mask_sink=mask_sink, threads=threads)
    (out / "report.json").write_text(report.to_json())
    (out / "report.csv").write_text(report.to_csv())
    (out / "timings.json").write_text(report.timings_json())
    (out / "timings.csv").write_text(report.timings_csv())
    for cls, methods in report.summary().items():
        row = "  ".join(f"{m}={v['mean']:.4f}±{v['std']:.4f}" for m, v in methods.items())
        click.echo(f"{cls}: {row}")
    click.echo(f"wrote report to {out}")


@cli.command("serve")
@click.option("--model", "model_path", type=click.Path(), help="model artifact")
@click.option("--dev-model", default=None, type=int,
              help="serve a freshly initialized (untrained) model with this seed")
@click.option("--images", "image_dir", type=click.Path(), help="directory served by image_id")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
@click.option("--reject-concurrent", is_flag=True,
              help="409 instead of queueing concurrent refines on one session")
def serve_cmd(model_path, dev_model, image_dir, host, port, reject_concurrent):
    """Run the HTTP session service."""
    from .model import init_model
    from .service import create_app

    if model_path is None and dev_model is None:
        raise click.UsageError("provide --model or --dev-model")
    if model_path is not None:
        model = load_model(model_path)
    else:
        model = init_model(ModelConfig(block_channels=(8,) * 5, layers_per_block=1,
                                       min_side=64), seed=dev_model)
    app = create_app(model, image_dir, queue_refines=not reject_concurrent)
    import uvicorn
    uvicorn.run(app, host=host, port=port, log_level="warning")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.Abort:
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except DataError as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    except NumericError as exc:
        click.echo(f"numeric failure: {exc}", err=True)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
