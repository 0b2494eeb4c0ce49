"""Command-line interface: analyze, clean, train, serve."""

from __future__ import annotations

import json as jsonlib
import os

import click
import yaml

from .imaging import load_image, save_image
from .inpaint import Generator, iterative_inpaint, load_inpaint_checkpoint
from .policy import OverrideLedger, select_clutter
from .scoring import ScoreModel, TinyBackbone, analyze_scene, load_score_checkpoint
from .segmentation import DEFAULT_TAXONOMY, ExternalSegmenter, SyntheticSegmenter
from .service import ServiceConfig, run_service
from .training import (
    StrokeMaskSpec,
    TrainingConfig,
    ingest_score_dataset,
    train_inpaint_model,
    train_score_model,
)


def _load_score_model(checkpoint):
    if checkpoint:
        return load_score_checkpoint(checkpoint)
    return ScoreModel(TinyBackbone(), input_resolution=64)


def _load_generator(checkpoint):
    if checkpoint:
        generator, _, _ = load_inpaint_checkpoint(checkpoint)
        return generator
    return Generator(
        encoder_channels=(8, 8, 16, 16),
        decoder_channels=(16, 16, 8, 6, 3),
        confidence_hidden=4,
    )


def _segmenter(url):
    return ExternalSegmenter(url) if url else SyntheticSegmenter(detect_regions=True)


def _training_config(config_path) -> TrainingConfig:
    if not config_path:
        return TrainingConfig()
    with open(config_path) as fh:
        raw = yaml.safe_load(fh) or {}
    return TrainingConfig(**raw)


@click.group()
def main():
    """Clutter detection and removal for photographs."""


@main.command()
@click.argument("image_path", type=click.Path(exists=True))
@click.option("--json", "as_json", is_flag=True, help="emit machine-readable JSON")
@click.option("--score-checkpoint", type=click.Path(exists=True), default=None)
@click.option("--segmenter-url", default=None, help="external segmentation backend")
def analyze(image_path, as_json, score_checkpoint, segmenter_url):
    """Detect elements and report each one's contribution and category."""
    image = load_image(image_path)
    masks = _segmenter(segmenter_url).segment(image)
    if len(masks) == 0:
        if as_json:
            click.echo(jsonlib.dumps({"k": 0, "elements": []}))
        else:
            click.echo("no elements detected")
        return
    model = _load_score_model(score_checkpoint)
    assessment = analyze_scene(image, masks, model)
    rows = []
    for m, q, cat in zip(masks.masks, assessment.contributions, assessment.categories):
        rows.append(
            {
                "index": m.index,
                "label": int(m.label),
                "label_name": DEFAULT_TAXONOMY.name_of(m.label),
                "area_fraction": round(m.area_fraction(), 6),
                "q": float(q),
                "category": cat,
            }
        )
    if as_json:
        click.echo(
            jsonlib.dumps(
                {
                    "k": len(masks),
                    "overall_aes": assessment.overall_aes,
                    "overall_content": assessment.overall_content,
                    "elements": rows,
                }
            )
        )
    else:
        click.echo(f"{len(masks)} elements  (overall aes {assessment.overall_aes:.4f}, "
                   f"content {assessment.overall_content:.4f})")
        for r in rows:
            click.echo(
                f"  [{r['index']}] {r['label_name']:<16} q={r['q']:+.6f}  {r['category']}"
            )


def _parse_overrides(pairs):
    ledger = OverrideLedger()
    for pair in pairs:
        try:
            idx, cat = pair.split("=", 1)
            ledger.set(int(idx), cat.strip())
        except ValueError as exc:
            raise click.BadParameter(f"override must look like 2=normal: {exc}")
    return ledger


@main.command()
@click.argument("image_path", type=click.Path(exists=True))
@click.option("--override", "overrides", multiple=True, help="index=category, repeatable")
@click.option("--out", "out_path", type=click.Path(), default="cleaned.png")
@click.option("--max-iter", type=int, default=5, show_default=True)
@click.option("--score-checkpoint", type=click.Path(exists=True), default=None)
@click.option("--inpaint-checkpoint", type=click.Path(exists=True), default=None)
@click.option("--segmenter-url", default=None)
def clean(image_path, overrides, out_path, max_iter, score_checkpoint,
          inpaint_checkpoint, segmenter_url):
    """Remove everything currently classified as clutter and save the result."""
    image = load_image(image_path)
    masks = _segmenter(segmenter_url).segment(image)
    if len(masks) == 0:
        save_image(image, out_path)
        click.echo(f"no elements detected; wrote original to {out_path}")
        return
    model = _load_score_model(score_checkpoint)
    assessment = analyze_scene(image, masks, model)
    ledger = _parse_overrides(overrides)
    selection = select_clutter(assessment, ledger, masks)
    if len(selection) == 0:
        save_image(image, out_path)
        click.echo(f"nothing to remove; wrote original to {out_path}")
        return
    generator = _load_generator(inpaint_checkpoint)
    result = iterative_inpaint(
        image, selection.union_mask, generator=generator, max_iterations=max_iter
    )
    save_image(result.final_image, out_path)
    click.echo(
        f"removed elements {list(selection.indices)} in {result.iterations_used} "
        f"iteration(s); wrote {out_path}"
    )


@main.command("train-score")
@click.option("--manifest", type=click.Path(exists=True), required=True,
              help="CSV: image_path,y_aes,y_content")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--checkpoints", "checkpoint_dir", type=click.Path(), default="checkpoints")
@click.option("--log", "log_path", type=click.Path(), default=None)
@click.option("--segmenter-url", default=None)
def train_score(manifest, config_path, checkpoint_dir, log_path, segmenter_url):
    """Fit the contribution model on a labeled manifest."""
    config = _training_config(config_path)
    records, errors = ingest_score_dataset(manifest)
    for err in errors:
        click.echo(f"skipped line {err['line']}: [{err['kind']}] {err['message']}", err=True)
    if not records:
        raise click.ClickException("manifest yielded no usable records")
    segmenter = _segmenter(segmenter_url)
    model, history = train_score_model(
        records,
        lambda image: segmenter.segment(image),
        config,
        checkpoint_dir=checkpoint_dir,
        log_path=log_path,
    )
    click.echo(
        f"trained {len(history['train'])} epoch(s); best epoch {history['best_epoch']} "
        f"(monitored loss {min(history['monitored']):.6f})"
    )


@main.command("train-inpaint")
@click.option("--corpus", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--checkpoints", "checkpoint_dir", type=click.Path(), default="checkpoints")
@click.option("--log", "log_path", type=click.Path(), default=None)
@click.option("--steps", type=int, default=None, help="cap total updates (else epochs)")
def train_inpaint(corpus, config_path, checkpoint_dir, log_path, steps):
    """Train the fill generator/discriminator pair on an image directory."""
    import cv2
    import numpy as np

    config = _training_config(config_path)
    paths = sorted(
        os.path.join(corpus, name)
        for name in os.listdir(corpus)
        if name.lower().endswith((".png", ".jpg", ".jpeg"))
    )
    if not paths:
        raise click.ClickException(f"no images found under {corpus}")
    side = config.input_resolution
    images = []
    for p in paths:
        img = load_image(p)
        if img.shape[:2] != (side, side):
            img = np.clip(
                cv2.resize(img, (side, side), interpolation=cv2.INTER_AREA), 0.0, 1.0
            )
        images.append(img)
    _, _, history = train_inpaint_model(
        images,
        object_masks=None,
        stroke_spec=StrokeMaskSpec(seed=config.seed),
        config=config,
        steps=steps,
        checkpoint_dir=checkpoint_dir,
        log_path=log_path,
    )
    click.echo(f"ran {len(history)} step(s); final loss_g {history[-1]['loss_g']:.6f}")


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
def serve(config_path):
    """Run the HTTP service."""
    config = ServiceConfig.from_yaml(config_path) if config_path else ServiceConfig()
    run_service(config)


if __name__ == "__main__":
    main()
