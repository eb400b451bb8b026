#!/usr/bin/env python3
"""
GAN Forensics - Command-line entry point
Synthesize corpora, split manifests, extract co-occurrence features, train and
evaluate detectors/attributors, localize, embed and sweep robustness grids

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import click

from config.settings import LOG_LEVELS, configure_logging, load_settings
from controllers.checkpoint_store import fingerprint, load_checkpoint, save_checkpoint
from controllers.file_handler import FileHandler
from core.categories import (
    JPEG_FLAG_VALUES, PAIR_PRESETS, PATCH_SIZES, JPEG_QUALITIES, parse_jpeg_flag,
)
from core.errors import ForensicsError, ManifestError
from core.imagecore import decode_image
from core.models import (
    ARCH_PRESETS, ArchConfig, HeadKind, ManifestRecord, PairSubset, PatchSpec, PreprocPolicy,
    Split, TsneConfig,
)
from core.network import build
from core.nn import AdamConfig
from services.dataset_service import (
    class_names, dump_features, ingest_folder, leave_one_out_plan, records_in,
    separability_oracle, split_manifest,
)
from services.embedding_service import (
    DEFAULT_CAP_PER_CLASS, DEFAULT_PCA_DIM, extract_embeddings, pca_reduce, plot_embedding,
    save_embeddings, save_layout, tsne,
)
from services.localization_service import heatmap, render
from services.synth_service import MANIFEST_NAME, default_spec, synth_generate
from services.training_service import (
    TrainConfig, decide, evaluate, history_of, model_from_checkpoint, predict_records,
    sweep_grid, train,
)

logger = logging.getLogger("gan_forensics")


# ============================================================================
# HELPERS
# ============================================================================

def echo_config(command: str, config: Dict[str, Any]) -> None:
    """Print and log the effective configuration of a command"""
    click.echo(f"{command} config: {json.dumps(config, sort_keys=True, default=str)}")
    logger.info("%s config: %s", command, json.dumps(config, sort_keys=True, default=str))


def threads_option(f):
    return click.option("--threads", type=click.IntRange(min=1), default=None,
                        help="Worker threads (1 = bit-reproducible)")(f)


def seed_option(f):
    return click.option("--seed", type=int, default=0, show_default=True, help="RNG seed")(f)


def policy_options(f):
    f = click.option("--jpeg", type=click.Choice(sorted(JPEG_FLAG_VALUES)), default=None,
                     help="JPEG preprocessing (mixed = equal draw over 75/85/90/none)")(f)
    f = click.option("--pairs", type=click.Choice(sorted(PAIR_PRESETS)), default=None,
                     help="Pixel-pair directions")(f)
    f = click.option("--stride", type=click.IntRange(min=1), default=None,
                     help="Patch stride in pixels")(f)
    f = click.option("--patch-size", type=click.IntRange(min=2), default=None,
                     help="Patch size in pixels (default: whole image)")(f)
    return f


def build_policy(base: Optional[PreprocPolicy], patch_size: Optional[int], stride: Optional[int],
                 pairs: Optional[str], jpeg: Optional[str], seed: int) -> PreprocPolicy:
    """Policy from flags; unset flags keep the base policy's values"""
    policy = base or PreprocPolicy(rng_seed=seed)
    changes: Dict[str, Any] = {}
    if patch_size is not None:
        changes["patch"] = PatchSpec(patch_size, stride or max(1, patch_size // 2))
    elif stride is not None and policy.patch is not None:
        changes["patch"] = PatchSpec(policy.patch.size, stride)
    if pairs is not None:
        changes["subset"] = PairSubset.from_tag(pairs)
    if jpeg is not None:
        changes["jpeg_qualities"] = parse_jpeg_flag(jpeg)
    return policy.with_changes(**changes) if changes else policy


def policy_summary(policy: PreprocPolicy) -> Dict[str, Any]:
    return {
        "pairs": policy.subset.tag,
        "patch": policy.patch.to_dict() if policy.patch else "whole",
        "jpeg": policy.jpeg_qualities,
        "policy_seed": policy.rng_seed,
    }


def read_records(manifest: Path, split: Optional[str] = None) -> List[ManifestRecord]:
    records = FileHandler.read_manifest(manifest)
    if split and split != "all":
        records = records_in(records, split)
        if not records:
            raise ManifestError(f"No records in the {split} split of {manifest}")
    return records


def image_records(images: Sequence[Path]) -> List[ManifestRecord]:
    return [ManifestRecord(path=str(p), label="unlabeled", group_id=str(p)) for p in images]


def input_depth(records: Sequence[ManifestRecord], subset: PairSubset) -> int:
    """Feature depth of the corpus (channels of its first image times the pair count)"""
    return decode_image(records[0].path).channels * len(subset)


def parse_values(text: Optional[str]) -> Optional[List[Any]]:
    """Comma-separated grid values; 'none' or 'whole' mean None"""
    if text is None:
        return None
    values: List[Any] = []
    for token in text.split(","):
        token = token.strip().lower()
        if token in ("none", "whole"):
            values.append(None)
        else:
            values.append(int(token))
    return values


# ============================================================================
# CLI GROUP
# ============================================================================

@click.group(invoke_without_command=True)
@click.option("--log-level", type=click.Choice(LOG_LEVELS, case_sensitive=False), default=None,
              help="Logging verbosity (default: GANFOR_LOG_LEVEL or INFO)")
@click.pass_context
def cli(ctx: click.Context, log_level: Optional[str]):
    """Co-occurrence GAN image forensics toolkit."""
    settings = load_settings()
    configure_logging(log_level or settings.log_level)
    ctx.obj = settings
    if ctx.invoked_subcommand is None:
        click.echo(ctx.get_help())
        ctx.exit(2)


def resolve_threads(ctx: click.Context, threads: Optional[int]) -> int:
    return threads if threads is not None else ctx.obj.threads


def resolve_output(ctx: click.Context, given: Optional[Path], name: str) -> Path:
    """An explicit --out, else <GANFOR_OUTPUT_DIR>/<name>"""
    return given if given is not None else ctx.obj.output_dir / name


# ============================================================================
# CORPUS COMMANDS
# ============================================================================

@cli.command()
@click.option("--out", "out_dir", type=click.Path(file_okay=False, path_type=Path), default=None,
              help="Corpus directory (default: <output dir>/synth)")
@click.option("--classes", "class_count", type=click.IntRange(2, 6), default=2, show_default=True,
              help="Number of texture classes")
@click.option("--size", type=click.IntRange(min=2), default=256, show_default=True,
              help="Image side in pixels")
@click.option("--per-class-images", type=click.IntRange(min=1), default=2000, show_default=True,
              help="Images per class")
@seed_option
@threads_option
@click.pass_context
def synth(ctx, out_dir: Path, class_count: int, size: int, per_class_images: int, seed: int,
          threads: Optional[int]):
    """Generate a synthetic texture corpus and its manifest."""
    spec = default_spec(class_count, image_size=size, images_per_class=per_class_images,
                        rng_seed=seed)
    threads = resolve_threads(ctx, threads)
    out_dir = resolve_output(ctx, out_dir, "synth")
    echo_config("synth", dict(spec.to_dict(), out=str(out_dir), threads=threads))
    records = synth_generate(spec, out_dir, threads=threads)
    click.echo(f"✓ Wrote {len(records)} images and {out_dir / MANIFEST_NAME}")


@cli.command()
@click.option("--manifest", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              required=True, help="Input manifest (JSON lines)")
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), required=True,
              help="Output manifest with splits")
@click.option("--fractions", nargs=3, type=float, default=(0.90, 0.05, 0.05), show_default=True,
              help="Train, val and test fractions")
@seed_option
def split(manifest: Path, out: Path, fractions, seed: int):
    """Assign group-aware train/val/test splits."""
    echo_config("split", {"manifest": str(manifest), "out": str(out),
                          "fractions": list(fractions), "seed": seed})
    records = split_manifest(FileHandler.read_manifest(manifest), tuple(fractions), seed)
    FileHandler.write_manifest(out, records)
    for name in (Split.TRAIN, Split.VAL, Split.TEST):
        click.echo(f"  {name.value:<6} {len(records_in(records, name)):>7}")
    click.echo(f"✓ Wrote {out}")


@cli.command()
@click.option("--manifest", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              required=True)
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), required=True,
              help="Feature container path")
@click.option("--split", "split_name", type=click.Choice(["all"] + [s.value for s in Split]),
              default="all", show_default=True)
@policy_options
@seed_option
@threads_option
@click.pass_context
def extract(ctx, manifest: Path, out: Path, split_name: str, patch_size, stride, pairs, jpeg,
            seed: int, threads: Optional[int]):
    """Write co-occurrence feature tensors for a manifest."""
    policy = build_policy(None, patch_size, stride, pairs, jpeg, seed)
    threads = resolve_threads(ctx, threads)
    echo_config("extract", dict(policy_summary(policy), manifest=str(manifest), out=str(out),
                                split=split_name, seed=seed, threads=threads))
    records = read_records(manifest, split_name)
    dump_features(records, policy, out, threads=threads)
    click.echo(f"✓ Wrote features for {len(records)} records to {out} "
               f"(fingerprint {fingerprint(out)})")


@cli.command()
@click.option("--root", type=click.Path(exists=True, file_okay=False, path_type=Path),
              required=True, help="Folder laid out as <root>/<class>/<image>")
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), required=True,
              help="Output manifest (JSON lines)")
@seed_option
def ingest(root: Path, out: Path, seed: int):
    """Build a manifest from a folder of class subfolders."""
    echo_config("ingest", {"root": str(root), "out": str(out), "seed": seed})
    records = ingest_folder(root)
    FileHandler.write_manifest(out, records)
    for name in class_names(records):
        click.echo(f"  {name:<12} {sum(1 for r in records if r.label == name):>7}")
    click.echo(f"✓ Wrote {len(records)} records to {out}")


@cli.command()
@click.option("--manifest", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              required=True, help="Two-class manifest (splits optional)")
@click.option("--pairs", type=click.Choice(sorted(PAIR_PRESETS)), default="hvda",
              show_default=True)
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), default=None,
              help="JSON result")
@seed_option
def oracle(manifest: Path, pairs: str, out: Optional[Path], seed: int):
    """Check two classes are separable by a diagonal-mass threshold."""
    echo_config("oracle", {"manifest": str(manifest), "pairs": pairs, "seed": seed})
    result = separability_oracle(FileHandler.read_manifest(manifest), PairSubset.from_tag(pairs))
    click.echo(f"threshold {result.threshold:.6f}: above = {result.above_label}, "
               f"below = {result.below_label}")
    click.echo(f"train accuracy: {result.train_accuracy:.4f}")
    click.echo(f"test accuracy: {result.test_accuracy:.4f}")
    if out:
        FileHandler.write_json(out, result.to_dict())
        click.echo(f"✓ Wrote {out}")


# ============================================================================
# TRAINING COMMANDS
# ============================================================================

def training_options(f):
    f = click.option("--lr", type=float, default=1e-4, show_default=True,
                     help="Adam learning rate")(f)
    f = click.option("--cache-features", is_flag=True,
                     help="Keep computed features in memory across epochs")(f)
    f = click.option("--val-batches", type=click.IntRange(min=1), default=50, show_default=True)(f)
    f = click.option("--batches-per-epoch", type=click.IntRange(min=1), default=100,
                     show_default=True)(f)
    f = click.option("--per-class", type=click.IntRange(min=1), default=None,
                     help="Records per class per attribution batch")(f)
    f = click.option("--batch-size", type=click.IntRange(min=1), default=64, show_default=True)(f)
    f = click.option("--epochs", type=click.IntRange(min=0), default=20, show_default=True)(f)
    f = click.option("--scale", type=click.Choice(sorted(ARCH_PRESETS)), default="mini",
                     show_default=True, help="Architecture preset")(f)
    return f


def make_train_config(epochs, batch_size, per_class, batches_per_epoch, val_batches, lr,
                      cache_features, seed, threads) -> TrainConfig:
    return TrainConfig(epochs=epochs, batches_per_epoch=batches_per_epoch, val_batches=val_batches,
                       batch_size=batch_size, per_class=per_class, adam=AdamConfig(lr=lr),
                       seed=seed, threads=threads, cache_features=cache_features)


@cli.command("train")
@click.option("--manifest", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              required=True, help="Manifest with splits assigned")
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), required=True,
              help="Checkpoint path")
@click.option("--task", type=click.Choice(["detect", "attribute"]), default="detect",
              show_default=True)
@click.option("--classes", default=None, help="Comma-separated attribution class order")
@click.option("--holdout", default=None, help="Generator class to leave out of training")
@training_options
@policy_options
@seed_option
@threads_option
@click.pass_context
def train_command(ctx, manifest: Path, out: Path, task: str, classes: Optional[str],
                  holdout: Optional[str], scale: str, epochs: int, batch_size: int,
                  per_class: Optional[int], batches_per_epoch: int, val_batches: int,
                  cache_features: bool, lr: float, patch_size, stride, pairs, jpeg, seed: int,
                  threads: Optional[int]):
    """Train a detector or attributor and keep the best-validation checkpoint."""
    threads = resolve_threads(ctx, threads)
    policy = build_policy(None, patch_size, stride, pairs, jpeg, seed)
    config = make_train_config(epochs, batch_size, per_class, batches_per_epoch, val_batches, lr,
                               cache_features, seed, threads)
    records = FileHandler.read_manifest(manifest)
    if holdout:
        plan = leave_one_out_plan(records, holdout, seed)
        records = plan.train + plan.val

    order = [c.strip() for c in classes.split(",")] if classes else None
    if order:
        records = [r for r in records if r.label in set(order)]
    train_records = records_in(records, Split.TRAIN)
    if not train_records:
        raise ManifestError(f"No records in the train split of {manifest}")

    head = HeadKind.DETECTION.value if task == "detect" else HeadKind.ATTRIBUTION.value
    num_classes = 2 if task == "detect" else len(order or class_names(train_records))
    arch = ArchConfig.preset(scale, input_depth(train_records, policy.subset), head, num_classes)

    echo_config("train", dict(policy_summary(policy), manifest=str(manifest), out=str(out),
                              task=task, holdout=holdout, scale=scale, classes=order,
                              train=config.to_dict()))
    model = build(arch, seed=seed)
    click.echo(f"Model: {scale} preset, {model.parameter_count():,} parameters")
    ckpt = train(model, records, policy, config, classes=order)

    save_checkpoint(ckpt, out)
    history_csv = out.with_suffix(".history.csv")
    history_of(ckpt).write_csv(history_csv)
    click.echo(f"✓ Best val accuracy {ckpt.metadata['best_val_acc']} at epoch "
               f"{ckpt.metadata['best_epoch']}; wrote {out} (fingerprint {fingerprint(out)}) "
               f"and {history_csv}")


# ============================================================================
# INFERENCE COMMANDS
# ============================================================================

def inference_inputs(manifest: Optional[Path], images: Sequence[Path],
                     split_name: str) -> List[ManifestRecord]:
    if manifest is None and not images:
        raise click.UsageError("Give --manifest or one or more image paths")
    records = read_records(manifest, split_name) if manifest else []
    return records + image_records(images)


def inference_command(name: str):
    """Shared options of detect and attribute"""
    def decorate(f):
        f = click.argument("images", nargs=-1, type=click.Path(exists=True, dir_okay=False,
                                                               path_type=Path))(f)
        f = click.option("--model", "model_path", required=True,
                         type=click.Path(exists=True, dir_okay=False, path_type=Path))(f)
        f = click.option("--manifest", type=click.Path(exists=True, dir_okay=False, path_type=Path),
                         default=None)(f)
        f = click.option("--split", "split_name",
                         type=click.Choice(["all"] + [s.value for s in Split]), default="all",
                         show_default=True)(f)
        f = click.option("--out", type=click.Path(dir_okay=False, path_type=Path), default=None,
                         help="JSON results")(f)
        f = click.option("--batch-size", type=click.IntRange(min=1), default=32,
                         show_default=True)(f)
        f = policy_options(f)
        f = seed_option(f)
        f = threads_option(f)
        return cli.command(name)(click.pass_context(f))
    return decorate


def run_inference(ctx, task: str, model_path: Path, manifest, images, split_name, out,
                  batch_size, patch_size, stride, pairs, jpeg, seed, threads):
    threads = resolve_threads(ctx, threads)
    ckpt = load_checkpoint(model_path)
    if task == "detect" and not ckpt.is_detection:
        raise ForensicsError(f"{model_path} is an attribution model; use 'attribute'")
    if task == "attribute" and ckpt.is_detection:
        raise ForensicsError(f"{model_path} is a detection model; use 'detect'")
    policy = build_policy(ckpt.policy, patch_size, stride, pairs, jpeg, seed)
    model_fp = fingerprint(model_path)
    echo_config(task, dict(policy_summary(policy), model=str(model_path), fingerprint=model_fp,
                           manifest=str(manifest) if manifest else None, images=len(images),
                           split=split_name, seed=seed, threads=threads))

    records = inference_inputs(manifest, images, split_name)
    model = model_from_checkpoint(ckpt)
    probabilities = predict_records(model, records, policy, batch_size, threads,
                                    show_progress=len(records) > batch_size)
    predicted = decide(probabilities, ckpt.is_detection)

    results = []
    for record, probs, index in zip(records, probabilities, predicted):
        if ckpt.is_detection:
            verdict = ckpt.classes[index]
            click.echo(f"{record.path}\t{probs[0]:.4f}\t{verdict}")
            results.append({"path": record.path, "label": record.label,
                            "probability": float(probs[0]), "verdict": verdict})
        else:
            listing = " ".join(f"{c}={p:.4f}" for c, p in zip(ckpt.classes, probs))
            click.echo(f"{record.path}\t{listing}\t{ckpt.classes[index]}")
            results.append({"path": record.path, "label": record.label,
                            "probabilities": dict(zip(ckpt.classes, map(float, probs))),
                            "prediction": ckpt.classes[index]})

    summary: Dict[str, Any] = {"fingerprint": model_fp, "results": results}
    labeled = [r for r in records if r.label != "unlabeled"]
    if labeled:
        report = evaluate(ckpt, labeled, policy, batch_size=batch_size, threads=threads,
                          fingerprint=model_fp, model=model)
        click.echo(f"accuracy: {report.accuracy:.4f}")
        if not ckpt.is_detection:
            click.echo(f"equal-prior accuracy: {report.equal_prior_accuracy:.4f}")
        summary["report"] = report.to_dict()
    if out:
        FileHandler.write_json(out, summary)
        click.echo(f"✓ Wrote {out}")


@inference_command("detect")
def detect(ctx, **options):
    """Print the GAN probability and verdict (threshold 0.5) per image."""
    run_inference(ctx, "detect", **options)


@inference_command("attribute")
def attribute(ctx, **options):
    """Print per-class probabilities and the argmax class per image."""
    run_inference(ctx, "attribute", **options)


@cli.command()
@click.argument("images", nargs=-1, required=True,
                type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--model", "model_path", required=True,
              type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--patch-size", type=click.IntRange(min=2), default=128, show_default=True)
@click.option("--stride", type=click.IntRange(min=1), default=8, show_default=True)
@click.option("--pairs", type=click.Choice(sorted(PAIR_PRESETS)), default=None,
              help="Pair directions (default: the model's)")
@click.option("--out", "out_dir", type=click.Path(file_okay=False, path_type=Path), default=None,
              help="Output directory (default: <output dir>/heatmaps)")
@seed_option
@threads_option
@click.pass_context
def localize(ctx, images, model_path: Path, patch_size: int, stride: int, pairs: Optional[str],
             out_dir: Optional[Path], seed: int, threads: Optional[int]):
    """Write a GAN-probability heatmap PNG and raw-score sidecar per image."""
    threads = resolve_threads(ctx, threads)
    out_dir = resolve_output(ctx, out_dir, "heatmaps")
    ckpt = load_checkpoint(model_path)
    patch = PatchSpec(patch_size, stride)
    subset = PairSubset.from_tag(pairs) if pairs else ckpt.subset
    echo_config("localize", {"model": str(model_path), "fingerprint": fingerprint(model_path),
                             "patch": patch.to_dict(), "pairs": subset.tag, "jpeg": None,
                             "seed": seed, "threads": threads, "images": len(images),
                             "out": str(out_dir)})
    for image_path in images:
        hm = heatmap(decode_image(image_path), ckpt, patch, subset, threads=threads)
        target = out_dir / f"{image_path.stem}_heatmap.png"
        png, side = render(hm, target)
        click.echo(f"{image_path}\tmean={float(hm.scores.mean()):.4f}\t{png}\t{side}")


@cli.command()
@click.option("--model", "model_path", required=True,
              type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--manifest", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              required=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False, path_type=Path), default=None,
              help="Output directory (default: <output dir>/embeddings)")
@click.option("--split", "split_name", type=click.Choice(["all"] + [s.value for s in Split]),
              default="all", show_default=True)
@click.option("--cap", type=click.IntRange(min=1), default=DEFAULT_CAP_PER_CLASS,
              show_default=True, help="Maximum images per class")
@click.option("--pca-dim", type=click.IntRange(min=1), default=DEFAULT_PCA_DIM, show_default=True)
@click.option("--perplexity", type=float, default=30.0, show_default=True)
@click.option("--iterations", type=click.IntRange(min=1), default=1000, show_default=True)
@seed_option
@threads_option
@click.pass_context
def embed(ctx, model_path: Path, manifest: Path, out_dir: Path, split_name: str, cap: int,
          pca_dim: int, perplexity: float, iterations: int, seed: int, threads: Optional[int]):
    """Export penultimate features, reduce with PCA and lay out with t-SNE."""
    threads = resolve_threads(ctx, threads)
    out_dir = resolve_output(ctx, out_dir, "embeddings")
    ckpt = load_checkpoint(model_path)
    cfg = TsneConfig(perplexity=perplexity, iterations=iterations, seed=seed)
    echo_config("embed", dict(policy_summary(ckpt.policy), model=str(model_path),
                              fingerprint=fingerprint(model_path), cap=cap, pca_dim=pca_dim,
                              tsne=cfg.__dict__, threads=threads, out=str(out_dir)))

    embeddings = extract_embeddings(ckpt, read_records(manifest, split_name), cap, seed=seed,
                                    threads=threads)
    reduced = pca_reduce(embeddings, pca_dim)
    result = tsne(reduced, cfg, threads=threads, show_progress=True)

    save_embeddings(embeddings, out_dir / "embeddings.jsonl")
    save_layout(result.layout, embeddings, out_dir / "layout.csv")
    plot_path, legend = plot_embedding(result.layout, embeddings.labels, out_dir / "tsne.png")
    click.echo(f"✓ {len(embeddings)} points, final KL {result.kl_history[-1]:.4f}, "
               f"classes {legend}; wrote {out_dir}")


@cli.command()
@click.option("--manifest", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              required=True)
@click.option("--grid", type=click.Choice(["patch", "jpeg"]), required=True)
@click.option("--values", default=None,
              help="Comma-separated grid values (default: 64,128,256 or 75,85,90,none)")
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), required=True,
              help="Sweep matrix JSON")
@training_options
@policy_options
@seed_option
@threads_option
@click.pass_context
def sweep(ctx, manifest: Path, grid: str, values: Optional[str], out: Path, scale: str, epochs: int,
          batch_size: int, per_class, batches_per_epoch: int, val_batches: int,
          cache_features: bool, lr: float, patch_size, stride, pairs, jpeg, seed: int,
          threads: Optional[int]):
    """Train at every grid value and test at every grid value."""
    threads = resolve_threads(ctx, threads)
    axis_values = parse_values(values) or (
        list(PATCH_SIZES) if grid == "patch" else list(JPEG_QUALITIES))
    policy = build_policy(None, patch_size, stride, pairs, jpeg, seed)
    config = make_train_config(epochs, batch_size, per_class, batches_per_epoch, val_batches, lr,
                               cache_features, seed, threads)
    records = FileHandler.read_manifest(manifest)
    train_records = records_in(records, Split.TRAIN)
    if not train_records:
        raise ManifestError(f"No records in the train split of {manifest}")
    arch = ArchConfig.preset(scale, input_depth(train_records, policy.subset))

    echo_config("sweep", dict(policy_summary(policy), manifest=str(manifest), grid=grid,
                              values=axis_values, scale=scale, train=config.to_dict()))
    result = sweep_grid(grid, axis_values, axis_values, records, arch, policy, config)
    FileHandler.write_json(out, result.to_dict())
    click.echo(result.table())
    click.echo(f"✓ Wrote {out}")


@cli.command("eval")
@click.option("--model", "model_path", required=True,
              type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--manifest", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              required=True)
@click.option("--split", "split_name", type=click.Choice(["all"] + [s.value for s in Split]),
              default="test", show_default=True)
@click.option("--holdout", default=None, help="Evaluate on a leave-one-out test set")
@click.option("--batch-size", type=click.IntRange(min=1), default=64, show_default=True)
@click.option("--test-batches", type=click.IntRange(min=1), default=2000, show_default=True,
              help="Cap on evaluated batches")
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), default=None,
              help="EvalReport JSON")
@policy_options
@seed_option
@threads_option
@click.pass_context
def eval_command(ctx, model_path: Path, manifest: Path, split_name: str, holdout: Optional[str],
                 batch_size: int, test_batches: int, out: Optional[Path], patch_size, stride,
                 pairs, jpeg, seed: int, threads: Optional[int]):
    """Evaluate a checkpoint and print accuracy, equal-prior accuracy and confusion."""
    threads = resolve_threads(ctx, threads)
    ckpt = load_checkpoint(model_path)
    policy = build_policy(ckpt.policy, patch_size, stride, pairs, jpeg, seed)
    model_fp = fingerprint(model_path)
    echo_config("eval", dict(policy_summary(policy), model=str(model_path), fingerprint=model_fp,
                             manifest=str(manifest), split=split_name, holdout=holdout,
                             seed=seed, threads=threads))

    if holdout:
        records = leave_one_out_plan(FileHandler.read_manifest(manifest), holdout, seed).test
    else:
        records = read_records(manifest, split_name)
    report = evaluate(ckpt, records, policy, batch_size=batch_size, test_batches_cap=test_batches,
                      threads=threads, fingerprint=model_fp, show_progress=True)

    click.echo(f"accuracy: {report.accuracy:.4f}")
    click.echo(f"equal-prior accuracy: {report.equal_prior_accuracy:.4f}")
    width = max(len(c) for c in ckpt.classes) + 2
    click.echo(" " * width + "".join(f"{c:>{width}}" for c in ckpt.classes))
    for name, row in zip(ckpt.classes, report.confusion.counts):
        click.echo(f"{name:<{width}}" + "".join(f"{n:>{width}}" for n in row))
    if out:
        FileHandler.write_json(out, report.to_dict())
        click.echo(f"✓ Wrote {out}")


# ============================================================================
# ENTRY POINT
# ============================================================================

def run(argv: Optional[Sequence[str]] = None) -> int:
    """
    Run the CLI and return its exit code

    Returns:
        0 on success, 1 on a runtime failure, 2 on a usage error
    """
    try:
        result = cli.main(args=list(argv) if argv is not None else None,
                          prog_name="gan-forensics", standalone_mode=False)
    except click.UsageError as e:
        e.show()
        return 2
    except click.ClickException as e:
        e.show()
        return 1
    except click.Abort:
        click.echo("Aborted!", err=True)
        return 1
    except (ForensicsError, OSError, ValueError, FloatingPointError) as e:
        click.echo(f"Error: {e}", err=True)
        return 1
    return result if isinstance(result, int) else 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
