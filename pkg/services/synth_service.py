#!/usr/bin/env python3
"""
Synthetic Corpus Service - Texture classes separable by pixel-pair statistics

Class k: seeded white noise smoothed to the class autocorrelation length,
rank-equalized to a flat 0-255 histogram, perturbed by the class noise
amplitude, then quantized to the class step. Equalization removes first-order
differences (mean and variance match across classes); the quantization step
shapes the co-occurrence support.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np
from scipy.ndimage import gaussian_filter
from scipy.stats import rankdata
from tqdm import tqdm

from controllers.file_handler import FileHandler
from core.categories import synth_preset
from core.imagecore import encode_png
from core.models import ManifestRecord, PixelImage, SynthSpec, record_seed

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.jsonl"
SYNTH_CHANNELS = 3


def default_spec(class_count: int = 2, **overrides) -> SynthSpec:
    """SynthSpec from the preset for a class count, with field overrides"""
    params = synth_preset(class_count)
    params.update(overrides)
    return SynthSpec(**params)


def texture_channel(rng: np.random.Generator, size: int, length: float, amplitude: float,
                    step: int) -> np.ndarray:
    """
    One quantized texture plane

    Returns:
        (size, size) uint8 array whose values are all multiples of step
    """
    field = gaussian_filter(rng.standard_normal((size, size)), sigma=length, mode="wrap")
    # Flat histogram: rank / N spread over [0, 256)
    levels = (rankdata(field, method="ordinal").reshape(size, size) - 1) * (256.0 / field.size)
    levels = levels + amplitude * rng.standard_normal((size, size))
    top = (255 // step) * step
    quantized = step * np.floor(levels / step)
    return np.clip(quantized, 0, top).astype(np.uint8)


def synth_image(spec: SynthSpec, class_index: int, image_index: int) -> PixelImage:
    """Generate one image; depends only on (spec, class, image index)"""
    name = spec.class_names[class_index]
    rng = np.random.default_rng(record_seed(spec.rng_seed, f"{name}/{image_index}", "synth"))
    planes = [
        texture_channel(rng, spec.image_size,
                        spec.autocorrelation_lengths[class_index],
                        spec.noise_amplitudes[class_index],
                        spec.quantization_steps[class_index])
        for _ in range(SYNTH_CHANNELS)
    ]
    return PixelImage.from_array(np.stack(planes, axis=-1))


def synth_generate(spec: SynthSpec, out_dir: Union[str, Path], threads: int = 1,
                   show_progress: bool = True) -> List[ManifestRecord]:
    """
    Write a synthetic corpus of PNGs plus its manifest

    Files go to out_dir/<class>/<class>_<index>.png and out_dir/manifest.jsonl.
    Every image gets its own group id. The same spec always yields a
    byte-identical corpus, whatever the thread count.

    Args:
        spec: Corpus parameters
        out_dir: Destination directory
        threads: Worker threads for generation
        show_progress: Show a tqdm bar

    Returns:
        Manifest records (split unassigned)
    """
    out_dir = Path(out_dir)
    jobs = [(k, i) for k in range(spec.class_count) for i in range(spec.images_per_class)]

    def _write(job) -> ManifestRecord:
        k, i = job
        name = spec.class_names[k]
        stem = f"{name}_{i:05d}"
        path = encode_png(synth_image(spec, k, i), out_dir / name / f"{stem}.png")
        return ManifestRecord(path=str(path), label=name, group_id=stem)

    progress = tqdm(total=len(jobs), desc="Generating images", unit="img", disable=not show_progress)
    records: List[Optional[ManifestRecord]] = []
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        for record in pool.map(_write, jobs):
            records.append(record)
            progress.update(1)
    progress.close()

    FileHandler.write_manifest(out_dir / MANIFEST_NAME, records)
    logger.info("Synthetic corpus: %d classes x %d images in %s",
                spec.class_count, spec.images_per_class, out_dir)
    return records


def level_usage(img: PixelImage) -> Dict[int, int]:
    """Histogram of the pixel values actually present"""
    values, counts = np.unique(img.data, return_counts=True)
    return {int(v): int(c) for v, c in zip(values, counts)}
