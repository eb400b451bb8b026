#!/usr/bin/env python3
"""
Create composite test images for localization checks
Left half from one synthetic class, right half from another
"""

from pathlib import Path
from typing import List, Tuple, Union

import click

from core.imagecore import encode_png
from core.models import PixelImage
from services.synth_service import default_spec, synth_image


def composite_image(left: PixelImage, right: PixelImage) -> PixelImage:
    """
    Join the left half of one image with the right half of another

    Args:
        left: Image supplying columns [0, W/2)
        right: Image supplying columns [W/2, W)

    Returns:
        Image with the shared dimensions
    """
    if (left.width, left.height, left.channels) != (right.width, right.height, right.channels):
        raise ValueError("Composite halves must share width, height and channels")
    array = left.as_array().copy()
    half = left.width // 2
    array[:, half:] = right.as_array()[:, half:]
    return PixelImage.from_array(array)


def create_composites(out_dir: Union[str, Path], count: int = 200, size: int = 256,
                      seed: int = 0) -> List[Tuple[Path, int]]:
    """
    Write composites of the default 2-class synthetic textures

    Uses image indices beyond any training corpus of the same seed so
    composites never reuse training textures.

    Returns:
        List of (path, split column) pairs
    """
    spec = default_spec(2, image_size=size, images_per_class=1, rng_seed=seed)
    out_dir = Path(out_dir)
    written = []
    for i in range(count):
        index = 1_000_000 + i
        image = composite_image(synth_image(spec, 0, index), synth_image(spec, 1, index))
        path = encode_png(image, out_dir / f"composite_{i:04d}.png")
        written.append((path, size // 2))
    click.echo(f"✓ Created {len(written)} composites in {out_dir}")
    return written


@click.command()
@click.option("--out", "out_dir", default="output/composites", type=click.Path(path_type=Path),
              help="Destination directory")
@click.option("--count", default=200, show_default=True, help="Number of composites")
@click.option("--size", default=256, show_default=True, help="Image side in pixels")
@click.option("--seed", default=0, show_default=True, help="Texture seed")
def main(out_dir: Path, count: int, size: int, seed: int):
    """Create composite test images"""
    click.echo("=" * 70)
    click.echo("CREATING COMPOSITE TEST IMAGES")
    click.echo("=" * 70)
    create_composites(out_dir, count=count, size=size, seed=seed)
    click.echo("  • Left half: real texture, right half: gan texture")


if __name__ == "__main__":
    main()
