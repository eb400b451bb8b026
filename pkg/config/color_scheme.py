#!/usr/bin/env python3
"""
Color Scheme System - Heatmap ramp and class palette
Global colors shared by heatmap rendering and embedding plots
"""

from typing import Dict, List, Sequence, Tuple

import matplotlib
from matplotlib.colors import Colormap, Normalize

from core.categories import REAL_CLASS


class ColorScheme:
    """Global color scheme for rendered outputs"""

    def __init__(self):
        self._init_colors()

    def _init_colors(self):
        """Initialize the heatmap ramp and per-class colors"""
        # Heatmap ramp: diverging blue (0.0) -> white (0.5) -> red (1.0)
        self.heatmap_cmap = "bwr"
        self.heatmap_min = 0.0                    # Absolute, not per-image
        self.heatmap_max = 1.0

        # Class colors (fixed order; 'real' always takes the first)
        self.class_palette = [
            "#1976D2",                            # real (blue)
            "#D32F2F",                            # red
            "#388E3C",                            # green
            "#F57C00",                            # orange
            "#7B1FA2",                            # purple
            "#00A8CC",                            # cyan
            "#5D4037",                            # brown
            "#616161",                            # grey
        ]

    def heatmap_colormap(self) -> Colormap:
        return matplotlib.colormaps[self.heatmap_cmap]

    def heatmap_norm(self) -> Normalize:
        return Normalize(vmin=self.heatmap_min, vmax=self.heatmap_max, clip=True)

    def class_colors(self, classes: Sequence[str]) -> Dict[str, str]:
        """Fixed color per class, by position in the class list"""
        return {name: self.class_palette[i % len(self.class_palette)]
                for i, name in enumerate(classes)}

    def endpoint_rgb(self) -> Tuple[Tuple[int, int, int], Tuple[int, int, int]]:
        """8-bit RGB of the ramp at 0.0 and 1.0"""
        cmap = self.heatmap_colormap()
        low, high = cmap(0.0), cmap(1.0)
        return (tuple(int(round(c * 255)) for c in low[:3]),
                tuple(int(round(c * 255)) for c in high[:3]))


# Global color scheme instance
COLORS = ColorScheme()


def class_order(labels: Sequence[str]) -> List[str]:
    """Distinct labels, 'real' first, the rest in first-seen order"""
    distinct = list(dict.fromkeys(labels))
    return sorted(distinct, key=lambda name: name != REAL_CLASS)
