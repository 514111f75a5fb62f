"""Underwater image restoration with a WGAN-GP trained U-Net.

Images are H x W x 3 float32 arrays with values in [-1, 1].
"""

from ._core import (
    Error,
    Generator,
    UsageError,
    canny_edges,
    edge_distance,
    export_generator,
    gdl,
    gdl_sum,
    l1_loss,
    load_image,
    patch_gdl,
    patch_stats,
    save_image,
    synth_distort,
    synthetic_scene,
    underwater_preset,
)

__all__ = [
    "Error",
    "Generator",
    "UsageError",
    "canny_edges",
    "edge_distance",
    "export_generator",
    "gdl",
    "gdl_sum",
    "l1_loss",
    "load_image",
    "patch_gdl",
    "patch_stats",
    "save_image",
    "synth_distort",
    "synthetic_scene",
    "underwater_preset",
]
