"""Latent-space stitching maps, attribute probes and similarity metrics for
generative image models, with a synthetic ground-truth harness."""

from . import data, errors, linalg, mapfit, metrics, pipeline, probes, synth

__version__ = "0.1.0"

__all__ = [
    "data",
    "errors",
    "linalg",
    "mapfit",
    "metrics",
    "pipeline",
    "probes",
    "synth",
    "__version__",
]
