"""Pair-refinement graph convolutions with a sparse edge encoding.

Modules: `graphs` (graph type, transforms, datasets), `wl` (color
refinement), `encoding` (referenced pair rows), `tensor` (reverse-mode
autodiff), `layers` (convolutions, pooling, models), `bench`
(training, cross-validation, timing, comparisons).
"""

from .graphs import Graph, GraphError

__all__ = ["Graph", "GraphError"]
__version__ = "0.1.0"
