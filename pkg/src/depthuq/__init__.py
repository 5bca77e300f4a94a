"""Depth-as-classification uncertainty toolkit.

Per-pixel depth from discrete hypotheses with entropy-based
uncertainty, the auto-weighted training losses and their exact
gradients, evaluation metrics for uncertainty quality, a synthetic
trainer reproducing the ablation, and a probability-frustum voxelizer
with an emission-absorption renderer.
"""

__version__ = "0.1.0"
