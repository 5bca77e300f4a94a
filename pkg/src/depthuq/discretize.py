"""Depth hypothesis grids, expectation decoding, and soft labels.

Depth is predicted as a per-pixel categorical distribution over M fixed
hypothesis values.  This module owns the hypothesis grid, the expected
depth read-out, the distance-shaped soft target distributions used for
the probability loss, and the shared stable softmax.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .gridio import valid_mask

DEFAULT_GAMMA = 20.0


@dataclass(frozen=True)
class DepthHypotheses:
    """Strictly increasing vector of candidate depths (meters)."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 1 or vals.size < 2:
            raise ValueError("need a 1-D vector of >= 2 hypotheses")
        if not np.all(np.diff(vals) > 0):
            raise ValueError("hypotheses must be strictly increasing")
        object.__setattr__(self, "values", vals)

    @property
    def m(self) -> int:
        return self.values.size

    @property
    def d_min(self) -> float:
        return float(self.values[0])

    @property
    def d_max(self) -> float:
        return float(self.values[-1])


@dataclass(frozen=True)
class SoftLabelVolume:
    """Per-pixel target distributions peaked at the hypothesis nearest GT.

    ``valid`` is False where the ground truth was missing; those rows
    are all zero and must be excluded from losses.
    """

    values: np.ndarray
    gamma: float
    valid: np.ndarray


def linear_hypotheses(d_min: float, d_max: float, m: int) -> DepthHypotheses:
    """Endpoint-inclusive linear grid of ``m`` depths over [d_min, d_max]."""
    d_min = float(d_min)
    d_max = float(d_max)
    m = int(m)
    if not (0.0 < d_min < d_max):
        raise ValueError(f"need 0 < d_min < d_max, got [{d_min}, {d_max}]")
    if m < 2:
        raise ValueError(f"need >= 2 hypotheses, got {m}")
    return DepthHypotheses(np.linspace(d_min, d_max, m))


def expectation_depth(hyp: DepthHypotheses, vol) -> np.ndarray:
    """Expected depth per pixel: the probability-weighted hypothesis sum.

    ``vol`` has the hypothesis axis last; any leading shape is allowed.
    The result is clipped to [d_min, d_max], which only trims float
    round-off (the exact value is a convex combination).
    """
    p = np.asarray(vol, dtype=np.float64)
    if p.shape[-1] != hyp.m:
        raise ValueError(f"volume has {p.shape[-1]} bins, hypotheses {hyp.m}")
    d = p @ hyp.values
    return np.clip(d, hyp.d_min, hyp.d_max)


def soft_labels(hyp: DepthHypotheses, gt, gamma: float = DEFAULT_GAMMA) -> SoftLabelVolume:
    """Distance-shaped target distribution for each valid GT pixel.

    y_m ∝ exp(-gamma * |s_m - d|), normalized per pixel.  Larger gamma
    concentrates mass on the nearest hypothesis.  Invalid pixels (NaN
    or <= 0 GT) get an all-zero row and valid=False.
    """
    if gamma <= 0:
        raise ValueError(f"gamma must be > 0, got {gamma}")
    d = np.asarray(gt, dtype=np.float64)
    valid = valid_mask(d)
    dist = gamma * np.abs(hyp.values - np.where(valid, d, hyp.d_min)[..., None])
    # subtract the row minimum before exp so gamma*|s-d| can be large
    w = np.exp(-(dist - dist.min(axis=-1, keepdims=True)))
    y = w / w.sum(axis=-1, keepdims=True)
    y[~valid] = 0.0
    return SoftLabelVolume(values=y, gamma=float(gamma), valid=valid)


def softmax_volume(z) -> np.ndarray:
    """Stable softmax along the last axis; rows sum to 1 within 1e-12."""
    zz = np.asarray(z, dtype=np.float64)
    shifted = zz - zz.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def bilinear_bin_weights(hyp: DepthHypotheses, depth):
    """Lower bin index and its weight for depths inside the grid.

    A depth d with s_lo <= d <= s_hi gets weight (s_hi-d)/(s_hi-s_lo)
    on the lower bin and the remainder on the upper one; a depth equal
    to a hypothesis puts full weight there.  Caller must pre-filter
    depths to [d_min, d_max].

    Returns (lo, w_lo) with lo in [0, M-2].
    """
    d = np.asarray(depth, dtype=np.float64)
    s = hyp.values
    lo = np.searchsorted(s, d, side="right") - 1
    lo = np.clip(lo, 0, hyp.m - 2)
    width = s[lo + 1] - s[lo]
    w_lo = (s[lo + 1] - d) / width
    return lo, np.clip(w_lo, 0.0, 1.0)
