"""Central finite-difference verification of every analytic gradient.

Each check draws random instances, numerically differentiates the
scalar loss with a symmetric stencil, and compares against the closed
form.  The comparison is scaled: a check entry passes when

    |analytic - numeric| <= max(abs_tol, rel_tol * max(|analytic|, |numeric|))

The ranking error branch is treated as a constant by the analytic
code, so the numeric oracle freezes that branch at the base point
before perturbing; otherwise the two sides legitimately disagree.
Instances are redrawn when any absolute-value or hinge kink sits too
close to the evaluation point, where a finite difference is invalid.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .discretize import expectation_depth, linear_hypotheses, soft_labels, softmax_volume
from .losses import (
    auto_weighted_total,
    clamped_entropy_parts,
    depth_l1,
    draw_permutation,
    full_backward,
    ranking_loss_variants,
    soft_label_l1,
)
from .uncertainty import softplus

DEFAULT_STEP = 1e-6
DEFAULT_REL_TOL = 1e-4
DEFAULT_ABS_TOL = 1e-8
# evaluation points closer than this to a kink are redrawn
KINK_CLEARANCE = 1e-4
MAX_REDRAWS = 200


@dataclass(frozen=True)
class GradCheckResult:
    """Outcome of one operation's finite-difference sweep."""

    name: str
    trials: int
    max_scaled: float
    tol: float
    passed: bool
    elapsed_s: float

    def row(self) -> dict:
        return {
            "check": self.name,
            "trials": self.trials,
            "max_scaled": self.max_scaled,
            "tol": self.tol,
            "passed": int(self.passed),
        }


def central_difference(fn, x, h: float = DEFAULT_STEP) -> np.ndarray:
    """Symmetric-stencil gradient of scalar ``fn`` wrt array ``x``."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros(x.size, dtype=np.float64)
    flat = x.ravel().copy()
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + h
        hi = fn(flat.reshape(x.shape))
        flat[i] = keep - h
        lo = fn(flat.reshape(x.shape))
        flat[i] = keep
        grad[i] = (hi - lo) / (2.0 * h)
    return grad.reshape(x.shape)


def scaled_error(analytic, numeric, rel_tol: float = DEFAULT_REL_TOL, abs_tol: float = DEFAULT_ABS_TOL) -> float:
    """Worst entry of |a-n| / max(abs_tol/rel_tol, |a|, |n|).

    A value <= rel_tol means every entry satisfies the combined
    relative-or-absolute criterion.
    """
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    floor = abs_tol / rel_tol
    denom = np.maximum(floor, np.maximum(np.abs(a), np.abs(n)))
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0


def _mask_with_min(rng, shape, min_valid: int) -> np.ndarray:
    for _ in range(MAX_REDRAWS):
        mask = rng.random(shape) < 0.8
        if int(mask.sum()) >= min_valid:
            return mask
    return np.ones(shape, dtype=bool)


def _margins(r, u, perm):
    return (r - r[perm]) - (u - u[perm])


def _check_depth_l1(rng, h):
    shape = (3, 4)
    for _ in range(MAX_REDRAWS):
        mask = _mask_with_min(rng, shape, 2)
        gt = rng.uniform(0.5, 9.5, shape)
        pred = gt + rng.uniform(-2.0, 2.0, shape)
        if np.min(np.abs((pred - gt)[mask])) > KINK_CLEARANCE:
            break
    analytic = depth_l1(pred, gt, mask=mask).grad
    numeric = central_difference(lambda x: depth_l1(x, gt, mask=mask).value, pred, h)
    return analytic, numeric


def _check_soft_label_l1(rng, h):
    hyp = linear_hypotheses(1.0, 10.0, 4)
    shape = (3, 4)
    for _ in range(MAX_REDRAWS):
        mask = _mask_with_min(rng, shape, 2)
        gt = rng.uniform(1.2, 9.8, shape)
        vol = softmax_volume(rng.normal(size=shape + (4,)))
        y = soft_labels(hyp, gt).values
        if np.min(np.abs((y - vol)[mask])) > KINK_CLEARANCE:
            break
    labels = soft_labels(hyp, gt)
    analytic = soft_label_l1(vol, labels, mask=mask).grad
    numeric = central_difference(
        lambda x: soft_label_l1(x, labels, mask=mask).value, vol, h
    )
    return analytic, numeric


def _check_ranking(rng, h, variant):
    n = 12
    for _ in range(MAX_REDRAWS):
        err = np.abs(rng.normal(size=n)) + 0.05
        unc = rng.normal(size=n)
        perm = draw_permutation(n, int(rng.integers(1 << 30)))
        if variant == "l1-direct":
            clear = np.min(np.abs(err - unc)) > KINK_CLEARANCE
        else:
            clear = np.min(np.abs(_margins(err, unc, perm.perm))) > KINK_CLEARANCE
        if clear:
            break
    analytic = ranking_loss_variants(err, unc, perm, variant).grad
    numeric = central_difference(
        lambda u: ranking_loss_variants(err, u, perm, variant).value, unc, h
    )
    return analytic, numeric


def _total_forward(z, a, sigma, hyp, gt, perm, mask, frozen_err):
    """Weighted total recomposed from the public single-term ops.

    ``frozen_err`` pins the ranking error branch so the difference
    quotient respects the stop-gradient.
    """
    p = softmax_volume(z)
    depth = expectation_depth(hyp, p)
    v_r = depth_l1(depth, gt, mask=mask).value
    v_p = soft_label_l1(p, soft_labels(hyp, gt), mask=mask).value
    ent, _ = clamped_entropy_parts(p)
    unc = float(softplus(np.float64(a))) * ent
    v_u = ranking_loss_variants(frozen_err, unc, perm, "hinge", mask=mask).value
    values = np.array([v_r, v_p, v_u])
    sig = np.asarray(sigma, dtype=np.float64)
    return float((values * np.exp(-sig) + sig).sum())


def _full_instance(rng):
    hyp = linear_hypotheses(1.0, 10.0, 4)
    shape = (2, 2)
    for _ in range(MAX_REDRAWS):
        mask = _mask_with_min(rng, shape, 3)
        gt = rng.uniform(1.2, 9.8, shape)
        z = rng.normal(size=shape + (4,))
        a = float(rng.normal())
        sigma = rng.normal(scale=0.5, size=3)
        perm = draw_permutation(int(mask.sum()), int(rng.integers(1 << 30)))

        p = softmax_volume(z)
        depth = expectation_depth(hyp, p)
        resid = (depth - gt)[mask]
        y = soft_labels(hyp, gt).values
        ent, _ = clamped_entropy_parts(p[mask])
        u = float(softplus(np.float64(a))) * ent
        m = _margins(np.abs(resid), u, perm.perm)
        clear = (
            np.min(np.abs(resid)) > KINK_CLEARANCE
            and np.min(np.abs((y - p)[mask])) > KINK_CLEARANCE
            and np.min(np.abs(m)) > KINK_CLEARANCE
        )
        if clear:
            break
    frozen = np.zeros(shape)
    frozen[mask] = np.abs(resid)
    return hyp, mask, gt, z, a, sigma, perm, frozen


def _check_total_z(rng, h):
    hyp, mask, gt, z, a, sigma, perm, frozen = _full_instance(rng)
    report = full_backward(z, a, sigma, hyp, gt, perm, mask=mask)
    numeric = central_difference(
        lambda x: _total_forward(x, a, sigma, hyp, gt, perm, mask, frozen), z, h
    )
    return report.grad_z, numeric


def _check_total_a(rng, h):
    hyp, mask, gt, z, a, sigma, perm, frozen = _full_instance(rng)
    report = full_backward(z, a, sigma, hyp, gt, perm, mask=mask)
    numeric = central_difference(
        lambda x: _total_forward(z, float(x[0]), sigma, hyp, gt, perm, mask, frozen),
        np.array([a]),
        h,
    )
    return np.array([report.grad_a]), numeric


def _check_total_sigma(rng, h):
    hyp, mask, gt, z, a, sigma, perm, frozen = _full_instance(rng)
    report = full_backward(z, a, sigma, hyp, gt, perm, mask=mask)
    numeric = central_difference(
        lambda x: _total_forward(z, a, x, hyp, gt, perm, mask, frozen), sigma, h
    )
    return report.grad_sigma, numeric


def _check_auto_total(rng, h):
    values = np.abs(rng.normal(size=3)) + 0.1
    sigma = rng.normal(scale=0.8, size=3)
    _, analytic = auto_weighted_total(values, sigma)
    numeric = central_difference(
        lambda s: auto_weighted_total(values, s)[0], sigma, h
    )
    return analytic, numeric


_CHECKS = (
    ("depth_term_wrt_pred", _check_depth_l1),
    ("soft_term_wrt_probs", _check_soft_label_l1),
    ("ranking_hinge_wrt_unc", lambda rng, h: _check_ranking(rng, h, "hinge")),
    ("ranking_no_max_wrt_unc", lambda rng, h: _check_ranking(rng, h, "no-max")),
    ("ranking_l1_direct_wrt_unc", lambda rng, h: _check_ranking(rng, h, "l1-direct")),
    ("total_wrt_logits", _check_total_z),
    ("total_wrt_entropy_scale", _check_total_a),
    ("total_wrt_sigma", _check_total_sigma),
    ("auto_total_wrt_sigma", _check_auto_total),
)

CHECK_NAMES = tuple(name for name, _ in _CHECKS)


def run_gradient_suite(
    trials: int = 100,
    seed: int = 0,
    h: float = DEFAULT_STEP,
    rel_tol: float = DEFAULT_REL_TOL,
    abs_tol: float = DEFAULT_ABS_TOL,
) -> list[GradCheckResult]:
    """Run every check for ``trials`` random instances each."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    results = []
    for idx, (name, fn) in enumerate(_CHECKS):
        started = time.perf_counter()
        worst = 0.0
        for t in range(trials):
            rng = np.random.default_rng((seed, idx, t))
            analytic, numeric = fn(rng, h)
            worst = max(worst, scaled_error(analytic, numeric, rel_tol, abs_tol))
        results.append(
            GradCheckResult(
                name=name,
                trials=trials,
                max_scaled=worst,
                tol=rel_tol,
                passed=worst <= rel_tol,
                elapsed_s=time.perf_counter() - started,
            )
        )
    return results


def suite_passed(results) -> bool:
    return all(r.passed for r in results)
