"""Desk-scale training harness for the depth-as-classification stack.

Synthetic heteroscedastic scenes stand in for real RGB-D data: ground
truth is a ramp plus disc primitives, the per-pixel features are a
low-order polynomial lift of that depth corrupted by noise whose std
grows left to right.  A tiny shared-weight per-pixel network (one tanh
hidden layer) maps features to either classification logits or a
regression latent, and plain gradient descent runs on the auto-weighted
loss total through the exact backward pass of the losses module.

The ablation harness trains the six loss configurations of interest on
shared scenes and reports accuracy plus uncertainty quality per row.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from numpy.polynomial import chebyshev

from .discretize import (
    DEFAULT_GAMMA,
    DepthHypotheses,
    expectation_depth,
    linear_hypotheses,
    softmax_volume,
)
from .gridio import read_grid, write_grid
from .losses import (
    LossReport,
    PairPermutation,
    _ranking_core,
    clamped_entropy_parts,
    draw_permutation,
    full_backward,
    softmax_backward,
)
from .metrics import (
    accuracy_metrics,
    evaluate_uncertainty,
    spearman,
)
from .uncertainty import UncertaintyScale, sigmoid, softplus

HEAD_KINDS = ("classification", "regression")
DEFAULT_EXTENT = 32
DEFAULT_FEATURES = 8
DEFAULT_HIDDEN = 16
DEFAULT_BINS = 16
DEFAULT_D_MIN = 1.0
DEFAULT_D_MAX = 10.0
DEFAULT_ETA_LO = 0.02
DEFAULT_ETA_HI = 1.0
DEFAULT_TRAIN_SCENES = 64
DEFAULT_EVAL_SCENES = 16
_PERM_SEED_STRIDE = 1_000_003
_SCENE_SEED_STRIDE = 10_007
# box for the loss-weight parameters: a term whose value sits at float
# noise around zero (the cancelled ranking variant) has no finite
# stationary sigma, and an unbounded walk overflows exp() mid-run.
# Inactive for every configuration with nonzero term values.
SIGMA_BOUND = 20.0


class TrainingDivergedError(RuntimeError):
    """Loss total went non-finite; carries the epoch it happened in."""

    def __init__(self, epoch: int):
        super().__init__(f"training diverged (non-finite total) in epoch {epoch}")
        self.epoch = epoch


@dataclass(frozen=True)
class SyntheticScene:
    """One training sample: depth, noisy features, the noise profile."""

    gt: np.ndarray  # H x W depth
    features: np.ndarray  # H x W x F
    noise_std: np.ndarray  # H x W, constant per column, increasing left->right
    seed: int


def generate_scene(
    h: int,
    w: int,
    f: int,
    seed: int,
    eta_lo: float = DEFAULT_ETA_LO,
    eta_hi: float = DEFAULT_ETA_HI,
    d_min: float = DEFAULT_D_MIN,
    d_max: float = DEFAULT_D_MAX,
) -> SyntheticScene:
    """Ramp-plus-discs depth with column-graded feature noise.

    Feature j is the degree-j Chebyshev polynomial of the normalized
    depth, plus zero-mean noise of std eta(col) = eta_lo +
    (eta_hi - eta_lo) * col / w.  Deterministic in the seed.
    """
    if h < 4 or w < 4:
        raise ValueError(f"image extents must be >= 4, got {h}x{w}")
    if f < 1:
        raise ValueError(f"need >= 1 feature channel, got {f}")
    if not (0.0 <= eta_lo < eta_hi):
        raise ValueError(f"need 0 <= eta_lo < eta_hi, got {eta_lo}, {eta_hi}")
    if not (0.0 < d_min < d_max):
        raise ValueError(f"bad depth range [{d_min}, {d_max}]")
    rng = np.random.default_rng(seed)

    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    theta = rng.uniform(0.0, 2.0 * np.pi)
    t = np.cos(theta) * xs / max(w - 1, 1) + np.sin(theta) * ys / max(h - 1, 1)
    t = (t - t.min()) / max(t.max() - t.min(), 1e-12)
    pad = 0.05 * (d_max - d_min)
    lo = rng.uniform(d_min + pad, d_max - pad)
    hi = rng.uniform(d_min + pad, d_max - pad)
    gt = lo + (hi - lo) * t

    for _ in range(rng.integers(2, 5)):
        cy = rng.uniform(0, h)
        cx = rng.uniform(0, w)
        # lower bound 2 keeps discs visible; tiny images pin the radius there
        radius = rng.uniform(2.0, max(2.0, min(h, w) / 4.0))
        depth = rng.uniform(d_min + pad, d_max - pad)
        inside = (ys - cy) ** 2 + (xs - cx) ** 2 <= radius**2
        gt = np.where(inside, depth, gt)
    gt = np.clip(gt, d_min, d_max)

    tn = 2.0 * (gt - d_min) / (d_max - d_min) - 1.0
    basis = np.stack(
        [chebyshev.chebval(tn, [0.0] * j + [1.0]) for j in range(1, f + 1)], axis=-1
    )
    std = eta_lo + (eta_hi - eta_lo) * xs / w
    feats = basis + rng.standard_normal((h, w, f)) * std[..., None]
    return SyntheticScene(gt=gt, features=feats, noise_std=std, seed=seed)


def make_dataset(
    n_train: int = DEFAULT_TRAIN_SCENES,
    n_eval: int = DEFAULT_EVAL_SCENES,
    h: int = DEFAULT_EXTENT,
    w: int = DEFAULT_EXTENT,
    f: int = DEFAULT_FEATURES,
    seed: int = 0,
    eta_lo: float = DEFAULT_ETA_LO,
    eta_hi: float = DEFAULT_ETA_HI,
    d_min: float = DEFAULT_D_MIN,
    d_max: float = DEFAULT_D_MAX,
):
    """Disjoint train/eval scene lists, reproducible from one seed."""
    base = seed * _SCENE_SEED_STRIDE
    train = [
        generate_scene(h, w, f, base + i, eta_lo, eta_hi, d_min, d_max)
        for i in range(n_train)
    ]
    held = [
        generate_scene(h, w, f, base + 100_000 + i, eta_lo, eta_hi, d_min, d_max)
        for i in range(n_eval)
    ]
    return train, held


@dataclass
class ToyModel:
    """Shared-weight per-pixel net: features -> tanh hidden -> head.

    The classification head emits one logit per depth hypothesis; the
    regression head emits a latent vector read out by ``w_out`` (its
    softmax doubles as the pseudo probability for uncertainty).
    """

    head: str
    hypotheses: DepthHypotheses
    w1: np.ndarray  # F x Hd
    b1: np.ndarray  # Hd
    w2: np.ndarray  # Hd x (bins or latent)
    w_out: np.ndarray | None = None  # latent readout, regression only
    raw_scale: float = 0.0
    sigma: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if self.head not in HEAD_KINDS:
            raise ValueError(f"unknown head {self.head!r}, want one of {HEAD_KINDS}")
        self.b1 = np.asarray(self.b1, dtype=np.float64)
        self.w1 = np.asarray(self.w1, dtype=np.float64)
        self.w2 = np.asarray(self.w2, dtype=np.float64)
        self.sigma = np.asarray(self.sigma, dtype=np.float64)
        if self.w1.ndim != 2 or self.b1.shape != (self.w1.shape[1],):
            raise ValueError("hidden layer shapes inconsistent")
        if self.w2.ndim != 2 or self.w2.shape[0] != self.w1.shape[1]:
            raise ValueError("output layer shapes inconsistent")
        if self.head == "classification":
            if self.w_out is not None:
                raise ValueError("classification head takes no latent readout")
            if self.w2.shape[1] != self.hypotheses.m:
                raise ValueError(
                    f"{self.w2.shape[1]} logits vs {self.hypotheses.m} hypotheses"
                )
        else:
            if self.w_out is None:
                raise ValueError("regression head needs a latent readout")
            self.w_out = np.asarray(self.w_out, dtype=np.float64)
            if self.w_out.shape != (self.w2.shape[1],):
                raise ValueError("latent readout length mismatch")
        if self.sigma.shape != (3,):
            raise ValueError("sigma must hold 3 weights")
        self.check_finite()

    def check_finite(self):
        parts = [self.w1, self.b1, self.w2, self.sigma, np.atleast_1d(self.raw_scale)]
        if self.w_out is not None:
            parts.append(self.w_out)
        if not all(np.all(np.isfinite(p)) for p in parts):
            raise ValueError("non-finite model parameters")

    @property
    def scale(self) -> UncertaintyScale:
        return UncertaintyScale(raw=self.raw_scale)

    @property
    def n_features(self) -> int:
        return self.w1.shape[0]


@dataclass(frozen=True)
class TrainConfig:
    """Knobs for one training run; loss-term switches pick the ablation row."""

    epochs: int = 10
    lr: float = 0.2
    lr_decay: float = 0.8
    decay_every: int = 2
    seed: int = 0
    head: str = "classification"
    include_soft: bool = True
    ranking: str | None = "hinge"
    m: int = DEFAULT_BINS  # hypothesis count, or latent size for regression
    d_min: float = DEFAULT_D_MIN
    d_max: float = DEFAULT_D_MAX
    gamma: float = 10.0
    hidden: int = DEFAULT_HIDDEN

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.lr <= 0:
            raise ValueError(f"learning rate must be > 0, got {self.lr}")
        if not (0.0 < self.lr_decay <= 1.0):
            raise ValueError(f"decay factor must be in (0, 1], got {self.lr_decay}")
        if self.decay_every < 1:
            raise ValueError(f"decay interval must be >= 1, got {self.decay_every}")
        if self.head not in HEAD_KINDS:
            raise ValueError(f"unknown head {self.head!r}")
        if self.ranking not in (None, "hinge", "no-max", "l1-direct"):
            raise ValueError(f"unknown ranking variant {self.ranking!r}")
        if self.head == "regression" and self.include_soft:
            raise ValueError("the soft-label term needs the classification head")

    def lr_at(self, epoch: int) -> float:
        return self.lr * self.lr_decay ** (epoch // self.decay_every)


def init_model(config: TrainConfig, n_features: int = DEFAULT_FEATURES) -> ToyModel:
    """Small random weights, zero bias, raw scale and sigmas at zero."""
    rng = np.random.default_rng(config.seed)
    hyp = linear_hypotheses(config.d_min, config.d_max, config.m)
    hd = config.hidden
    w1 = rng.standard_normal((n_features, hd)) / np.sqrt(n_features)
    b1 = np.zeros(hd)
    w2 = rng.standard_normal((hd, config.m)) / np.sqrt(hd)
    w_out = None
    if config.head == "regression":
        w_out = rng.standard_normal(config.m) / np.sqrt(config.m)
    return ToyModel(
        head=config.head, hypotheses=hyp, w1=w1, b1=b1, w2=w2, w_out=w_out
    )


def _hidden(model: ToyModel, feats: np.ndarray) -> np.ndarray:
    return np.tanh(feats @ model.w1 + model.b1)


def forward(model: ToyModel, scene: SyntheticScene):
    """Depth map, uncertainty map and the head volume for one scene.

    Classification: softmax over logits, expectation decode, scaled
    entropy.  Regression: latent readout for depth, scaled entropy of
    the latent's softmax as the pseudo uncertainty.
    """
    feats = scene.features
    if feats.shape[-1] != model.n_features:
        raise ValueError(
            f"scene has {feats.shape[-1]} feature channels, model wants {model.n_features}"
        )
    hid = _hidden(model, feats)
    z = hid @ model.w2
    alpha = model.scale.alpha
    if model.head == "classification":
        vol = softmax_volume(z)
        depth = expectation_depth(model.hypotheses, vol)
        h, _ = clamped_entropy_parts(vol)
        return depth, alpha * h, vol
    depth = z @ model.w_out
    pseudo = softmax_volume(z)
    h, _ = clamped_entropy_parts(pseudo)
    return depth, alpha * h, z


def _regression_backward(
    z: np.ndarray,
    w_out: np.ndarray,
    a: float,
    sigma: np.ndarray,
    gt: np.ndarray,
    perm: PairPermutation | None,
    ranking: str | None,
):
    """Depth-plus-ranking backward for the latent head.

    Mirrors the classification path: L1 depth on the readout, ranking on
    the scaled entropy of softmax(z); returns the report plus the
    readout gradient (which has no slot in the shared report).
    """
    n = gt.size
    w = 1.0 / n
    zf = z.reshape(n, -1)
    gv = gt.ravel()
    depth = zf @ w_out
    resid = depth - gv
    value_r = float(np.abs(resid).sum() * w)

    ew = np.exp(-sigma)
    sgn = np.sign(resid) * (w * ew[0])
    grad_z_flat = sgn[:, None] * w_out[None, :]
    grad_wout = sgn @ zf

    value_u = 0.0
    grad_a = 0.0
    alpha = float(softplus(a))
    if ranking is not None:
        if ranking in ("hinge", "no-max") and (perm is None or perm.n != n):
            raise ValueError("ranking variant needs a permutation over all pixels")
        p = softmax_volume(zf)
        h, dh_dp = clamped_entropy_parts(p)
        r = np.abs(resid)
        u = alpha * h
        _, value_u, gu = _ranking_core(
            r, u, perm.perm if perm is not None else None, ranking, w
        )
        gu_eff = gu * ew[2]
        grad_p = (alpha * gu_eff)[:, None] * dh_dp
        grad_z_flat = grad_z_flat + softmax_backward(p, grad_p)
        grad_a = float((gu_eff * h).sum() * sigmoid(np.float64(a)))

    active = np.array([True, False, ranking is not None])
    values = np.array([value_r, 0.0, value_u])
    total = float(((values * ew + sigma) * active).sum())
    grad_sigma = np.where(active, -values * ew + 1.0, 0.0)
    report = LossReport(
        value_r=value_r,
        value_p=0.0,
        value_u=value_u,
        total=total,
        grad_z=grad_z_flat.reshape(z.shape),
        grad_a=grad_a,
        grad_sigma=grad_sigma,
        alpha=alpha,
        active=tuple(bool(x) for x in active),
        n_valid=n,
    )
    return report, grad_wout


def scene_gradients(model: ToyModel, scene: SyntheticScene, config: TrainConfig, step_seed: int):
    """One scene's loss report and parameter gradients.

    The exact backward of the losses module supplies d(total)/d(logits);
    the chain rule through the two-layer net does the rest.  Training
    and the finite-difference spot checks share this code path.
    """
    feats = scene.features
    hid = _hidden(model, feats)
    z = hid @ model.w2
    n = scene.gt.size

    perm = None
    if config.ranking in ("hinge", "no-max"):
        perm = draw_permutation(n, step_seed)

    grad_wout = None
    if model.head == "classification":
        report = full_backward(
            z,
            model.raw_scale,
            model.sigma,
            model.hypotheses,
            scene.gt,
            perm,
            gamma=config.gamma,
            include_soft=config.include_soft,
            ranking=config.ranking,
        )
    else:
        report, grad_wout = _regression_backward(
            z, model.w_out, model.raw_scale, model.sigma, scene.gt, perm, config.ranking
        )

    gz = report.grad_z.reshape(n, -1)
    h2 = hid.reshape(n, -1)
    f2 = feats.reshape(n, -1)
    grad_w2 = h2.T @ gz
    grad_h = gz @ model.w2.T
    grad_pre = grad_h * (1.0 - h2**2)
    grads = {
        "w1": f2.T @ grad_pre,
        "b1": grad_pre.sum(axis=0),
        "w2": grad_w2,
        "a": report.grad_a,
        "sigma": report.grad_sigma,
    }
    if grad_wout is not None:
        grads["w_out"] = grad_wout
    return report, grads


@dataclass(frozen=True)
class EpochLog:
    """Per-epoch averages used by the logs CSV and the sigma sign checks."""

    epoch: int
    lr: float
    mean_total: float
    mean_depth: float
    mean_soft: float
    mean_rank: float
    sigma: tuple[float, float, float]
    alpha: float
    mean_grad_sigma: tuple[float, float, float]

    def row(self) -> dict:
        return {
            "epoch": self.epoch,
            "lr": self.lr,
            "total": self.mean_total,
            "loss_depth": self.mean_depth,
            "loss_soft": self.mean_soft,
            "loss_rank": self.mean_rank,
            "sigma_depth": self.sigma[0],
            "sigma_soft": self.sigma[1],
            "sigma_rank": self.sigma[2],
            "alpha": self.alpha,
            "grad_sigma_depth": self.mean_grad_sigma[0],
            "grad_sigma_soft": self.mean_grad_sigma[1],
            "grad_sigma_rank": self.mean_grad_sigma[2],
        }


def train(model: ToyModel, scenes, config: TrainConfig):
    """Plain gradient descent, one step per scene visit.

    Scene order is fixed; the pair permutation is redrawn every step
    from the run seed.  Aborts with the epoch index if the total goes
    non-finite.  Returns the trained model (mutated in place) and the
    per-epoch log list.
    """
    scenes = list(scenes)
    if not scenes:
        raise ValueError("need at least one training scene")
    logs = []
    step = 0
    for epoch in range(config.epochs):
        lr = config.lr_at(epoch)
        totals = np.zeros(4)
        gsig = np.zeros(3)
        for scene in scenes:
            step_seed = config.seed * _PERM_SEED_STRIDE + step
            report, grads = scene_gradients(model, scene, config, step_seed)
            if not np.isfinite(report.total):
                raise TrainingDivergedError(epoch)
            model.w1 -= lr * grads["w1"]
            model.b1 -= lr * grads["b1"]
            model.w2 -= lr * grads["w2"]
            model.raw_scale -= lr * grads["a"]
            model.sigma = np.clip(
                model.sigma - lr * grads["sigma"], -SIGMA_BOUND, SIGMA_BOUND
            )
            if "w_out" in grads:
                model.w_out = model.w_out - lr * grads["w_out"]
            totals += (report.total, report.value_r, report.value_p, report.value_u)
            gsig += grads["sigma"]
            step += 1
        k = len(scenes)
        logs.append(
            EpochLog(
                epoch=epoch,
                lr=lr,
                mean_total=totals[0] / k,
                mean_depth=totals[1] / k,
                mean_soft=totals[2] / k,
                mean_rank=totals[3] / k,
                sigma=tuple(float(s) for s in model.sigma),
                alpha=model.scale.alpha,
                mean_grad_sigma=tuple(float(g) for g in gsig / k),
            )
        )
    model.check_finite()
    return model, logs


@dataclass(frozen=True)
class EvalSummary:
    """Scene-averaged accuracy and uncertainty quality."""

    n_scenes: int
    accuracy: dict
    uncertainty: dict
    scc: float | None  # error vs uncertainty, mean of per-scene values
    noise_scc: float | None  # uncertainty vs injected noise profile
    scc_missing: int

    def row(self) -> dict:
        out = dict(self.accuracy)
        out.update(self.uncertainty)
        out["scc"] = self.scc
        out["noise_scc"] = self.noise_scc
        return out


def _none_mean(values):
    kept = [v for v in values if v is not None]
    if not kept:
        return None
    return float(np.mean(kept))


def evaluate_model(model: ToyModel, scenes) -> EvalSummary:
    """Unweighted scene means; undefined entries dropped, not zeroed."""
    scenes = list(scenes)
    if not scenes:
        raise ValueError("need at least one evaluation scene")
    acc_rows = []
    unc_rows = []
    sccs = []
    noise_sccs = []
    missing = 0
    for scene in scenes:
        depth, unc, vol = forward(model, scene)
        acc_rows.append(accuracy_metrics(depth, scene.gt).row())
        rep = evaluate_uncertainty(
            depth,
            scene.gt,
            unc,
            vol=vol if model.head == "classification" else None,
            hyp=model.hypotheses,
        )
        unc_rows.append(rep.row())
        if rep.scc is None:
            missing += 1
        else:
            sccs.append(rep.scc)
        ns = spearman(unc.ravel(), scene.noise_std.ravel())
        if ns is not None:
            noise_sccs.append(ns)
    acc = {k: _none_mean([r[k] for r in acc_rows]) for k in acc_rows[0]}
    unc = {k: _none_mean([r[k] for r in unc_rows]) for k in unc_rows[0]}
    return EvalSummary(
        n_scenes=len(scenes),
        accuracy=acc,
        uncertainty=unc,
        scc=_none_mean(sccs) if sccs else None,
        noise_scc=_none_mean(noise_sccs) if noise_sccs else None,
        scc_missing=missing,
    )


def pooled_errors(model: ToyModel, scenes):
    """Absolute errors and uncertainties over all pixels of all scenes."""
    errs = []
    uncs = []
    for scene in scenes:
        depth, unc, _ = forward(model, scene)
        errs.append(np.abs(depth - scene.gt).ravel())
        uncs.append(unc.ravel())
    return np.concatenate(errs), np.concatenate(uncs)


ABLATION_ROWS = (
    ("depth_only", False, None),
    ("depth_soft", True, None),
    ("depth_rank", False, "hinge"),
    ("full", True, "hinge"),
    ("full_nomax", True, "no-max"),
    ("full_l1direct", True, "l1-direct"),
)


def ablate(
    seeds,
    base: TrainConfig | None = None,
    n_train: int = DEFAULT_TRAIN_SCENES,
    n_eval: int = DEFAULT_EVAL_SCENES,
    h: int = DEFAULT_EXTENT,
    w: int = DEFAULT_EXTENT,
    f: int = DEFAULT_FEATURES,
    eta_lo: float = DEFAULT_ETA_LO,
    eta_hi: float = DEFAULT_ETA_HI,
    threads: int = 1,
):
    """Loss-term ablation: six configurations on shared scenes per seed.

    Every configuration of one seed trains from the same initialization
    on the same scene list, so rows differ only in the loss terms.
    Returns one flat dict per (configuration, seed), in a fixed order
    regardless of ``threads``; each run is self-contained, so threading
    only changes wall-clock, never the numbers.
    """
    if base is None:
        base = TrainConfig()
    tasks = []
    for seed in seeds:
        cfg_seed = replace(base, seed=int(seed))
        train_scenes, eval_scenes = make_dataset(
            n_train, n_eval, h, w, f, seed=int(seed),
            eta_lo=eta_lo, eta_hi=eta_hi, d_min=base.d_min, d_max=base.d_max,
        )
        for name, soft, ranking in ABLATION_ROWS:
            cfg = replace(cfg_seed, include_soft=soft, ranking=ranking)
            tasks.append((name, int(seed), cfg, train_scenes, eval_scenes))

    def run(task):
        name, seed, cfg, train_scenes, eval_scenes = task
        model = init_model(cfg, n_features=f)
        started = time.perf_counter()
        model, _ = train(model, train_scenes, cfg)
        summary = evaluate_model(model, eval_scenes)
        row = {"config": name, "seed": seed}
        row.update(summary.row())
        row["train_s"] = time.perf_counter() - started
        return row

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(run, tasks))
    return [run(t) for t in tasks]


def ablation_medians(rows, key: str = "scc"):
    """Per-configuration median of one metric across seeds."""
    out = {}
    for name, _, _ in ABLATION_ROWS:
        vals = [r[key] for r in rows if r["config"] == name and r[key] is not None]
        out[name] = float(np.median(vals)) if vals else None
    return out


def save_model(model: ToyModel, directory) -> Path:
    """Grid bundle plus a key=value manifest; round-trips exactly."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_grid(directory / "w1.duv", model.w1)
    write_grid(directory / "b1.duv", model.b1)
    write_grid(directory / "w2.duv", model.w2)
    write_grid(directory / "sigma.duv", model.sigma)
    if model.w_out is not None:
        write_grid(directory / "w_out.duv", model.w_out)
    lines = [
        f"head={model.head}",
        f"raw_scale={model.raw_scale!r}",
        f"d_min={model.hypotheses.d_min!r}",
        f"d_max={model.hypotheses.d_max!r}",
        f"m={model.hypotheses.m}",
    ]
    (directory / "manifest.txt").write_text("\n".join(lines) + "\n", encoding="ascii")
    return directory


def load_model(directory) -> ToyModel:
    directory = Path(directory)
    manifest = {}
    for line in (directory / "manifest.txt").read_text(encoding="ascii").splitlines():
        if line.strip():
            key, _, value = line.partition("=")
            manifest[key] = value
    head = manifest["head"]
    hyp = linear_hypotheses(
        float(manifest["d_min"]), float(manifest["d_max"]), int(manifest["m"])
    )
    w_out = None
    if head == "regression":
        w_out = read_grid(directory / "w_out.duv").values
    return ToyModel(
        head=head,
        hypotheses=hyp,
        w1=read_grid(directory / "w1.duv").values,
        b1=read_grid(directory / "b1.duv").values,
        w2=read_grid(directory / "w2.duv").values,
        w_out=w_out,
        raw_scale=float(manifest["raw_scale"]),
        sigma=read_grid(directory / "sigma.duv").values,
    )
