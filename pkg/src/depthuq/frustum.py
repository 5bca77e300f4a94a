"""Probability-frustum voxelization and novel-view rendering.

The per-pixel depth distribution lives on hypothesis planes of a
pinhole frustum.  Each probability sample is unprojected to 3-D,
splatted with trilinear weights into a sparse voxel grid as opacity
(colors carried from the source image along the ray), and the grid is
volume-rendered from arbitrary poses with front-to-back
emission-absorption compositing.

Voxel bounds are padded by half a cell around the sample cloud, so
every sample keeps its full 8-neighbor stencil in-grid and splat mass
is conserved exactly; samples on the cloud hull land exactly on voxel
centers.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .discretize import DepthHypotheses, bilinear_bin_weights
from .gridio import read_grid, valid_mask, write_grid

ALPHA_EPSILON = 1e-4
DEFAULT_RESOLUTION = 96
DEFAULT_MIN_TRANSMITTANCE = 1e-3
ORTHONORMAL_TOL = 1e-9


@dataclass(frozen=True)
class Pinhole:
    """Intrinsics: focal length in pixels, principal point, extents."""

    f: float
    cx: float
    cy: float
    h: int
    w: int

    def __post_init__(self):
        if self.f <= 0:
            raise ValueError(f"focal length must be > 0, got {self.f}")
        if self.h < 1 or self.w < 1:
            raise ValueError(f"bad image extents {self.h}x{self.w}")
        if not (0.0 <= self.cx <= self.w - 1 and 0.0 <= self.cy <= self.h - 1):
            raise ValueError(
                f"principal point ({self.cx}, {self.cy}) outside {self.h}x{self.w} image"
            )


def centered_pinhole(h: int, w: int, f: float) -> Pinhole:
    return Pinhole(f=f, cx=(w - 1) / 2.0, cy=(h - 1) / 2.0, h=h, w=w)


@dataclass(frozen=True)
class CameraPose:
    """Camera-to-world rigid transform; translation is the center."""

    rotation: np.ndarray  # 3x3, orthonormal, det +1
    translation: np.ndarray  # 3

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64)
        if r.shape != (3, 3) or t.shape != (3,):
            raise ValueError("pose needs a 3x3 rotation and a 3-vector translation")
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(t))):
            raise ValueError("non-finite pose")
        err = np.abs(r.T @ r - np.eye(3)).max()
        if err > ORTHONORMAL_TOL:
            raise ValueError(f"rotation not orthonormal (|R'R - I| = {err:.2e})")
        if abs(np.linalg.det(r) - 1.0) > 1e-6:
            raise ValueError("rotation must be proper (det +1)")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)


def identity_pose() -> CameraPose:
    return CameraPose(rotation=np.eye(3), translation=np.zeros(3))


def orbit_pose(target, radius: float, azimuth: float, elevation: float = 0.0) -> CameraPose:
    """Camera on a sphere around ``target``, optical axis aimed at it."""
    target = np.asarray(target, dtype=np.float64)
    if radius <= 0:
        raise ValueError(f"orbit radius must be > 0, got {radius}")
    ce, se = np.cos(elevation), np.sin(elevation)
    ca, sa = np.cos(azimuth), np.sin(azimuth)
    offset = radius * np.array([ce * sa, -se, -ce * ca])
    center = target + offset
    fwd = target - center
    fwd = fwd / np.linalg.norm(fwd)
    up = np.array([0.0, -1.0, 0.0])  # image y runs down
    right = np.cross(up, fwd)
    nr = np.linalg.norm(right)
    if nr < 1e-12:
        up = np.array([0.0, 0.0, 1.0])
        right = np.cross(up, fwd)
        nr = np.linalg.norm(right)
    right = right / nr
    true_up = np.cross(fwd, right)
    r = np.stack([right, -true_up, fwd], axis=1)
    if np.linalg.det(r) < 0:
        r[:, 0] = -r[:, 0]
    # re-orthonormalize against accumulated rounding
    u, _, vt = np.linalg.svd(r)
    r = u @ vt
    return CameraPose(rotation=r, translation=center)


def unproject(cam: Pinhole, h, w, depth):
    """Pixel plus depth to camera-frame 3-D point(s).

    X = (w - cx) * depth / f, Y = (h - cy) * depth / f, Z = depth.
    Broadcasts over arrays; the last axis of the result holds (X, Y, Z).
    """
    h = np.asarray(h, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    depth = np.asarray(depth, dtype=np.float64)
    if not np.all(depth > 0):
        raise ValueError("depth must be > 0")
    x = (w - cam.cx) * depth / cam.f
    y = (h - cam.cy) * depth / cam.f
    z = np.broadcast_to(depth, x.shape).astype(np.float64)
    return np.stack([x, y, z], axis=-1)


@dataclass(frozen=True)
class SparseVoxelGrid:
    """Axis-aligned sparse opacity grid with per-voxel color.

    Only voxels with alpha above the sparsity threshold are stored.
    ``deposited_mass`` records the total splat mass before clamping,
    for conservation checks.
    """

    lo: np.ndarray  # 3, meters
    hi: np.ndarray  # 3
    resolution: tuple[int, int, int]
    indices: np.ndarray  # K x 3 int
    alpha: np.ndarray  # K in (eps, 1]
    color: np.ndarray  # K x 3 in [0, 1]
    deposited_mass: float = 0.0

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=np.float64)
        hi = np.asarray(self.hi, dtype=np.float64)
        idx = np.asarray(self.indices, dtype=np.int64).reshape(-1, 3)
        alpha = np.asarray(self.alpha, dtype=np.float64).ravel()
        color = np.asarray(self.color, dtype=np.float64).reshape(-1, 3)
        res = tuple(int(n) for n in self.resolution)
        if lo.shape != (3,) or hi.shape != (3,):
            raise ValueError("bounds must be 3-vectors")
        if np.any(hi <= lo):
            raise ValueError("upper bound must exceed lower bound")
        if len(res) != 3 or any(n < 2 for n in res):
            raise ValueError(f"resolution must be >= 2 per axis, got {res}")
        if not (idx.shape[0] == alpha.shape[0] == color.shape[0]):
            raise ValueError("index/alpha/color row counts differ")
        if idx.size and (np.any(idx < 0) or np.any(idx >= np.array(res))):
            raise ValueError("voxel index outside resolution")
        if np.any(alpha <= ALPHA_EPSILON) or np.any(alpha > 1.0):
            raise ValueError(f"stored alphas must lie in ({ALPHA_EPSILON}, 1]")
        if np.any(color < 0.0) or np.any(color > 1.0):
            raise ValueError("colors must lie in [0, 1]")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "resolution", res)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "color", color)

    @property
    def n_voxels(self) -> int:
        return int(self.alpha.shape[0])

    @property
    def cell(self) -> np.ndarray:
        return (self.hi - self.lo) / np.array(self.resolution, dtype=np.float64)

    @property
    def voxel_size(self) -> float:
        """Isotropic reference length: cube root of the cell volume."""
        return float(np.prod(self.cell) ** (1.0 / 3.0))

    def dense(self):
        """Dense alpha plus premultiplied color for fast ray lookup."""
        a = np.zeros(self.resolution)
        pm = np.zeros(self.resolution + (3,))
        ix, iy, iz = self.indices.T
        a[ix, iy, iz] = self.alpha
        pm[ix, iy, iz] = self.alpha[:, None] * self.color
        return a, pm


def _frame_bounds(points: np.ndarray, res: np.ndarray):
    """Half-cell padded bounds: cloud hull points sit on voxel centers."""
    plo = points.min(axis=0)
    phi = points.max(axis=0)
    span = phi - plo
    cell = np.where(span > 0, span / np.maximum(res - 1, 1), 1.0)
    lo = plo - cell / 2.0
    hi = lo + res * cell
    return lo, hi


def _splat(points: np.ndarray, mass: np.ndarray, rgb: np.ndarray, resolution) -> SparseVoxelGrid:
    """Trilinear 8-neighbor scatter of sample mass into a fresh grid."""
    res = np.array(
        [resolution] * 3 if np.isscalar(resolution) else list(resolution), dtype=np.int64
    )
    if res.shape != (3,) or np.any(res < 2):
        raise ValueError(f"resolution must be >= 2 per axis, got {res.tolist()}")
    if points.shape[0] == 0:
        raise ValueError("no samples to voxelize")
    lo, hi = _frame_bounds(points, res)
    cell = (hi - lo) / res

    g = (points - lo) / cell - 0.5  # continuous center-lattice coordinate
    g = np.clip(g, 0.0, res - 1.0)  # guards float spill at the hull
    i0 = np.floor(g).astype(np.int64)
    i0 = np.minimum(i0, res - 2)  # keep the +1 corner addressable
    frac = g - i0

    acc_a = np.zeros(tuple(res))
    acc_c = np.zeros(tuple(res) + (3,))
    for corner in range(8):
        off = np.array([(corner >> 2) & 1, (corner >> 1) & 1, corner & 1])
        wgt = np.prod(np.where(off == 1, frac, 1.0 - frac), axis=1) * mass
        ix, iy, iz = (i0 + off).T
        np.add.at(acc_a, (ix, iy, iz), wgt)
        np.add.at(acc_c, (ix, iy, iz), wgt[:, None] * rgb)

    deposited = float(acc_a.sum())
    keep = acc_a > ALPHA_EPSILON
    idx = np.argwhere(keep)
    raw = acc_a[keep]
    color = acc_c[keep] / raw[:, None]
    return SparseVoxelGrid(
        lo=lo,
        hi=hi,
        resolution=tuple(int(n) for n in res),
        indices=idx,
        alpha=np.clip(raw, None, 1.0),
        color=np.clip(color, 0.0, 1.0),
        deposited_mass=deposited,
    )


def _check_image(cam: Pinhole, rgb) -> np.ndarray:
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.shape != (cam.h, cam.w, 3):
        raise ValueError(f"image shape {rgb.shape} vs camera {cam.h}x{cam.w}x3")
    if np.any(rgb < 0.0) or np.any(rgb > 1.0):
        raise ValueError("image colors must lie in [0, 1]")
    return rgb


def voxelize_prediction(
    vol, hyp: DepthHypotheses, cam: Pinhole, rgb, resolution=DEFAULT_RESOLUTION
) -> SparseVoxelGrid:
    """Splat the probability volume into frustum voxels as opacity.

    Every sample (pixel, hypothesis) is unprojected at its hypothesis
    depth and its probability deposited trilinearly; voxel color is the
    mass-weighted average of contributing source pixels.  Alphas clamp
    to [0, 1] after accumulation; ``deposited_mass`` keeps the
    pre-clamp total.
    """
    vol = np.asarray(vol, dtype=np.float64)
    if vol.shape != (cam.h, cam.w, hyp.m):
        raise ValueError(f"volume shape {vol.shape} vs {(cam.h, cam.w, hyp.m)}")
    if np.any(vol < 0.0) or not np.all(np.isfinite(vol)):
        raise ValueError("probability volume must be finite and >= 0")
    rgb = _check_image(cam, rgb)

    ys, xs = np.mgrid[0 : cam.h, 0 : cam.w].astype(np.float64)
    pts = []
    mass = []
    cols = []
    for m in range(hyp.m):
        pts.append(unproject(cam, ys, xs, hyp.values[m]).reshape(-1, 3))
        mass.append(vol[:, :, m].ravel())
        cols.append(rgb.reshape(-1, 3))
    return _splat(
        np.concatenate(pts), np.concatenate(mass), np.concatenate(cols), resolution
    )


def voxelize_ground_truth(
    gt, hyp: DepthHypotheses, cam: Pinhole, rgb, resolution=DEFAULT_RESOLUTION
):
    """Bilinear two-plane assignment of GT depth, then the splat path.

    GT depth between neighboring hypothesis planes splits its unit mass
    proportionally to plane proximity.  Pixels with invalid or
    out-of-range depth are skipped; returns (grid, skipped count).
    """
    gt = np.asarray(gt, dtype=np.float64)
    if gt.shape != (cam.h, cam.w):
        raise ValueError(f"depth shape {gt.shape} vs camera {cam.h}x{cam.w}")
    rgb = _check_image(cam, rgb)

    ok = valid_mask(gt) & (gt >= hyp.d_min) & (gt <= hyp.d_max)
    skipped = int(gt.size - ok.sum())
    if not ok.any():
        raise ValueError("no in-range pixels to voxelize")
    ys, xs = np.mgrid[0 : cam.h, 0 : cam.w].astype(np.float64)
    yv, xv, dv = ys[ok], xs[ok], gt[ok]
    cv = rgb[ok]
    lo_idx, w_lo = bilinear_bin_weights(hyp, dv)
    pts = np.concatenate(
        [
            unproject(cam, yv, xv, hyp.values[lo_idx]),
            unproject(cam, yv, xv, hyp.values[lo_idx + 1]),
        ]
    )
    mass = np.concatenate([w_lo, 1.0 - w_lo])
    cols = np.concatenate([cv, cv])
    nonzero = mass > 0.0  # a weightless plane sample would only skew the bounds
    return _splat(pts[nonzero], mass[nonzero], cols[nonzero], resolution), skipped


def _trilerp(dense_a, dense_pm, res, g):
    """Clamp-to-edge trilinear read of alpha and premultiplied color."""
    g = np.clip(g, 0.0, res - 1.0)
    i0 = np.minimum(np.floor(g).astype(np.int64), (res - 2).astype(np.int64))
    frac = g - i0
    a = np.zeros(g.shape[0])
    pm = np.zeros((g.shape[0], 3))
    for corner in range(8):
        off = np.array([(corner >> 2) & 1, (corner >> 1) & 1, corner & 1])
        wgt = np.prod(np.where(off == 1, frac, 1.0 - frac), axis=1)
        ix, iy, iz = (i0 + off).T
        a += wgt * dense_a[ix, iy, iz]
        pm += wgt[:, None] * dense_pm[ix, iy, iz]
    return a, pm


def render(
    grid: SparseVoxelGrid,
    pose: CameraPose,
    cam: Pinhole,
    background=(0.0, 0.0, 0.0),
    step: float | None = None,
    min_transmittance: float = DEFAULT_MIN_TRANSMITTANCE,
) -> np.ndarray:
    """Front-to-back emission-absorption march through the grid.

    Rays start at the grid boundary and advance by ``step`` meters
    (default: the isotropic voxel size); each sample converts its
    trilinear alpha via 1 - (1 - a)^(step / voxel_size) so the result
    is step-size independent, composites C += T * a_s * c_s,
    T *= (1 - a_s), and stops once T < ``min_transmittance``.  The
    leftover transmittance lets the background through.
    """
    bg = np.asarray(background, dtype=np.float64).reshape(3)
    if np.any(bg < 0.0) or np.any(bg > 1.0):
        raise ValueError("background color must lie in [0, 1]")
    if step is None:
        step = grid.voxel_size
    if step <= 0:
        raise ValueError(f"step length must be > 0, got {step}")
    if not (0.0 < min_transmittance < 1.0):
        raise ValueError("termination threshold must lie in (0, 1)")

    dense_a, dense_pm = grid.dense()
    dirs = camera_rays(cam, pose)
    out_c = _march(
        grid, dense_a, dense_pm, pose.translation, dirs, bg, step, min_transmittance
    )
    return out_c.reshape(cam.h, cam.w, 3)


def camera_rays(cam: Pinhole, pose: CameraPose) -> np.ndarray:
    """Unit world-space ray direction per pixel, row-major (H*W, 3)."""
    ys, xs = np.mgrid[0 : cam.h, 0 : cam.w].astype(np.float64)
    dirs_cam = np.stack(
        [(xs - cam.cx) / cam.f, (ys - cam.cy) / cam.f, np.ones_like(xs)], axis=-1
    ).reshape(-1, 3)
    dirs = dirs_cam @ pose.rotation.T
    return dirs / np.linalg.norm(dirs, axis=1, keepdims=True)


def _march(grid, dense_a, dense_pm, origin, dirs, bg, step, min_transmittance):
    """Composite a batch of rays; independent per ray (chunk-safe)."""
    res = np.array(grid.resolution, dtype=np.float64)
    cell = grid.cell

    # slab intersection with the voxel bounds
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
        t0 = (grid.lo[None, :] - origin[None, :]) * inv
        t1 = (grid.hi[None, :] - origin[None, :]) * inv
    near = np.nanmax(np.minimum(t0, t1), axis=1)
    far = np.nanmin(np.maximum(t0, t1), axis=1)
    near = np.maximum(near, 0.0)
    hit = far > near

    n_rays = dirs.shape[0]
    out_c = np.zeros((n_rays, 3))
    trans = np.ones(n_rays)
    t = near + step / 2.0  # midpoint sampling: cell-aligned steps hit centers
    active = hit.copy()
    exponent = step / grid.voxel_size
    while np.any(active):
        ai = np.nonzero(active)[0]
        pos = origin[None, :] + t[ai, None] * dirs[ai]
        g = (pos - grid.lo[None, :]) / cell[None, :] - 0.5
        a, pm = _trilerp(dense_a, dense_pm, res, g)
        a_s = 1.0 - (1.0 - np.clip(a, 0.0, 1.0)) ** exponent
        contrib = a > 0
        if np.any(contrib):
            ci = ai[contrib]
            c_s = pm[contrib] / a[contrib, None]
            out_c[ci] += (trans[ci] * a_s[contrib])[:, None] * c_s
            trans[ci] *= 1.0 - a_s[contrib]
        t[ai] += step
        active[ai] = (t[ai] <= far[ai]) & (trans[ai] >= min_transmittance)

    out_c += trans[:, None] * bg[None, :]
    return np.clip(out_c, 0.0, 1.0)


def save_voxel_grid(grid: SparseVoxelGrid, basepath) -> Path:
    """Index grid + value grid + key=value header next to each other."""
    base = Path(basepath)
    base.parent.mkdir(parents=True, exist_ok=True)
    write_grid(base.parent / (base.name + ".idx.duv"), grid.indices.astype(np.float64))
    write_grid(
        base.parent / (base.name + ".val.duv"),
        np.concatenate([grid.alpha[:, None], grid.color], axis=1),
    )
    lines = [
        "lo=" + ",".join(repr(float(v)) for v in grid.lo),
        "hi=" + ",".join(repr(float(v)) for v in grid.hi),
        "resolution=" + ",".join(str(n) for n in grid.resolution),
        f"deposited_mass={grid.deposited_mass!r}",
        f"voxels={grid.n_voxels}",
    ]
    (base.parent / (base.name + ".meta.txt")).write_text(
        "\n".join(lines) + "\n", encoding="ascii"
    )
    return base


def load_voxel_grid(basepath) -> SparseVoxelGrid:
    base = Path(basepath)
    meta = {}
    meta_path = base.parent / (base.name + ".meta.txt")
    for line in meta_path.read_text(encoding="ascii").splitlines():
        if line.strip():
            key, _, value = line.partition("=")
            meta[key] = value
    vals = read_grid(base.parent / (base.name + ".val.duv")).values.reshape(-1, 4)
    idx = read_grid(base.parent / (base.name + ".idx.duv")).values.reshape(-1, 3)
    alpha = np.clip(vals[:, 0].astype(np.float64), None, 1.0)
    keep = alpha > ALPHA_EPSILON  # float32 storage can nudge threshold stragglers
    return SparseVoxelGrid(
        lo=np.array([float(v) for v in meta["lo"].split(",")]),
        hi=np.array([float(v) for v in meta["hi"].split(",")]),
        resolution=tuple(int(v) for v in meta["resolution"].split(",")),
        indices=idx[keep].astype(np.int64),
        alpha=alpha[keep],
        color=np.clip(vals[keep, 1:].astype(np.float64), 0.0, 1.0),
        deposited_mass=float(meta["deposited_mass"]),
    )
