"""Voxelize one synthetic scene and render an orbit around it.

Writes the colour source image plus one orbit frame per azimuth, all as
binary PPM under --out-dir.
"""

import argparse
from pathlib import Path

import numpy as np

from depthuq.discretize import linear_hypotheses
from depthuq.frustum import centered_pinhole, orbit_pose, render, voxelize_ground_truth
from depthuq.gridio import write_ppm
from depthuq.toytrain import generate_scene


def depth_palette(gt, d_min, d_max):
    # near = warm, far = cold; a linear blend is plenty for a demo
    t = np.clip((gt - d_min) / (d_max - d_min), 0.0, 1.0)
    return np.stack([1.0 - t, 0.2 + 0.6 * t * (1.0 - t), t], axis=-1)


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--size", type=int, default=48, help="scene and frame extent")
    ap.add_argument("--bins", type=int, default=24, help="depth planes for voxelization")
    ap.add_argument("--frames", type=int, default=6)
    ap.add_argument("--out-dir", default="results/render_demo")
    args = ap.parse_args()

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    scene = generate_scene(args.size, args.size, 8, seed=args.seed)
    hyp = linear_hypotheses(1.0, 10.0, args.bins)
    rgb = depth_palette(scene.gt, 1.0, 10.0)
    cam = centered_pinhole(args.size, args.size, 1.2 * args.size)
    grid, skipped = voxelize_ground_truth(
        scene.gt, hyp, cam, rgb, resolution=(64, 64, args.bins)
    )
    print(f"voxelized: {grid.indices.shape[0]} voxels, {skipped} pixels skipped")
    write_ppm(out / "source.ppm", args.size, args.size, rgb)

    center = (grid.lo + grid.hi) / 2.0
    radius = 1.5 * float(np.linalg.norm(grid.hi - grid.lo))
    for k in range(args.frames):
        azimuth = 2.0 * np.pi * k / args.frames
        pose = orbit_pose(center, radius=radius, azimuth=azimuth, elevation=0.35)
        img = render(grid, pose, cam, background=(1.0, 1.0, 1.0))
        write_ppm(out / f"orbit_{k:02d}.ppm", args.size, args.size, img)
        print(f"wrote orbit_{k:02d}.ppm (azimuth {np.degrees(azimuth):.0f} deg)")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
