"""
How many lights, and how clean
==============================

A small held-out set solved with 1, 3, 6 and 9 of the rig images, followed by
the same sphere pushed through the artifact simulator with and without a
robust loss.
"""

import tempfile
from pathlib import Path

import numpy as np

from multilight import (Camera, MaterialField, MaterialSample, SolverConfig, light_rig_default, raycast_gbuffer,
                        render_multilight, solve_gbuffer, sphere_scene)
from multilight.ablation import run_ablation
from multilight.augment import AugmentConfig, apply_augmentations
from multilight.dataset import generate_dataset
from multilight.metrics import angular_error_stats

with tempfile.TemporaryDirectory() as tmp:
    root = Path(tmp) / "bench"
    generate_dataset(4, 1, root, seed=0, resolution=40, split="test")
    result = run_ablation(root, (1, 3, 6, 9))

print(" L   mean angle   albedo RMSE")
for count, m in result.metrics.items():
    print(f"{count:2d}   {m['normal_mean']:9.3f}   {m['albedo_rmse']:10.4f}")
print("subsets", result.subsets)

###############################################################################
# Every augmentation forced on. Each light image is warped independently, so
# a pixel no longer sees the same surface point in all nine images.

cam = Camera(width=64, height=64)
rig = light_rig_default()
scene = sphere_scene(1.0, MaterialField("constant", MaterialSample((0.6, 0.5, 0.4), 1.0, 0.0)))
gt = raycast_gbuffer(scene, cam)
mls = render_multilight(scene, cam, rig, gbuffer=gt)

aug = apply_augmentations(mls, AugmentConfig(trigger_probability=1.0, shuffle_probability=1.0,
                                             mix_probability=0.0), seed=7)
print(aug.extra["augment"])
aug_rig = rig.with_poses(aug.poses)
for loss in ("none", "huber"):
    pred, _ = solve_gbuffer(aug.input, aug, cam, aug_rig, SolverConfig(robust_loss=loss))
    s = angular_error_stats(pred.normal, gt.normal, gt.alpha)
    print(f"{loss:5s}: mean {s['mean']:.3f} deg, median {s['median']:.3f} deg")

# the error lives at the rim, where warped images pull in background
yy, xx = np.mgrid[:64, :64]
rad = np.hypot(yy - 31.5, xx - 31.5)
err = np.degrees(np.arccos(np.clip(np.sum(pred.normal * gt.normal, -1), -1, 1)))
r_max = rad[gt.alpha].max()
for lo, hi in ((0, 0.5), (0.5, 0.8), (0.8, 1.01)):
    ring = gt.alpha & (rad >= lo * r_max) & (rad < hi * r_max)
    print(f"radius {lo:.1f}-{hi:.1f}: mean {err[ring].mean():.2f} deg")
