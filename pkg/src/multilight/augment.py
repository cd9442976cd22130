"""Artifact simulator for generated multi-light sets.

Resolution loss, geometric misalignment, brightness drift and pose noise,
each triggered independently, plus pair shuffling and a heavier "mixed"
pass. Everything is a pure function of the seed.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace
from typing import Optional

import numpy as np
from matplotlib.colors import hsv_to_rgb, rgb_to_hsv

from .core import MultiLightSet, wrap_angle

HALF_PI = 0.5 * math.pi
GRID_POINTS = 5


@dataclass(frozen=True)
class AugmentConfig:
    trigger_probability: float = 0.6
    resize_low: float = 128.0
    resize_high: float = 256.0
    distort_strength_low: float = 0.15
    distort_strength_high: float = 0.30
    brightness_low: float = 0.9
    brightness_high: float = 1.3
    pixel_noise_sigma: float = 0.05
    input_brightness_low: float = 0.9
    input_brightness_high: float = 1.1
    theta_sigma: float = 0.1
    phi_sigma: float = 0.02
    shuffle_probability: float = 0.5
    mix_probability: float = 0.3

    def __post_init__(self):
        for name in ("trigger_probability", "shuffle_probability", "mix_probability"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        for lo, hi in (("resize_low", "resize_high"), ("distort_strength_low", "distort_strength_high"),
                       ("brightness_low", "brightness_high"),
                       ("input_brightness_low", "input_brightness_high")):
            if getattr(self, lo) > getattr(self, hi):
                raise ValueError(f"{lo} must not exceed {hi}")
        for name in ("pixel_noise_sigma", "theta_sigma", "phi_sigma"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be non-negative")
        if self.resize_low <= 0.0:
            raise ValueError("resize_low must be positive")

    @classmethod
    def from_mapping(cls, values: dict) -> "AugmentConfig":
        known = {f.name for f in fields(cls)}
        for key in values:
            if key not in known:
                raise KeyError(f"unknown augment option {key!r}")
        return cls(**{k: float(v) for k, v in values.items()})

    def heavy(self) -> "AugmentConfig":
        """Double-strength variant used for the mixing substitute."""
        return replace(
            self,
            resize_low=self.resize_low / 2.0,
            distort_strength_low=2.0 * self.distort_strength_low,
            distort_strength_high=2.0 * self.distort_strength_high,
            brightness_low=1.0 - 2.0 * (1.0 - self.brightness_low),
            brightness_high=1.0 + 2.0 * (self.brightness_high - 1.0),
            pixel_noise_sigma=2.0 * self.pixel_noise_sigma,
            theta_sigma=2.0 * self.theta_sigma,
            phi_sigma=2.0 * self.phi_sigma,
        )

    def to_dict(self) -> dict:
        return asdict(self)


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.default_rng(seed)
    return np.random.default_rng(np.random.SeedSequence(int(seed)))


def _as_image(img) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return img[..., None]
    return img


def _sample(img, ys, xs):
    """Bilinear lookup with edge clamping.

    Written in lerp form ``a + t * (b - a)`` so constant regions come back
    bit-identical, which a weighted sum does not guarantee.
    """
    h, w = img.shape[:2]
    ys = np.clip(ys, 0.0, h - 1)
    xs = np.clip(xs, 0.0, w - 1)
    y0 = np.minimum(np.floor(ys).astype(np.int64), h - 1)
    x0 = np.minimum(np.floor(xs).astype(np.int64), w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[..., None]
    fx = (xs - x0)[..., None]
    a, b = img[y0, x0], img[y0, x1]
    c, d = img[y1, x0], img[y1, x1]
    top = a + fx * (b - a)
    bottom = c + fx * (d - c)
    return top + fy * (bottom - top)


def _resample(img, out_h, out_w):
    h, w = img.shape[:2]
    # pixel centers line up: x_src = (x + 0.5) * w / out_w - 0.5
    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    return _sample(img, yy, xx)


def degrade_resize(img, seed, cfg: AugmentConfig = AugmentConfig(), side: Optional[int] = None):
    """Bilinear down- then up-sample. The intermediate side is drawn from
    U(resize_low, resize_high) scaled to the image width (256 is the reference)."""
    arr = _as_image(img)
    h, w = arr.shape[:2]
    if side is None:
        scale = w / 256.0
        side = int(round(_rng(seed).uniform(cfg.resize_low * scale, cfg.resize_high * scale)))
    side = max(1, int(side))
    small_h = max(1, int(round(side * h / w)))
    out = _resample(_resample(arr, small_h, side), h, w)
    return out.reshape(np.shape(img))


def grid_distort(img, strength: float, seed, points: int = GRID_POINTS):
    """Warp by a ``points`` x ``points`` control lattice whose nodes move by
    up to ``strength`` cell sizes in a random direction."""
    if strength < 0.0:
        raise ValueError("strength must be non-negative")
    arr = _as_image(img)
    h, w = arr.shape[:2]
    if strength == 0.0:
        return np.array(img, dtype=np.float64, copy=True)
    rng = _rng(seed)
    cell_y = (h - 1) / (points - 1)
    cell_x = (w - 1) / (points - 1)
    radius = strength * np.sqrt(rng.uniform(0.0, 1.0, (points, points)))
    angle = rng.uniform(0.0, 2.0 * math.pi, (points, points))
    dy = radius * np.sin(angle) * cell_y
    dx = radius * np.cos(angle) * cell_x
    # upsample the lattice offsets to every pixel
    gy = np.arange(h) / max(cell_y, 1e-12)
    gx = np.arange(w) / max(cell_x, 1e-12)
    gyy, gxx = np.meshgrid(gy, gx, indexing="ij")
    offsets = _sample(np.stack([dy, dx], axis=-1), gyy, gxx)
    off_y, off_x = offsets[..., 0], offsets[..., 1]
    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    out = _sample(arr, yy + off_y, xx + off_x)
    return out.reshape(np.shape(img))


def intensity_jitter(img, seed, cfg: AugmentConfig = AugmentConfig(), factor: Optional[float] = None,
                     sigma: Optional[float] = None):
    """Scale HSV value by one image factor and a per-pixel N(1, sigma) draw."""
    arr = np.clip(_as_image(img), 0.0, 1.0)
    rng = _rng(seed)
    if factor is None:
        factor = rng.uniform(cfg.brightness_low, cfg.brightness_high)
    sigma = cfg.pixel_noise_sigma if sigma is None else sigma
    noise = rng.normal(1.0, sigma, arr.shape[:2]) if sigma > 0 else 1.0
    gray = arr.shape[2] == 1
    rgb = np.repeat(arr, 3, axis=2) if gray else arr
    hsv = rgb_to_hsv(rgb)
    hsv[..., 2] = np.clip(hsv[..., 2] * factor * noise, 0.0, 1.0)
    out = hsv_to_rgb(hsv)
    if gray:
        out = out[..., :1]
    return out.reshape(np.shape(img))


def scale_brightness(img, factor: float):
    """Input-image brightness change: HSV value scaled by ``factor``."""
    return intensity_jitter(img, 0, factor=factor, sigma=0.0)


def perturb_pose(theta: float, phi: float, d_theta: float, d_phi: float):
    return wrap_angle(theta + d_theta), min(max(phi + d_phi, 0.0), HALF_PI)


def perturb_orientation(poses, seed, cfg: AugmentConfig = AugmentConfig()):
    rng = _rng(seed)
    poses = list(poses)
    d_theta = rng.normal(0.0, cfg.theta_sigma, len(poses)) if cfg.theta_sigma > 0 else np.zeros(len(poses))
    d_phi = rng.normal(0.0, cfg.phi_sigma, len(poses)) if cfg.phi_sigma > 0 else np.zeros(len(poses))
    return tuple(perturb_pose(t, p, float(a), float(b)) for (t, p), a, b in zip(poses, d_theta, d_phi))


@dataclass(frozen=True)
class AugmentPlan:
    """Which augmentations fire for one seed, and the seeds that drive them."""

    degrade: bool
    intensity: bool
    orientation: bool
    shuffle: bool
    mix: bool
    seeds: tuple

    def to_dict(self) -> dict:
        return {"degrade": self.degrade, "intensity": self.intensity, "orientation": self.orientation,
                "shuffle": self.shuffle, "mix": self.mix}


def sample_plan(cfg: AugmentConfig, seed) -> AugmentPlan:
    ss = np.random.SeedSequence(int(seed))
    trigger_seq, *children = ss.spawn(8)
    u = np.random.default_rng(trigger_seq).uniform(size=5)
    p = cfg.trigger_probability
    return AugmentPlan(
        degrade=bool(u[0] < p), intensity=bool(u[1] < p), orientation=bool(u[2] < p),
        shuffle=bool(u[3] < cfg.shuffle_probability), mix=bool(u[4] < cfg.mix_probability),
        seeds=tuple(children),
    )


def _children(seq: np.random.SeedSequence, n: int):
    # spawn() advances the parent's counter, so work on a fresh copy to keep
    # a plan reusable
    return np.random.SeedSequence(seq.entropy, spawn_key=seq.spawn_key).spawn(n)


def _augment_images(images, poses, inp, cfg: AugmentConfig, seeds, degrade, intensity, orientation):
    imgs = np.array(images, dtype=np.float64, copy=True)
    n = len(imgs)
    if degrade:
        rs = _children(seeds[0], 2 * n)
        for i in range(n):
            rng = np.random.default_rng(rs[2 * i])
            strength = rng.uniform(cfg.distort_strength_low, cfg.distort_strength_high)
            imgs[i] = degrade_resize(imgs[i], rng, cfg)
            imgs[i] = grid_distort(imgs[i], strength, rs[2 * i + 1])
    if intensity:
        rs = _children(seeds[1], n + 1)
        for i in range(n):
            imgs[i] = intensity_jitter(imgs[i], rs[i], cfg)
        factor = np.random.default_rng(rs[n]).uniform(cfg.input_brightness_low, cfg.input_brightness_high)
        inp = scale_brightness(inp, factor)
    if orientation:
        poses = perturb_orientation(poses, seeds[2], cfg)
    return imgs, tuple(poses), inp


def apply_augmentations(mls: MultiLightSet, cfg: AugmentConfig = AugmentConfig(), seed=0,
                        plan: Optional[AugmentPlan] = None) -> MultiLightSet:
    """Augmented copy of ``mls``; the plan that fired is kept in ``extra['augment']``."""
    plan = plan or sample_plan(cfg, seed)
    images, poses, inp = mls.images, mls.poses, mls.input
    if plan.mix:
        images, poses, inp = _augment_images(images, poses, inp, cfg.heavy(), plan.seeds[3:6],
                                             True, True, True)
    else:
        images, poses, inp = _augment_images(images, poses, inp, cfg, plan.seeds[0:3],
                                             plan.degrade, plan.intensity, plan.orientation)
    if plan.shuffle and len(poses) > 1:
        order = np.random.default_rng(plan.seeds[6]).permutation(len(poses))
        images = images[order]
        poses = tuple(poses[i] for i in order)
    extra = dict(mls.extra)
    extra["augment"] = plan.to_dict()
    return mls.replace(images=images, poses=poses, input=inp, extra=extra)
