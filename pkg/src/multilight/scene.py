"""Procedural signed-distance scenes with spatially varying materials."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial.transform import Rotation

from .brdf import MaterialSample
from .rng import uniform

BOUND_RADIUS = 1.5
PRIMITIVE_KINDS = ("sphere", "rounded_box", "torus", "capsule", "displaced_sphere")
FIELD_KINDS = ("constant", "checker", "noise")
ROUGHNESS_LEVELS = (0.2, 0.5, 0.8)


@dataclass(frozen=True)
class MaterialField:
    """Blend between two material slots driven by a scalar pattern.

    ``checker`` yields exactly slot ``a`` or ``b``; ``noise`` blends albedo
    and roughness smoothly and switches metallic at the 0.5 level.
    """

    kind: str = "constant"
    a: MaterialSample = MaterialSample()
    b: MaterialSample = MaterialSample()
    frequency: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in FIELD_KINDS:
            raise ValueError(f"unknown material field kind {self.kind!r}")

    def weight(self, p: np.ndarray) -> np.ndarray:
        if self.kind == "constant":
            return np.zeros(p.shape[:-1])
        q = p * self.frequency
        if self.kind == "checker":
            return np.mod(np.floor(q).sum(axis=-1), 2.0)
        return value_noise(q, self.seed)

    def evaluate(self, p: np.ndarray):
        w = self.weight(p)
        wa = 1.0 - w
        albedo = np.array(self.a.albedo) * wa[..., None] + np.array(self.b.albedo) * w[..., None]
        rough = self.a.roughness * wa + self.b.roughness * w
        metal = np.where(w < 0.5, self.a.metallic, self.b.metallic)
        return albedo, rough, metal

    def to_dict(self) -> dict:
        return {"kind": self.kind, "frequency": self.frequency, "seed": self.seed,
                "a": _mat_dict(self.a), "b": _mat_dict(self.b)}


def _mat_dict(m: MaterialSample) -> dict:
    return {"albedo": list(m.albedo), "roughness": m.roughness, "metallic": m.metallic}


def value_noise(q: np.ndarray, seed: int) -> np.ndarray:
    """Trilinear value noise in [0, 1] with smoothstep interpolation."""
    base = np.floor(q)
    f = q - base
    f = f * f * (3.0 - 2.0 * f)
    ib = base.astype(np.int64)
    out = 0.0
    for dx in (0, 1):
        wx = f[..., 0] if dx else 1.0 - f[..., 0]
        for dy in (0, 1):
            wy = f[..., 1] if dy else 1.0 - f[..., 1]
            for dz in (0, 1):
                wz = f[..., 2] if dz else 1.0 - f[..., 2]
                corner = uniform(seed, ib[..., 0] + dx, ib[..., 1] + dy, ib[..., 2] + dz)
                out = out + wx * wy * wz * corner
    return np.clip(out, 0.0, 1.0)


@dataclass(frozen=True)
class Primitive:
    kind: str
    center: tuple = (0.0, 0.0, 0.0)
    params: tuple = (1.0,)
    rotation: tuple = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))
    material: MaterialField = MaterialField()

    def __post_init__(self):
        if self.kind not in PRIMITIVE_KINDS:
            raise ValueError(f"unknown primitive kind {self.kind!r}")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "params", tuple(float(c) for c in self.params))
        object.__setattr__(self, "rotation", tuple(tuple(float(x) for x in row) for row in self.rotation))

    def local(self, p: np.ndarray) -> np.ndarray:
        # rotation columns are the local axes in world space
        return (p - np.array(self.center)) @ np.array(self.rotation)

    def extent(self) -> float:
        """Radius of a sphere about ``center`` that contains the primitive."""
        k, prm = self.kind, self.params
        if k == "sphere":
            return prm[0]
        if k == "rounded_box":
            return math.sqrt(prm[0] ** 2 + prm[1] ** 2 + prm[2] ** 2) + prm[3]
        if k == "torus":
            return prm[0] + prm[1]
        if k == "capsule":
            return prm[0] + prm[1]
        return prm[0] + prm[1]

    def sdf(self, p: np.ndarray) -> np.ndarray:
        q = self.local(p)
        k, prm = self.kind, self.params
        if k == "sphere":
            return np.linalg.norm(q, axis=-1) - prm[0]
        if k == "rounded_box":
            d = np.abs(q) - np.array(prm[:3])
            outside = np.linalg.norm(np.maximum(d, 0.0), axis=-1)
            inside = np.minimum(np.max(d, axis=-1), 0.0)
            return outside + inside - prm[3]
        if k == "torus":
            ring = np.hypot(q[..., 0], q[..., 2]) - prm[0]
            return np.hypot(ring, q[..., 1]) - prm[1]
        if k == "capsule":
            y = np.clip(q[..., 1], -prm[0], prm[0])
            d = q.copy()
            d[..., 1] = q[..., 1] - y
            return np.linalg.norm(d, axis=-1) - prm[1]
        radius, amp, freq = prm
        bump = amp * np.sin(freq * q[..., 0]) * np.sin(freq * q[..., 1]) * np.sin(freq * q[..., 2])
        # divide by the Lipschitz bound so sphere tracing never oversteps
        return (np.linalg.norm(q, axis=-1) - radius - bump) / (1.0 + amp * freq * math.sqrt(3.0))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "center": list(self.center), "params": list(self.params),
                "rotation": [list(r) for r in self.rotation], "material": self.material.to_dict()}


@dataclass(frozen=True)
class Scene:
    """Union of SDF primitives.

    ``overrides`` optionally maps ``albedo``/``roughness``/``metallic`` to
    per-pixel ground-truth maps that replace the material fields when the
    scene is raycast at the matching resolution.
    """

    primitives: tuple
    overrides: Optional[dict] = field(default=None, compare=False)
    seed: Optional[int] = None

    def __post_init__(self):
        prims = tuple(self.primitives)
        if not prims:
            raise ValueError("a scene needs at least one primitive")
        object.__setattr__(self, "primitives", prims)

    def check_bounds(self, radius: float = BOUND_RADIUS) -> bool:
        return all(np.linalg.norm(p.center) + p.extent() <= radius + 1e-9 for p in self.primitives)

    def sdf(self, p: np.ndarray) -> np.ndarray:
        d = self.primitives[0].sdf(p)
        for prim in self.primitives[1:]:
            d = np.minimum(d, prim.sdf(p))
        return d

    def closest(self, p: np.ndarray) -> np.ndarray:
        if len(self.primitives) == 1:
            return np.zeros(p.shape[:-1], dtype=np.int64)
        return np.argmin(np.stack([prim.sdf(p) for prim in self.primitives]), axis=0)

    def material(self, p: np.ndarray):
        """Albedo (N, 3), roughness (N,), metallic (N,) at surface points ``p``."""
        idx = self.closest(p)
        albedo = np.zeros(p.shape[:-1] + (3,))
        rough = np.zeros(p.shape[:-1])
        metal = np.zeros(p.shape[:-1])
        for i, prim in enumerate(self.primitives):
            sel = idx == i
            if np.any(sel):
                a, r, m = prim.material.evaluate(prim.local(p[sel]))
                albedo[sel], rough[sel], metal[sel] = a, r, m
        return np.clip(albedo, 0.0, 1.0), np.clip(rough, 0.0, 1.0), np.clip(metal, 0.0, 1.0)

    def to_dict(self) -> dict:
        return {"seed": self.seed, "primitives": [p.to_dict() for p in self.primitives]}


def sphere_scene(radius: float = 1.0, material: Optional[MaterialField] = None) -> Scene:
    return Scene((Primitive("sphere", params=(radius,), material=material or MaterialField()),))


def _random_material(rng: np.random.Generator, seed: int) -> MaterialField:
    def slot():
        return MaterialSample(
            albedo=tuple(rng.uniform(0.05, 0.95, 3)),
            roughness=float(rng.choice(ROUGHNESS_LEVELS)),
            metallic=float(rng.integers(0, 2)),
        )

    kind = FIELD_KINDS[int(rng.integers(0, 3))]
    freq = float(rng.choice([1.5, 2.5, 4.0])) if kind == "checker" else float(rng.choice([2.0, 3.0, 5.0]))
    return MaterialField(kind, slot(), slot(), freq, int(rng.integers(0, 2**31 - 1)))


def _random_primitive(rng: np.random.Generator, scale: float, seed: int) -> Primitive:
    kind = PRIMITIVE_KINDS[int(rng.integers(0, len(PRIMITIVE_KINDS)))]
    if kind == "sphere":
        params = (scale * rng.uniform(0.6, 1.0),)
    elif kind == "rounded_box":
        params = tuple(scale * rng.uniform(0.35, 0.65, 3)) + (scale * rng.uniform(0.05, 0.15),)
    elif kind == "torus":
        params = (scale * rng.uniform(0.55, 0.8), scale * rng.uniform(0.18, 0.3))
    elif kind == "capsule":
        params = (scale * rng.uniform(0.3, 0.6), scale * rng.uniform(0.3, 0.45))
    else:
        params = (scale * rng.uniform(0.6, 0.85), scale * rng.uniform(0.03, 0.08), rng.uniform(4.0, 8.0))
    rot = Rotation.random(random_state=rng).as_matrix()
    prim = Primitive(kind, (0.0, 0.0, 0.0), params, rot, _random_material(rng, seed))
    # place the center so the whole primitive stays inside the bound
    room = max(BOUND_RADIUS - prim.extent(), 0.0)
    direction = rng.normal(size=3)
    direction /= np.linalg.norm(direction)
    offset = direction * room * rng.uniform(0.0, 1.0) * (0.25 if scale == 1.0 else 0.8)
    return Primitive(kind, tuple(offset), params, rot, prim.material)


def generate_scene(seed: int) -> Scene:
    """Deterministic 1-3 primitive scene fitting inside the radius-1.5 bound."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5CE7E]))
    count = int(rng.integers(1, 4))
    scale = 1.0 if count == 1 else 0.7
    prims = tuple(_random_primitive(rng, scale, seed) for _ in range(count))
    return Scene(prims, seed=int(seed))
