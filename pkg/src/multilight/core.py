"""Shared types, camera conventions and light-rig geometry.

Camera space is x right, y up, z toward the viewer. Images are plain
``numpy`` arrays of shape ``(H, W, C)`` (C in {1, 3}), linear radiometric,
row-major with the top row first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi

# multiplier per light, in units of pi/6
_DEFAULT_PHI_STEPS = (1, 2, 1, 2, 1, 2, 1, 2, 0)


def _frozen(arr, dtype=np.float64) -> np.ndarray:
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


def check_image(img: np.ndarray, name: str = "image") -> np.ndarray:
    """Validate an image plane and return it as a float64 ``(H, W, C)`` array."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        img = img[..., None]
    if img.ndim != 3 or img.shape[2] not in (1, 3):
        raise ValueError(f"{name}: expected (H, W, 1|3) array, got shape {img.shape}")
    if img.shape[0] == 0 or img.shape[1] == 0:
        raise ValueError(f"{name}: zero dimension")
    if not np.all(np.isfinite(img)):
        raise ValueError(f"{name}: non-finite values")
    return img


def normalize(v: np.ndarray, axis: int = -1, eps: float = 0.0) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v, axis=axis, keepdims=True)
    if eps > 0.0:
        n = np.maximum(n, eps)
    return v / n


@dataclass(frozen=True)
class Camera:
    position: tuple = (0.0, 0.0, 4.0)
    look_at: tuple = (0.0, 0.0, 0.0)
    up: tuple = (0.0, 1.0, 0.0)
    vfov: float = math.pi / 4
    width: int = 256
    height: int = 256

    def __post_init__(self):
        object.__setattr__(self, "position", tuple(float(x) for x in self.position))
        object.__setattr__(self, "look_at", tuple(float(x) for x in self.look_at))
        object.__setattr__(self, "up", tuple(float(x) for x in self.up))
        fwd = np.subtract(self.look_at, self.position)
        if np.linalg.norm(fwd) == 0.0:
            raise ValueError("camera position equals look_at")
        if np.linalg.norm(np.cross(fwd, self.up)) < 1e-9 * np.linalg.norm(fwd) * max(np.linalg.norm(self.up), 1e-300):
            raise ValueError("camera up is parallel to the view direction")
        if not 0.0 < self.vfov < math.pi:
            raise ValueError("vfov must lie in (0, pi)")
        if self.width < 1 or self.height < 1:
            raise ValueError("camera resolution must be positive")

    def basis(self) -> np.ndarray:
        """Rows are the world-space camera axes (right, up, back).

        Multiplying a world direction by this matrix gives camera-space
        coordinates.
        """
        fwd = normalize(np.subtract(self.look_at, self.position))
        right = normalize(np.cross(fwd, self.up))
        up = np.cross(right, fwd)
        return np.stack([right, up, -fwd])

    def rays(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-pixel ray origin (3,) and unit world directions (H, W, 3)."""
        rot = self.basis()
        tan_half = math.tan(self.vfov / 2.0)
        aspect = self.width / self.height
        xs = (2.0 * (np.arange(self.width) + 0.5) / self.width - 1.0) * tan_half * aspect
        ys = (1.0 - 2.0 * (np.arange(self.height) + 0.5) / self.height) * tan_half
        x, y = np.meshgrid(xs, ys)
        d_cam = np.stack([x, y, -np.ones_like(x)], axis=-1)
        d_world = d_cam @ rot
        return np.array(self.position), normalize(d_world)

    def to_dict(self) -> dict:
        return {
            "position": list(self.position),
            "look_at": list(self.look_at),
            "up": list(self.up),
            "vfov": self.vfov,
            "width": self.width,
            "height": self.height,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Camera":
        return cls(
            position=tuple(d["position"]),
            look_at=tuple(d["look_at"]),
            up=tuple(d["up"]),
            vfov=float(d["vfov"]),
            width=int(d["width"]),
            height=int(d["height"]),
        )


@dataclass(frozen=True)
class LightRig:
    """Point lights placed on a sphere around the object.

    ``theta`` is the azimuth about the object-to-camera axis and ``phi`` the
    angular offset from that axis, so ``phi == 0`` sits at the camera.
    """

    poses: tuple
    radius: float = 4.0
    intensity: tuple = (24.0, 24.0, 24.0)

    def __post_init__(self):
        poses = tuple((float(t), float(p)) for t, p in self.poses)
        if len(poses) < 1:
            raise ValueError("a light rig needs at least one light")
        for t, p in poses:
            if not 0.0 <= t < TWO_PI:
                raise ValueError(f"theta {t} outside [0, 2pi)")
            if not 0.0 <= p <= math.pi / 2:
                raise ValueError(f"phi {p} outside [0, pi/2]")
        if self.radius <= 0:
            raise ValueError("rig radius must be positive")
        object.__setattr__(self, "poses", poses)
        object.__setattr__(self, "intensity", tuple(float(x) for x in self.intensity))

    def __len__(self) -> int:
        return len(self.poses)

    def subset(self, indices: Sequence[int]) -> "LightRig":
        return LightRig(tuple(self.poses[i] for i in indices), self.radius, self.intensity)

    def with_poses(self, poses) -> "LightRig":
        return LightRig(tuple(poses), self.radius, self.intensity)

    def to_dict(self) -> dict:
        return {"poses": [list(p) for p in self.poses], "radius": self.radius,
                "intensity": list(self.intensity)}

    @classmethod
    def from_dict(cls, d: dict) -> "LightRig":
        return cls(tuple(tuple(p) for p in d["poses"]), float(d["radius"]), tuple(d["intensity"]))


def wrap_angle(theta: float) -> float:
    t = math.fmod(theta, TWO_PI)
    if t < 0.0:
        t += TWO_PI
    # fmod + shift can round up to exactly 2pi
    return 0.0 if t >= TWO_PI else t


def light_rig_default(radius: float = 4.0, intensity=(24.0, 24.0, 24.0)) -> LightRig:
    """Eight lights ringed around the camera plus one at the camera."""
    poses = tuple(
        (wrap_angle(i * math.pi / 4), k * math.pi / 6)
        for i, k in enumerate(_DEFAULT_PHI_STEPS)
    )
    return LightRig(poses, radius, intensity)


def _rig_basis(camera: Camera) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    pos = np.array(camera.position)
    norm = np.linalg.norm(pos)
    if norm == 0.0:
        raise ValueError("degenerate camera basis")
    c = pos / norm
    u = np.cross(camera.up, c)
    un = np.linalg.norm(u)
    if un < 1e-12:
        raise ValueError("degenerate camera basis")
    u = u / un
    v = np.cross(c, u)
    return c, u, v


def light_positions(poses, radius: float, camera: Camera) -> np.ndarray:
    """World positions (L, 3) for a list of (theta, phi) poses."""
    c, u, v = _rig_basis(camera)
    poses = np.asarray(poses, dtype=np.float64).reshape(-1, 2)
    th, ph = poses[:, 0:1], poses[:, 1:2]
    return radius * (np.cos(ph) * c + np.sin(ph) * (np.cos(th) * u + np.sin(th) * v))


def light_position(rig: LightRig, index: int, camera: Camera) -> np.ndarray:
    if not 0 <= index < len(rig):
        raise IndexError(f"light index {index} out of range for {len(rig)} lights")
    return light_positions([rig.poses[index]], rig.radius, camera)[0]


def encode_normal(n: np.ndarray) -> np.ndarray:
    return (np.asarray(n, dtype=np.float64) + 1.0) * 0.5


def decode_normal(rgb: np.ndarray) -> np.ndarray:
    n = np.asarray(rgb, dtype=np.float64) * 2.0 - 1.0
    length = np.linalg.norm(n, axis=-1, keepdims=True)
    if np.any(length == 0.0):
        raise ValueError("cannot decode a zero-length normal")
    return n / length


def make_front_facing(n: np.ndarray) -> np.ndarray:
    """Project camera-space normals with z < 0 onto the z = 0 silhouette plane."""
    n = np.array(n, dtype=np.float64)
    back = n[..., 2] < 0.0
    if np.any(back):
        n[back, 2] = 0.0
        n[back] = normalize(n[back], eps=1e-300)
    return n


@dataclass(frozen=True)
class GBuffer:
    """Per-pixel normal/albedo/roughness/metallic maps plus foreground mask.

    ``depth`` is the optional hit distance along each primary ray.
    """

    normal: np.ndarray
    albedo: np.ndarray
    roughness: np.ndarray
    metallic: np.ndarray
    alpha: np.ndarray
    depth: Optional[np.ndarray] = None

    def __post_init__(self):
        normal = _frozen(self.normal)
        h, w = normal.shape[:2]
        if normal.shape != (h, w, 3):
            raise ValueError("normal map must be (H, W, 3)")
        albedo = _frozen(np.clip(self.albedo, 0.0, 1.0))
        rough = _frozen(np.clip(np.reshape(self.roughness, (h, w)), 0.0, 1.0))
        metal = _frozen(np.clip(np.reshape(self.metallic, (h, w)), 0.0, 1.0))
        alpha = _frozen(np.reshape(self.alpha, (h, w)) > 0.5, bool)
        if albedo.shape != (h, w, 3):
            raise ValueError("albedo map must be (H, W, 3)")
        object.__setattr__(self, "normal", normal)
        object.__setattr__(self, "albedo", albedo)
        object.__setattr__(self, "roughness", rough)
        object.__setattr__(self, "metallic", metal)
        object.__setattr__(self, "alpha", alpha)
        if self.depth is not None:
            object.__setattr__(self, "depth", _frozen(np.reshape(self.depth, (h, w))))

    @property
    def shape(self) -> tuple[int, int]:
        return self.alpha.shape

    def validate(self, tol: float = 1e-5) -> None:
        fg = self.alpha
        n = self.normal[fg]
        if n.size and np.max(np.abs(np.linalg.norm(n, axis=-1) - 1.0)) > tol:
            raise ValueError("foreground normals are not unit length")
        if n.size and np.min(n[:, 2]) < 0.0:
            raise ValueError("foreground normals are not front-facing")

    def replace(self, **changes) -> "GBuffer":
        fields = dict(normal=self.normal, albedo=self.albedo, roughness=self.roughness,
                      metallic=self.metallic, alpha=self.alpha, depth=self.depth)
        fields.update(changes)
        return GBuffer(**fields)


@dataclass(frozen=True)
class MultiLightSet:
    """``L`` images of one view, each paired with the pose of its light."""

    images: np.ndarray
    poses: tuple
    input: np.ndarray
    alpha: np.ndarray
    depth: Optional[np.ndarray] = None
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        images = np.asarray(self.images, dtype=np.float64)
        poses = tuple((float(t), float(p)) for t, p in self.poses)
        if images.ndim != 4 or images.shape[-1] != 3:
            raise ValueError("images must be (L, H, W, 3)")
        if images.shape[0] != len(poses):
            raise ValueError(f"{images.shape[0]} images but {len(poses)} poses")
        inp = check_image(self.input, "input")
        if inp.shape[:2] != images.shape[1:3]:
            raise ValueError("input image and light images differ in size")
        object.__setattr__(self, "images", _frozen(images))
        object.__setattr__(self, "poses", poses)
        object.__setattr__(self, "input", _frozen(inp))
        object.__setattr__(self, "alpha", _frozen(np.reshape(self.alpha, images.shape[1:3]) > 0.5, bool))
        if self.depth is not None:
            object.__setattr__(self, "depth", _frozen(np.reshape(self.depth, images.shape[1:3])))

    def __len__(self) -> int:
        return len(self.poses)

    def subset(self, indices: Sequence[int]) -> "MultiLightSet":
        idx = list(indices)
        return MultiLightSet(self.images[idx], tuple(self.poses[i] for i in idx),
                             self.input, self.alpha, self.depth, dict(self.extra))

    def replace(self, **changes) -> "MultiLightSet":
        fields = dict(images=self.images, poses=self.poses, input=self.input,
                      alpha=self.alpha, depth=self.depth, extra=dict(self.extra))
        fields.update(changes)
        return MultiLightSet(**fields)
