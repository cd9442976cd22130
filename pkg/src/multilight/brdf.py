"""Metallic-roughness microfacet BRDF (GGX / Schlick-GGX / Schlick).

Every function broadcasts over leading array dimensions; RGB quantities
carry a trailing axis of length 3.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ALPHA_MIN = 1e-3
F0_DIELECTRIC = 0.04
DENOM_FLOOR = 1e-6


@dataclass(frozen=True)
class MaterialSample:
    albedo: tuple = (0.5, 0.5, 0.5)
    roughness: float = 0.5
    metallic: float = 0.0

    def __post_init__(self):
        albedo = tuple(float(a) for a in self.albedo)
        if len(albedo) != 3 or not all(0.0 <= a <= 1.0 for a in albedo):
            raise ValueError("albedo must be three values in [0, 1]")
        if not 0.0 <= self.roughness <= 1.0 or not 0.0 <= self.metallic <= 1.0:
            raise ValueError("roughness and metallic must lie in [0, 1]")
        object.__setattr__(self, "albedo", albedo)

    @property
    def alpha(self) -> float:
        return lobe_alpha(self.roughness)


def lobe_alpha(roughness):
    return np.maximum(np.square(roughness), ALPHA_MIN)


def fresnel_schlick(cos_theta, f0):
    cos_theta = np.asarray(cos_theta, dtype=np.float64)
    f0 = np.asarray(f0, dtype=np.float64)
    return f0 + (1.0 - f0) * (1.0 - cos_theta) ** 5


def ggx_ndf(n_dot_h, alpha):
    a2 = np.square(alpha)
    d = np.square(n_dot_h) * (a2 - 1.0) + 1.0
    return a2 / (np.pi * d * d)


def smith_g1(x, alpha):
    k = np.asarray(alpha) * 0.5
    return x / (x * (1.0 - k) + k)


def smith_g(n_dot_v, n_dot_l, alpha):
    n_dot_v = np.clip(n_dot_v, 0.0, 1.0)
    n_dot_l = np.clip(n_dot_l, 0.0, 1.0)
    return smith_g1(n_dot_v, alpha) * smith_g1(n_dot_l, alpha)


def _dot(a, b):
    return np.sum(a * b, axis=-1)


def eval_brdf_arrays(n, v, l, albedo, roughness, metallic):
    """Diffuse and specular BRDF values (per steradian) for array inputs.

    ``n, v, l`` are unit vectors (..., 3); ``albedo`` is (..., 3) and
    ``roughness``/``metallic`` are (...). Returns two (..., 3) arrays.
    """
    albedo = np.asarray(albedo, dtype=np.float64)
    metallic = np.asarray(metallic, dtype=np.float64)
    alpha = lobe_alpha(np.asarray(roughness, dtype=np.float64))

    hv = v + l
    hlen = np.linalg.norm(hv, axis=-1)
    degenerate = hlen == 0.0
    h = hv / np.where(degenerate, 1.0, hlen)[..., None]

    n_dot_v = np.clip(_dot(n, v), 0.0, 1.0)
    n_dot_l = np.clip(_dot(n, l), 0.0, 1.0)
    n_dot_h = np.clip(_dot(n, h), 0.0, 1.0)
    v_dot_h = np.clip(_dot(v, h), 0.0, 1.0)

    m = metallic[..., None]
    diffuse = (1.0 - m) * albedo / np.pi
    f0 = F0_DIELECTRIC * (1.0 - m) + albedo * m
    d = ggx_ndf(n_dot_h, alpha)
    g = smith_g(n_dot_v, n_dot_l, alpha)
    f = fresnel_schlick(v_dot_h[..., None], f0)
    denom = np.maximum(4.0 * n_dot_v * n_dot_l, DENOM_FLOOR)
    spec = (d * g / denom)[..., None] * f
    spec = np.where(degenerate[..., None], 0.0, spec)
    diffuse = np.broadcast_to(diffuse, spec.shape)
    return diffuse, spec


def eval_brdf(n, v, l, mat: MaterialSample):
    return eval_brdf_arrays(np.asarray(n, float), np.asarray(v, float), np.asarray(l, float),
                            np.array(mat.albedo), mat.roughness, mat.metallic)


def shade_dirs(n, v, l, r2, albedo, roughness, metallic, intensity, visible=None):
    """Point-light radiance given unit light directions ``l`` and squared distances ``r2``."""
    n_dot_l = _dot(n, l)
    diffuse, spec = eval_brdf_arrays(n, v, l, albedo, roughness, metallic)
    lit = n_dot_l > 0.0
    if visible is not None:
        lit = lit & visible
    scale = np.where(lit, n_dot_l / r2, 0.0)[..., None]
    return (diffuse + spec) * scale * np.asarray(intensity, dtype=np.float64)


def light_geometry(points, light_pos):
    """Unit directions toward the light and squared distances."""
    to_light = np.asarray(light_pos, dtype=np.float64) - points
    r2 = _dot(to_light, to_light)
    return to_light / np.sqrt(r2)[..., None], r2


def shade_arrays(n, v, points, albedo, roughness, metallic, light_pos, intensity, visible=None):
    """Outgoing radiance from a point light; broadcasts like ``eval_brdf_arrays``."""
    l, r2 = light_geometry(points, light_pos)
    return shade_dirs(n, v, l, r2, albedo, roughness, metallic, intensity, visible)


def shade_point(n, view_dir, point, mat: MaterialSample, light_pos, light_intensity, visible=True):
    if not visible:
        return np.zeros(3)
    return shade_arrays(np.asarray(n, float), np.asarray(view_dir, float), np.asarray(point, float),
                        np.array(mat.albedo), mat.roughness, mat.metallic, light_pos, light_intensity)
