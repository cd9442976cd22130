"""Forward rendering: SDF ray casting to G-buffers, point-light and
environment relighting, and sRGB encoding."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import rng
from ._parallel import chunk_slices, ordered_map
from .brdf import eval_brdf_arrays, ggx_ndf, light_geometry, lobe_alpha, shade_dirs
from .core import (Camera, GBuffer, LightRig, MultiLightSet, check_image, light_positions,
                   make_front_facing, normalize)
from .scene import BOUND_RADIUS, Scene

MAX_STEPS = 256
HIT_EPS = 1e-4
MAX_DIST = 20.0
NORMAL_H = 1e-4
SHADOW_OFFSET = 2e-3
SAMPLE_CHUNK = 64


def sphere_trace(scene: Scene, origins, dirs, t_start, t_max, eps: float = HIT_EPS,
                 max_steps: int = MAX_STEPS):
    """March rays through the scene SDF.

    Returns ``(hit, t)``; rays that exhaust ``max_steps`` count as misses.
    """
    n = origins.shape[0]
    t = np.array(t_start, dtype=np.float64, copy=True)
    t_max = np.broadcast_to(np.asarray(t_max, dtype=np.float64), (n,))
    hit = np.zeros(n, dtype=bool)
    active = np.flatnonzero(t <= t_max)
    for _ in range(max_steps):
        if active.size == 0:
            break
        p = origins[active] + t[active, None] * dirs[active]
        d = scene.sdf(p)
        done = d < eps
        hit[active[done]] = True
        t[active[~done]] += d[~done]
        keep = ~done & (t[active] <= t_max[active])
        active = active[keep]
    return hit, t


def _bound_interval(origin, dirs, radius=BOUND_RADIUS + 1e-3):
    oc = np.asarray(origin, dtype=np.float64)
    b = dirs @ oc
    c = oc @ oc - radius * radius
    disc = b * b - c
    inside = disc > 0.0
    sq = np.sqrt(np.where(inside, disc, 0.0))
    t0 = np.maximum(-b - sq, 0.0)
    t1 = np.minimum(-b + sq, MAX_DIST)
    t1 = np.where(inside, t1, -1.0)
    return t0, t1


def sdf_normals(scene: Scene, p: np.ndarray, h: float = NORMAL_H) -> np.ndarray:
    grad = np.empty_like(p)
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        grad[:, k] = scene.sdf(p + e) - scene.sdf(p - e)
    return normalize(grad, eps=1e-300)


def _raycast_chunk(scene: Scene, origin, dirs, basis):
    t0, t1 = _bound_interval(origin, dirs)
    hit, t = sphere_trace(scene, np.broadcast_to(origin, dirs.shape), dirs, t0, t1)
    n = dirs.shape[0]
    normal = np.zeros((n, 3))
    albedo = np.zeros((n, 3))
    rough = np.zeros(n)
    metal = np.zeros(n)
    depth = np.zeros(n)
    if np.any(hit):
        p = origin + t[hit, None] * dirs[hit]
        nw = sdf_normals(scene, p)
        normal[hit] = make_front_facing(nw @ basis.T)
        albedo[hit], rough[hit], metal[hit] = scene.material(p)
        depth[hit] = t[hit]
    return hit, normal, albedo, rough, metal, depth


def raycast_gbuffer(scene: Scene, camera: Camera, threads: int = 1) -> GBuffer:
    """Sphere-trace primary rays into a camera-space G-buffer with hit depth."""
    origin, dirs = camera.rays()
    h, w = camera.height, camera.width
    flat = dirs.reshape(-1, 3)
    basis = camera.basis()
    parts = ordered_map(lambda s: _raycast_chunk(scene, origin, flat[s], basis),
                        chunk_slices(flat.shape[0]), threads)
    hit, normal, albedo, rough, metal, depth = (np.concatenate(x) for x in zip(*parts))
    gb = dict(
        normal=normal.reshape(h, w, 3), albedo=albedo.reshape(h, w, 3),
        roughness=rough.reshape(h, w), metallic=metal.reshape(h, w),
        alpha=hit.reshape(h, w), depth=depth.reshape(h, w),
    )
    if scene.overrides:
        fg = gb["alpha"]
        for key, value in scene.overrides.items():
            value = np.asarray(value, dtype=np.float64)
            if value.shape[:2] != (h, w):
                raise ValueError(f"override map {key!r} has shape {value.shape}, expected {(h, w)}")
            gb[key] = np.where(fg.reshape(fg.shape + (1,) * (value.ndim - 2)), value, 0.0)
    return GBuffer(**gb)


def surface_frame(gbuffer: GBuffer, camera: Camera):
    """World-space points, normals and view directions of foreground pixels."""
    if gbuffer.depth is None:
        raise ValueError("G-buffer has no depth map; cannot place surface points")
    origin, dirs = camera.rays()
    fg = gbuffer.alpha
    d = dirs[fg]
    points = origin + gbuffer.depth[fg, None] * d
    normals = gbuffer.normal[fg] @ camera.basis()
    return fg, points, normals, -d


def shadow_visibility(scene: Scene, points, normals, light_pos) -> np.ndarray:
    """Binary visibility of ``light_pos`` from each surface point."""
    start = points + SHADOW_OFFSET * normals
    to_light = np.asarray(light_pos) - start
    dist = np.linalg.norm(to_light, axis=-1)
    dirs = to_light / dist[:, None]
    vis = np.ones(points.shape[0], dtype=bool)
    for s in chunk_slices(points.shape[0]):
        hit, _ = sphere_trace(scene, start[s], dirs[s], np.zeros(s.stop - s.start), dist[s])
        vis[s] = ~hit
    return vis


def relight_point(gbuffer: GBuffer, camera: Camera, light_pos, light_intensity,
                  visibility: Optional[np.ndarray] = None) -> np.ndarray:
    """Shade a G-buffer under one point light (no occlusion unless ``visibility`` given).

    ``visibility`` is a boolean array over the foreground pixels in row-major order.
    """
    fg, points, normals, view = surface_frame(gbuffer, camera)
    l, r2 = light_geometry(points, light_pos)
    rad = shade_dirs(normals, view, l, r2, gbuffer.albedo[fg], gbuffer.roughness[fg],
                     gbuffer.metallic[fg], light_intensity, visibility)
    out = np.zeros(gbuffer.shape + (3,))
    out[fg] = rad
    return out


def render_pointlight(scene: Scene, camera: Camera, light_pos, light_intensity,
                      gbuffer: Optional[GBuffer] = None, threads: int = 1) -> np.ndarray:
    if gbuffer is None:
        gbuffer = raycast_gbuffer(scene, camera, threads)
    fg, points, normals, _ = surface_frame(gbuffer, camera)
    vis = shadow_visibility(scene, points, normals, light_pos)
    return relight_point(gbuffer, camera, light_pos, light_intensity, vis)


def render_multilight(scene: Scene, camera: Camera, rig: LightRig, input_image=None,
                      gbuffer: Optional[GBuffer] = None, threads: int = 1) -> MultiLightSet:
    """Render the scene once per rig light.

    Without an explicit ``input_image`` the input is lit by a single point
    light at the camera.
    """
    if gbuffer is None:
        gbuffer = raycast_gbuffer(scene, camera, threads)
    positions = light_positions(rig.poses, rig.radius, camera)
    images = ordered_map(
        lambda p: render_pointlight(scene, camera, p, rig.intensity, gbuffer),
        list(positions), threads)
    if input_image is None:
        cam_light = light_positions([(0.0, 0.0)], rig.radius, camera)[0]
        input_image = render_pointlight(scene, camera, cam_light, rig.intensity, gbuffer)
    return MultiLightSet(np.stack(images), rig.poses, check_image(input_image, "input"),
                         gbuffer.alpha, gbuffer.depth)


@dataclass(frozen=True)
class EnvironmentMap:
    """Equirectangular radiance map, shape (H, 2H, 3)."""

    data: np.ndarray

    def __post_init__(self):
        data = check_image(self.data, "environment")
        if data.shape[1] != 2 * data.shape[0] or data.shape[2] != 3:
            raise ValueError("environment map must be (H, 2H, 3)")
        if np.any(data < 0.0):
            raise ValueError("environment map has negative radiance")
        data = data.copy()
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    def lookup(self, dirs: np.ndarray) -> np.ndarray:
        h, w = self.data.shape[:2]
        x, y, z = dirs[..., 0], dirs[..., 1], dirs[..., 2]
        u = 0.5 + np.arctan2(x, -z) / (2.0 * math.pi)
        v = np.arccos(np.clip(y, -1.0, 1.0)) / math.pi
        col = np.mod(np.floor(u * w).astype(np.int64), w)
        row = np.clip(np.floor(v * h).astype(np.int64), 0, h - 1)
        return self.data[row, col]


def uniform_environment(height: int = 16, value=1.0) -> EnvironmentMap:
    return EnvironmentMap(np.ones((height, 2 * height, 3)) * np.asarray(value, dtype=np.float64))


def sky_environment(height: int = 64, seed: int = 0) -> EnvironmentMap:
    """Procedural sky: vertical gradient, darker ground, and a soft sun lobe."""
    g = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5E7]))
    zenith = g.uniform([0.2, 0.35, 0.6], [0.4, 0.55, 0.9])
    horizon = g.uniform([0.7, 0.7, 0.7], [1.0, 1.0, 1.0])
    ground = g.uniform(0.1, 0.3, 3)
    sun_dir = normalize(np.array([g.normal(), abs(g.normal()) + 0.3, g.normal()]))
    sun_power = g.uniform(2.0, 6.0)

    w = 2 * height
    v = (np.arange(height) + 0.5) / height
    u = (np.arange(w) + 0.5) / w
    uu, vv = np.meshgrid(u, v)
    polar = vv * math.pi
    azim = (uu - 0.5) * 2.0 * math.pi
    d = np.stack([np.sin(polar) * np.sin(azim), np.cos(polar), -np.sin(polar) * np.cos(azim)], axis=-1)
    up = np.clip(d[..., 1], 0.0, 1.0)[..., None]
    sky = horizon + (zenith - horizon) * np.sqrt(up)
    img = np.where(d[..., 1:2] >= 0.0, sky, ground)
    img = img + sun_power * np.exp(40.0 * (d @ sun_dir - 1.0))[..., None]
    return EnvironmentMap(img)


def _tangent_frame(n):
    helper = np.where(np.abs(n[:, 0:1]) < 0.9, [[1.0, 0.0, 0.0]], [[0.0, 1.0, 0.0]])
    t = normalize(np.cross(helper, n))
    b = np.cross(n, t)
    return t, b


def _env_chunk(n, v, albedo, rough, metal, pix, env, spp, seed):
    """Per-pixel estimate: the diffuse lobe from cosine samples alone, the
    specular lobe from cosine and GGX NDF samples with balance-heuristic weights."""
    m = n.shape[0]
    t, b = _tangent_frame(n)
    alpha = lobe_alpha(rough)
    a2 = (alpha * alpha)[:, None]
    diff_acc = np.zeros((m, 3))
    spec_acc = np.zeros((m, 3))
    for k0 in range(0, spp, SAMPLE_CHUNK):
        k = np.arange(k0, min(k0 + SAMPLE_CHUNK, spp))[None, :]
        u0, u1, u2, u3 = (rng.uniform(seed, pix[:, None], k, dim) for dim in range(4))
        nb, tb, bb, vb = n[:, None], t[:, None], b[:, None], v[:, None]

        r = np.sqrt(u0)
        ph = 2.0 * math.pi * u1
        l_cos = (r * np.cos(ph))[..., None] * tb + (r * np.sin(ph))[..., None] * bb \
            + np.sqrt(np.maximum(1.0 - u0, 0.0))[..., None] * nb

        cos_h = np.sqrt((1.0 - u2) / (1.0 + (a2 - 1.0) * u2))
        sin_h = np.sqrt(np.maximum(1.0 - cos_h * cos_h, 0.0))
        ph2 = 2.0 * math.pi * u3
        h = (sin_h * np.cos(ph2))[..., None] * tb + (sin_h * np.sin(ph2))[..., None] * bb \
            + cos_h[..., None] * nb
        l_ggx = 2.0 * np.sum(vb * h, axis=-1, keepdims=True) * h - vb

        for from_cos, l in ((True, l_cos), (False, normalize(l_ggx, eps=1e-300))):
            vv = np.broadcast_to(vb, l.shape)
            nn = np.broadcast_to(nb, l.shape)
            cos_l = np.sum(nn * l, axis=-1)
            hv = normalize(vv + l, eps=1e-300)
            n_dot_h = np.clip(np.sum(nn * hv, axis=-1), 0.0, 1.0)
            v_dot_h = np.sum(vv * hv, axis=-1)
            pdf_cos = np.maximum(cos_l, 0.0) / math.pi
            pdf_ggx = np.where(v_dot_h > 0.0,
                               ggx_ndf(n_dot_h, alpha[:, None]) * n_dot_h / (4.0 * np.maximum(v_dot_h, 1e-12)),
                               0.0)
            diffuse, spec = eval_brdf_arrays(nn, vv, l, albedo[:, None], rough[:, None], metal[:, None])
            above = cos_l > 0.0
            env_l = env.lookup(l)
            pdf = pdf_cos + pdf_ggx
            weight = np.where(above & (pdf > 0.0), cos_l / np.where(pdf > 0.0, pdf, 1.0), 0.0)
            spec_acc += np.sum(spec * env_l * weight[..., None], axis=1)
            if from_cos:
                # cos / pdf_cos is exactly pi
                diff_acc += np.sum(diffuse * env_l * np.where(above, math.pi, 0.0)[..., None], axis=1)
    return diff_acc / spp, spec_acc / spp


def relight_env(gbuffer: GBuffer, camera: Camera, env: EnvironmentMap, samples_per_pixel: int,
                seed: int, threads: int = 1, components: bool = False):
    """Monte-Carlo relighting of a G-buffer under an environment map.

    Deterministic per (seed, pixel index, sample index). With
    ``components=True`` returns ``(diffuse, specular)`` images instead of
    their sum.
    """
    if samples_per_pixel < 1:
        raise ValueError("samples_per_pixel must be at least 1")
    h, w = gbuffer.shape
    fg = gbuffer.alpha
    _, dirs = camera.rays()
    basis = camera.basis()
    n = normalize(gbuffer.normal[fg] @ basis, eps=1e-300)
    v = -dirs[fg]
    pix = np.flatnonzero(fg.ravel())
    albedo, rough, metal = gbuffer.albedo[fg], gbuffer.roughness[fg], gbuffer.metallic[fg]
    parts = ordered_map(
        lambda s: _env_chunk(n[s], v[s], albedo[s], rough[s], metal[s], pix[s], env,
                             samples_per_pixel, seed),
        chunk_slices(pix.size, 1024), threads)
    diffuse = np.zeros((h, w, 3))
    spec = np.zeros((h, w, 3))
    if parts:
        diffuse[fg] = np.concatenate([p[0] for p in parts])
        spec[fg] = np.concatenate([p[1] for p in parts])
    if components:
        return diffuse, spec
    return diffuse + spec


def tonemap_srgb(linear) -> np.ndarray:
    x = np.clip(np.asarray(linear, dtype=np.float64), 0.0, 1.0)
    # 1 + 1.055 (x^(1/2.4) - 1) equals 1.055 x^(1/2.4) - 0.055 but maps 1 to exactly 1
    return np.where(x <= 0.0031308, 12.92 * x, 1.0 + 1.055 * (np.power(x, 1.0 / 2.4) - 1.0))
