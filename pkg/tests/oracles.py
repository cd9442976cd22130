"""Reference implementations written independently of the package code.

Scalar, pure-``math`` versions of the shading model and light geometry,
plus a few closed-form helpers used to check the vectorized library.
"""

import math

import numpy as np


def dot(a, b):
    return sum(x * y for x, y in zip(a, b))


def unit(a):
    s = math.sqrt(dot(a, a))
    return [x / s for x in a]


def brdf(n, v, l, albedo, rough, metal):
    """Scalar metallic-roughness BRDF; returns (diffuse, specular) RGB lists."""
    alpha = max(rough * rough, 1e-3)
    h = [a + b for a, b in zip(v, l)]
    hn = math.sqrt(dot(h, h))
    nv = min(max(dot(n, v), 0.0), 1.0)
    nl = min(max(dot(n, l), 0.0), 1.0)
    diffuse = [(1 - metal) * a / math.pi for a in albedo]
    if hn == 0.0:
        return diffuse, [0.0, 0.0, 0.0]
    h = [x / hn for x in h]
    nh = min(max(dot(n, h), 0.0), 1.0)
    vh = min(max(dot(v, h), 0.0), 1.0)
    a2 = alpha * alpha
    d = a2 / (math.pi * (nh * nh * (a2 - 1) + 1) ** 2)
    k = alpha / 2

    def g1(x):
        return x / (x * (1 - k) + k)

    g = g1(nv) * g1(nl)
    spec = []
    for a in albedo:
        f0 = 0.04 * (1 - metal) + a * metal
        f = f0 + (1 - f0) * (1 - vh) ** 5
        spec.append(d * g * f / max(4 * nv * nl, 1e-6))
    return diffuse, spec


def shade(n, v, point, albedo, rough, metal, light_pos, intensity):
    to = [a - b for a, b in zip(light_pos, point)]
    r2 = dot(to, to)
    l = unit(to)
    nl = dot(n, l)
    if nl <= 0:
        return [0.0, 0.0, 0.0]
    d, s = brdf(n, v, l, albedo, rough, metal)
    return [(dd + ss) * nl * e / r2 for dd, ss, e in zip(d, s, intensity)]


def rotate(p, axis, angle):
    """Rodrigues rotation of ``p`` about unit ``axis``."""
    p, k = np.asarray(p, float), np.asarray(axis, float)
    return p * math.cos(angle) + np.cross(k, p) * math.sin(angle) + k * (k @ p) * (1 - math.cos(angle))


def light_from_rotations(theta, phi, radius, cam_pos, up):
    """Tilt the camera direction away by ``phi`` toward the rig's u axis,
    then spin it about the camera direction by ``theta``."""
    c = np.asarray(cam_pos, float) / np.linalg.norm(cam_pos)
    u = np.cross(up, c)
    u /= np.linalg.norm(u)
    v = np.cross(c, u)
    tilted = rotate(c, v, phi)  # v x c = u, so this tilts c toward u
    return radius * rotate(tilted, c, theta)


def lambertian_ps(obs, dirs):
    """Classic least-squares photometric stereo for one pixel."""
    g, *_ = np.linalg.lstsq(np.asarray(dirs, float), np.asarray(obs, float), rcond=None)
    return g / np.linalg.norm(g), np.linalg.norm(g)


def bilinear_resize(img, out_h, out_w):
    """Half-pixel-centred bilinear resampling with edge clamping, pixel by pixel."""
    h, w = img.shape[:2]
    out = np.zeros((out_h, out_w) + img.shape[2:])
    for i in range(out_h):
        y = min(max((i + 0.5) * h / out_h - 0.5, 0.0), h - 1)
        y0 = min(int(math.floor(y)), h - 1)
        y1 = min(y0 + 1, h - 1)
        fy = y - y0
        for j in range(out_w):
            x = min(max((j + 0.5) * w / out_w - 0.5, 0.0), w - 1)
            x0 = min(int(math.floor(x)), w - 1)
            x1 = min(x0 + 1, w - 1)
            fx = x - x0
            out[i, j] = ((1 - fy) * ((1 - fx) * img[y0, x0] + fx * img[y0, x1])
                         + fy * ((1 - fx) * img[y1, x0] + fx * img[y1, x1]))
    return out


def srgb(x):
    x = min(max(x, 0.0), 1.0)
    return 12.92 * x if x <= 0.0031308 else 1.055 * x ** (1 / 2.4) - 0.055
