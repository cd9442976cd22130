"""Procedural multi-light dataset: rendering, on-disk layout and loading.

Each sample directory holds the input render, one image per rig light
(16-bit sRGB PNG previews next to exact linear PFMs), the ground-truth
G-buffer maps and a ``sample.json`` with the camera and light poses. A
``manifest.json`` at the root lists every sample.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from ._parallel import ordered_map
from .core import Camera, GBuffer, LightRig, MultiLightSet, decode_normal, encode_normal, light_rig_default
from .formats import atomic_write_text, read_pfm, read_png16, write_pfm, write_png16
from .render import raycast_gbuffer, relight_env, render_multilight, render_pointlight, sky_environment, tonemap_srgb
from .scene import generate_scene

MANIFEST_VERSION = 1
CAMERA_RADIUS = 4.0
MAP_FILES = ("normal.png", "albedo.png", "roughness.png", "metallic.png", "alpha.png", "depth.pfm")
# train and test scene seeds come from disjoint halves of [0, 2^31)
SPLIT_BASE = {"train": 0, "test": 1 << 30}
_SPLIT_SPAN = 1 << 30


def write_gbuffer(gb: GBuffer, directory) -> dict:
    """Write the six map files; returns {map name: file name}.

    Without a depth map the depth file is all zeros and reads back as ``None``.
    """
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    fg = gb.alpha
    normal = np.zeros(gb.normal.shape)
    normal[fg] = encode_normal(gb.normal[fg])
    write_png16(normal, d / "normal.png")
    write_png16(gb.albedo, d / "albedo.png")
    write_png16(gb.roughness, d / "roughness.png")
    write_png16(gb.metallic, d / "metallic.png")
    write_png16(gb.alpha.astype(np.float64), d / "alpha.png")
    depth = np.zeros(gb.shape) if gb.depth is None else np.where(fg, gb.depth, 0.0)
    write_pfm(depth, d / "depth.pfm")
    return {name.split(".")[0]: name for name in MAP_FILES}


def read_gbuffer(directory) -> GBuffer:
    d = Path(directory)
    missing = [name for name in MAP_FILES if not (d / name).is_file()]
    if missing:
        raise FileNotFoundError(f"{d}: missing G-buffer files: {', '.join(missing)}")
    alpha = read_png16(d / "alpha.png") > 0.5
    encoded = read_png16(d / "normal.png")
    normal = np.zeros(alpha.shape + (3,))
    if alpha.any():
        normal[alpha] = decode_normal(encoded[alpha])
    depth = read_pfm(d / "depth.pfm")
    has_depth = bool(alpha.any() and np.all(depth[alpha] > 0.0))
    return GBuffer(normal, read_png16(d / "albedo.png"), read_png16(d / "roughness.png"),
                   read_png16(d / "metallic.png"), alpha, depth if has_depth else None)


def view_camera(scene_seed: int, view: int, resolution: int) -> Camera:
    """View 0 faces the object head-on; other views sit at seeded directions."""
    if view == 0:
        return Camera(position=(0.0, 0.0, CAMERA_RADIUS), width=resolution, height=resolution)
    g = np.random.default_rng(np.random.SeedSequence([int(scene_seed), int(view), 0xC4]))
    az = g.uniform(0.0, 2.0 * math.pi)
    el = g.uniform(-0.35, 0.9)
    pos = CAMERA_RADIUS * np.array([math.cos(el) * math.sin(az), math.sin(el), math.cos(el) * math.cos(az)])
    return Camera(position=tuple(pos), width=resolution, height=resolution)


def _input_lighting(scene_seed: int, view: int, camera: Camera, rig: LightRig):
    g = np.random.default_rng(np.random.SeedSequence([int(scene_seed), int(view), 0x1A]))
    if g.uniform() < 0.5:
        # point light somewhere in the hemisphere facing the camera
        basis = camera.basis()
        d = g.normal(size=3)
        d /= np.linalg.norm(d)
        back = basis[2]
        if d @ back < 0.2:
            d = d + (0.2 - d @ back + g.uniform(0.0, 0.6)) * back
            d /= np.linalg.norm(d)
        return {"kind": "point", "position": [float(x) for x in rig.radius * d],
                "intensity": list(rig.intensity)}
    return {"kind": "environment", "seed": int(g.integers(0, 2**31 - 1)), "height": 32}


def render_sample(scene_seed: int, view: int, resolution: int, rig: Optional[LightRig] = None,
                  env_spp: int = 64, threads: int = 1):
    """Render one (scene, view): returns ``(MultiLightSet, GBuffer, Camera, input description)``."""
    rig = rig or light_rig_default()
    scene = generate_scene(scene_seed)
    camera = view_camera(scene_seed, view, resolution)
    gt = raycast_gbuffer(scene, camera, threads)
    light = _input_lighting(scene_seed, view, camera, rig)
    if light["kind"] == "point":
        inp = render_pointlight(scene, camera, np.array(light["position"]), light["intensity"], gt)
    else:
        env = sky_environment(light["height"], light["seed"])
        inp = relight_env(gt, camera, env, env_spp, light["seed"], threads)
        light["spp"] = env_spp
    mls = render_multilight(scene, camera, rig, inp, gt, threads)
    return mls, gt, camera, light


def write_sample(directory, mls: MultiLightSet, gt: GBuffer, camera: Camera, rig: LightRig,
                 meta: Optional[dict] = None) -> dict:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    files = {"input": "input.png", "input_exact": "input.pfm", "lights": [], "lights_exact": []}
    write_png16(tonemap_srgb(mls.input), d / "input.png")
    write_pfm(mls.input, d / "input.pfm")
    for i, img in enumerate(mls.images):
        write_png16(tonemap_srgb(img), d / f"light_{i}.png")
        write_pfm(img, d / f"light_{i}.pfm")
        files["lights"].append(f"light_{i}.png")
        files["lights_exact"].append(f"light_{i}.pfm")
    files["maps"] = write_gbuffer(gt, d)
    record = {
        "camera": camera.to_dict(),
        "rig": rig.with_poses(mls.poses).to_dict(),
        "files": files,
    }
    record.update(meta or {})
    atomic_write_text(d / "sample.json", json.dumps(record, indent=2, sort_keys=True))
    return record


@dataclass
class Sample:
    name: str
    mls: MultiLightSet
    gt: GBuffer
    camera: Camera
    rig: LightRig
    meta: dict


def load_sample(directory) -> Sample:
    """Read a sample directory; light images come from the exact PFM files."""
    d = Path(directory)
    meta_path = d / "sample.json"
    if not meta_path.is_file():
        raise FileNotFoundError(f"{d}: no sample.json")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    camera = Camera.from_dict(meta["camera"])
    rig = LightRig.from_dict(meta["rig"])
    gt = read_gbuffer(d)
    files = meta["files"]
    images = np.stack([read_pfm(d / f) for f in files["lights_exact"]])
    inp = read_pfm(d / files["input_exact"])
    mls = MultiLightSet(images, rig.poses, inp, gt.alpha, gt.depth)
    return Sample(d.name, mls, gt, camera, rig, meta)


def scene_seed_for(seed: int, index: int, split: str = "train") -> int:
    if split not in SPLIT_BASE:
        raise ValueError(f"unknown split {split!r}")
    return SPLIT_BASE[split] + (int(seed) * 7919 + int(index)) % _SPLIT_SPAN


def generate_dataset(num_scenes: int, views_per_scene: int, out_dir, seed: int = 0,
                     resolution: int = 256, split: str = "train", threads: int = 1,
                     env_spp: int = 64) -> dict:
    """Render ``num_scenes`` x ``views_per_scene`` samples and write ``manifest.json``."""
    if num_scenes < 0 or views_per_scene < 1:
        raise ValueError("need num_scenes >= 0 and views_per_scene >= 1")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rig = light_rig_default()
    jobs = [(i, scene_seed_for(seed, i, split), v) for i in range(num_scenes) for v in range(views_per_scene)]

    def run(job):
        index, scene_seed, view = job
        name = f"{index:04d}_{view}"
        mls, gt, camera, light = render_sample(scene_seed, view, resolution, rig, env_spp)
        record = write_sample(out / name, mls, gt, camera, rig,
                              {"scene_seed": scene_seed, "view": view, "input_light": light})
        record["name"] = name
        return record

    samples = ordered_map(run, jobs, threads)
    manifest = {
        "version": MANIFEST_VERSION,
        "seed": int(seed),
        "split": split,
        "resolution": int(resolution),
        "samples": samples,
    }
    atomic_write_text(out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True))
    return manifest


def load_manifest(directory) -> dict:
    path = Path(directory) / "manifest.json"
    if not path.is_file():
        raise FileNotFoundError(f"{directory}: no manifest.json")
    manifest = json.loads(path.read_text(encoding="utf-8"))
    for s in manifest.get("samples", []):
        sd = Path(directory) / s["name"]
        names = [s["files"]["input"], s["files"]["input_exact"], *s["files"]["lights"],
                 *s["files"]["lights_exact"], *MAP_FILES]
        missing = [n for n in names if not (sd / n).is_file()]
        if missing:
            raise FileNotFoundError(f"{sd}: missing files: {', '.join(missing)}")
    return manifest
