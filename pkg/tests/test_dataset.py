import json
import math

import numpy as np
import pytest

from multilight.ablation import SUBSETS, check_nested, light_subset, run_ablation
from multilight.core import GBuffer
from multilight.dataset import (MAP_FILES, SPLIT_BASE, generate_dataset, load_manifest, load_sample, read_gbuffer,
                                scene_seed_for, write_gbuffer)
from multilight.solver import SolverConfig


@pytest.fixture(scope="module")
def tiny_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("ds")
    manifest = generate_dataset(2, 2, out, seed=3, resolution=24, env_spp=8)
    return out, manifest


def random_gbuffer(n=16, seed=0):
    g = np.random.default_rng(seed)
    normal = g.normal(size=(n, n, 3))
    normal[..., 2] = np.abs(normal[..., 2])
    normal /= np.linalg.norm(normal, axis=-1, keepdims=True)
    alpha = g.uniform(size=(n, n)) > 0.3
    return GBuffer(normal * alpha[..., None], g.uniform(0, 1, (n, n, 3)), g.uniform(0, 1, (n, n)),
                   g.uniform(0, 1, (n, n)), alpha, np.where(alpha, g.uniform(2, 5, (n, n)), 0.0))


def test_gbuffer_roundtrip(tmp_path):
    gb = random_gbuffer()
    write_gbuffer(gb, tmp_path)
    back = read_gbuffer(tmp_path)
    fg = gb.alpha
    assert np.array_equal(back.alpha, gb.alpha)
    cos = np.clip(np.sum(back.normal[fg] * gb.normal[fg], -1), -1, 1)
    assert np.degrees(np.arccos(cos)).max() < 0.01
    for name in ("albedo", "roughness", "metallic"):
        assert np.max(np.abs(getattr(back, name)[fg] - getattr(gb, name)[fg])) <= 1 / 65535
    assert back.depth.astype(np.float32).tobytes() == gb.depth.astype(np.float32).tobytes()
    back.validate()


def test_gbuffer_missing_files(tmp_path):
    write_gbuffer(random_gbuffer(), tmp_path)
    (tmp_path / "albedo.png").unlink()
    (tmp_path / "depth.pfm").unlink()
    with pytest.raises(FileNotFoundError, match="albedo.png, depth.pfm"):
        read_gbuffer(tmp_path)


def test_gbuffer_without_depth(tmp_path):
    gb = random_gbuffer().replace(depth=None)
    write_gbuffer(gb, tmp_path)
    assert read_gbuffer(tmp_path).depth is None


def test_manifest_counts(tiny_dataset):
    out, manifest = tiny_dataset
    assert len(manifest["samples"]) == 4
    for s in manifest["samples"]:
        assert len(s["files"]["lights"]) == 9
        assert len(s["files"]["maps"]) == 6
        d = out / s["name"]
        assert (d / "input.png").is_file() and all((d / f).is_file() for f in MAP_FILES)
        assert all((d / f"light_{i}.png").is_file() for i in range(9))
    assert load_manifest(out) == json.loads((out / "manifest.json").read_text())


def test_samples_load_and_validate(tiny_dataset):
    out, manifest = tiny_dataset
    for s in manifest["samples"]:
        sample = load_sample(out / s["name"])
        sample.gt.validate()
        assert sample.mls.images.shape == (9, 24, 24, 3)
        assert sample.mls.poses == sample.rig.poses
        assert sample.gt.depth is not None


def test_regeneration_is_identical(tiny_dataset, tmp_path):
    out, manifest = tiny_dataset
    again = generate_dataset(2, 2, tmp_path, seed=3, resolution=24, env_spp=8, threads=3)
    assert (tmp_path / "manifest.json").read_bytes() == (out / "manifest.json").read_bytes()
    for s in again["samples"]:
        for f in s["files"]["lights_exact"] + [s["files"]["input_exact"], "depth.pfm"]:
            assert (tmp_path / s["name"] / f).read_bytes() == (out / s["name"] / f).read_bytes()


def test_split_seed_ranges():
    train = {scene_seed_for(s, i, "train") for s in range(5) for i in range(50)}
    test = {scene_seed_for(s, i, "test") for s in range(5) for i in range(50)}
    assert not train & test
    assert all(SPLIT_BASE["test"] <= x for x in test) and all(x < SPLIT_BASE["test"] for x in train)
    with pytest.raises(ValueError):
        scene_seed_for(0, 0, "val")


def test_load_manifest_detects_missing(tiny_dataset, tmp_path):
    import shutil
    out, _ = tiny_dataset
    copy = tmp_path / "copy"
    shutil.copytree(out, copy)
    (copy / "0000_0" / "light_3.pfm").unlink()
    with pytest.raises(FileNotFoundError, match="light_3.pfm"):
        load_manifest(copy)


def test_subsets():
    assert SUBSETS[1] == (8,) and SUBSETS[3] == (0, 3, 6) and SUBSETS[6] == (0, 1, 3, 4, 6, 7)
    assert SUBSETS[9] == tuple(range(9))
    with pytest.raises(ValueError):
        light_subset(9, 6)
    with pytest.raises(ValueError):
        light_subset(4)
    check_nested((1, 3, 6, 9))


def test_ablation_deterministic(tiny_dataset):
    out, _ = tiny_dataset
    cfg = SolverConfig(max_iterations=20)
    a = run_ablation(out, (3, 9), cfg, threads=1)
    b = run_ablation(out, (3, 9), cfg, threads=4)
    assert a.to_json() == b.to_json()
    assert set(a.metrics) == {3, 9}
    assert "11.25" in a.table()
    with pytest.raises(ValueError):
        run_ablation(out, (9, 3), cfg)
