import json

import numpy as np
import pytest

from multilight.cli import main, read_config
from multilight.dataset import load_sample
from multilight.formats import read_pfm, write_pfm
from multilight.render import sky_environment


@pytest.fixture(scope="module")
def ds(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "ds"
    assert main(["gen", "--out", str(out), "--scenes", "1", "--views", "2", "--res", "20", "--seed", "5",
                 "--env-spp", "4"]) == 0
    return out


def test_gen_solve_eval(ds, tmp_path):
    sol = tmp_path / "sol"
    assert main(["solve", "--sample", str(ds / "0000_0"), "--out", str(sol)]) == 0
    for f in ("normal.png", "albedo.png", "normal.pfm", "report.json", "camera.json", "depth.pfm"):
        assert (sol / f).is_file()
    report = json.loads((sol / "report.json").read_text())
    assert report["foreground"] > 0 and "wall_time" not in report
    assert main(["eval", "--pred", str(sol), "--gt", str(ds / "0000_0"), "--report", str(tmp_path / "e.json")]) == 0
    ev = json.loads((tmp_path / "e.json").read_text())
    assert ev["normal_mean"] < 5 and ev["relight_psnr"] is None


def test_relight(ds, tmp_path):
    env = tmp_path / "env.pfm"
    write_pfm(sky_environment(8, 1).data, env)
    out = tmp_path / "r" / "img.png"
    assert main(["relight", "--gbuffer", str(ds / "0000_0"), "--env", str(env), "--spp", "4", "--seed", "2",
                 "--out", str(out)]) == 0
    assert out.is_file()
    img = read_pfm(out.with_suffix(".pfm"))
    assert img.shape == (20, 20, 3) and img.max() > 0


def test_augment_command(ds, tmp_path):
    out = tmp_path / "aug"
    assert main(["augment", "--sample", str(ds / "0000_1"), "--seed", "3", "--out", str(out)]) == 0
    s = load_sample(out)
    assert s.meta["augment"]["seed"] == 3
    assert set(s.meta["augment"]) >= {"degrade", "intensity", "orientation", "shuffle", "mix", "config"}


def test_ablate_and_config(ds, tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text(f"# ablation run\ndataset = {ds}\nthreads = 2\ncounts = 3,9\nmax_iterations = 10\n")
    assert main(["--config", str(cfg), "ablate", "--report", str(tmp_path / "a.json")]) == 0
    rep = json.loads((tmp_path / "a.json").read_text())
    assert rep["counts"] == [3, 9]
    assert (tmp_path / "a.txt").read_text().startswith("       L")


def test_cli_flag_overrides_config(ds, tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("counts = 9\n")
    assert main(["ablate", "--config", str(cfg), "--dataset", str(ds), "--counts", "3",
                 "--report", str(tmp_path / "a.json")]) == 0
    assert json.loads((tmp_path / "a.json").read_text())["counts"] == [3]


def test_read_config(tmp_path):
    p = tmp_path / "x.cfg"
    p.write_text("a = 1\n\n# c\nenv-spp=4  # trailing\n")
    assert read_config(p) == {"a": "1", "env_spp": "4"}


def test_usage_errors(ds, tmp_path, capsys):
    assert main([]) == 2
    assert main(["solve", "--sample", str(ds / "0000_0")]) == 2
    assert main(["--threads", "0", "eval", "--pred", "a", "--gt", "b", "--report", "c"]) == 2
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour = blue\n")
    assert main(["--config", str(bad), "eval", "--pred", "a", "--gt", "b", "--report", "c"]) == 2
    bad.write_text("just words\n")
    assert main(["--config", str(bad), "eval", "--pred", "a", "--gt", "b", "--report", "c"]) == 2
    assert main(["solve", "--sample", str(ds / "0000_0"), "--lights", "0,12", "--out", str(tmp_path / "s")]) == 2


def test_data_errors(ds, tmp_path):
    assert main(["solve", "--sample", str(tmp_path / "missing"), "--out", str(tmp_path / "s")]) == 3
    env = tmp_path / "broken.pfm"
    env.write_bytes(b"PF\n4 2\n-1.0\n" + b"\0" * 10)
    assert main(["relight", "--gbuffer", str(ds / "0000_0"), "--env", str(env), "--out",
                 str(tmp_path / "o.png")]) == 3
    assert main(["eval", "--pred", str(tmp_path), "--gt", str(ds / "0000_0"), "--report",
                 str(tmp_path / "e.json")]) == 3


def test_numerical_failure(ds, tmp_path):
    # two lights can never fix a normal, so every pixel is invalid
    assert main(["solve", "--sample", str(ds / "0000_0"), "--lights", "0,4", "--out", str(tmp_path / "s")]) == 4
