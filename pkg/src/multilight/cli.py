"""Command-line entry point.

Every flag can also come from a ``key=value`` file given with ``--config``;
flags on the command line win. Keys naming solver or augmentation options
(for example ``max_iterations`` or ``trigger_probability``) configure those
stages directly.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from .ablation import DEFAULT_COUNTS, run_ablation
from .augment import AugmentConfig, apply_augmentations
from .core import Camera
from .dataset import generate_dataset, load_sample, read_gbuffer, write_gbuffer, write_sample
from .formats import FormatError, atomic_write_text, read_pfm, write_pfm, write_png16
from .metrics import eval_report
from .render import EnvironmentMap, relight_env, tonemap_srgb
from .solver import SolverConfig, solve_gbuffer

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

_SOLVER_KEYS = {f.name for f in fields(SolverConfig)}
_AUGMENT_KEYS = {f.name for f in fields(AugmentConfig)}


class UsageError(Exception):
    pass


class NumericalFailure(Exception):
    pass


def read_config(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True)


def _solver_cfg(options: dict, robust=None) -> SolverConfig:
    values = {k: v for k, v in options.items() if k in _SOLVER_KEYS}
    if robust is not None:
        values["robust_loss"] = robust
    return SolverConfig.from_mapping(values)


def _camera_for(directory, shape) -> Camera:
    d = Path(directory)
    for name in ("sample.json", "camera.json"):
        if (d / name).is_file():
            return Camera.from_dict(json.loads((d / name).read_text(encoding="utf-8"))["camera"])
    return Camera(width=shape[1], height=shape[0])


def cmd_gen(args, options):
    manifest = generate_dataset(args.scenes, args.views, args.out, args.seed, args.res, args.split,
                                args.threads, args.env_spp)
    print(f"wrote {len(manifest['samples'])} samples to {args.out}")


def cmd_solve(args, options):
    sample = load_sample(args.sample)
    idx = [int(x) for x in str(args.lights).split(",") if x.strip()]
    if any(i < 0 or i >= len(sample.mls) for i in idx):
        raise UsageError(f"light indices must lie in 0..{len(sample.mls) - 1}")
    cfg = _solver_cfg(options, args.robust)
    pred, report = solve_gbuffer(sample.mls.input, sample.mls.subset(idx), sample.camera,
                                 sample.rig.subset(idx), cfg, threads=args.threads)
    out = Path(args.out)
    write_gbuffer(pred, out)
    for name, arr in (("normal", pred.normal), ("albedo", pred.albedo), ("roughness", pred.roughness),
                      ("metallic", pred.metallic)):
        write_pfm(arr, out / f"{name}.pfm")
    atomic_write_text(out / "camera.json", _dump({"camera": sample.camera.to_dict(), "lights": idx}))
    atomic_write_text(out / "report.json", _dump(report.to_dict()))
    print(f"solved {report.refined}/{report.foreground} pixels, {report.converged} converged")
    if report.foreground and report.refined == 0:
        raise NumericalFailure("every foreground pixel is invalid")


def cmd_relight(args, options):
    gb = read_gbuffer(args.gbuffer)
    env = EnvironmentMap(read_pfm(args.env))
    camera = _camera_for(args.gbuffer, gb.shape)
    img = relight_env(gb, camera, env, args.spp, args.seed, threads=args.threads)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_png16(tonemap_srgb(img), out)
    write_pfm(img, out.with_suffix(".pfm"))
    print(f"wrote {out}")


def cmd_eval(args, options):
    report = eval_report(read_gbuffer(args.pred), read_gbuffer(args.gt))
    Path(args.report).parent.mkdir(parents=True, exist_ok=True)
    atomic_write_text(args.report, report.to_json())
    print(f"normal mean {report.normal_mean:.3f} deg, albedo PSNR {report.albedo_psnr:.2f} dB")


def cmd_ablate(args, options):
    counts = tuple(int(x) for x in str(args.counts).split(","))
    result = run_ablation(args.dataset, counts, _solver_cfg(options, args.robust), threads=args.threads)
    Path(args.report).parent.mkdir(parents=True, exist_ok=True)
    atomic_write_text(args.report, result.to_json())
    table = result.table()
    atomic_write_text(Path(args.report).with_suffix(".txt"), table)
    print(table, end="")
    # a single light can never constrain a normal, so only L >= 3 counts as a failure
    failed = {k: v for k, v in result.invalid_samples.items() if k >= 3 and v}
    if failed:
        raise NumericalFailure(f"entirely invalid samples: {failed}")


def cmd_augment(args, options):
    sample = load_sample(args.sample)
    values = {k: v for k, v in options.items() if k in _AUGMENT_KEYS}
    cfg = AugmentConfig.from_mapping(values)
    aug = apply_augmentations(sample.mls, cfg, args.seed)
    meta = {k: v for k, v in sample.meta.items() if k not in ("camera", "rig", "files")}
    meta["augment"] = dict(aug.extra["augment"], seed=int(args.seed), config=cfg.to_dict())
    write_sample(args.out, aug, sample.gt, sample.camera, sample.rig.with_poses(aug.poses), meta)
    print(f"wrote {args.out}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    # suppressed defaults so a subcommand does not overwrite a value given before it
    common.add_argument("--config", default=argparse.SUPPRESS, help="key=value file; command-line flags override it")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS,
                        help="worker threads (never changes outputs)")
    p = argparse.ArgumentParser(prog="multilight", description="Multi-light G-buffer estimation toolkit.",
                                parents=[common])
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help):
        return sub.add_parser(name, help=help, parents=[common])

    g = add("gen", "render a procedural dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--scenes", type=int, default=40)
    g.add_argument("--views", type=int, default=2)
    g.add_argument("--res", type=int, default=256)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--split", choices=("train", "test"), default="train")
    g.add_argument("--env-spp", type=int, default=64)
    g.set_defaults(func=cmd_gen)

    s = add("solve", "estimate a G-buffer for one sample")
    s.add_argument("--sample", required=True)
    s.add_argument("--lights", default="0,1,2,3,4,5,6,7,8")
    s.add_argument("--robust", choices=("none", "huber"), default=None)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_solve)

    r = add("relight", "relight a G-buffer under an environment map")
    r.add_argument("--gbuffer", required=True)
    r.add_argument("--env", required=True)
    r.add_argument("--spp", type=int, default=64)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_relight)

    e = add("eval", "compare a predicted G-buffer with ground truth")
    e.add_argument("--pred", required=True)
    e.add_argument("--gt", required=True)
    e.add_argument("--report", required=True)
    e.set_defaults(func=cmd_eval)

    a = add("ablate", "light-count ablation over a dataset")
    a.add_argument("--dataset", required=True)
    a.add_argument("--report", required=True)
    a.add_argument("--counts", default=",".join(str(c) for c in DEFAULT_COUNTS))
    a.add_argument("--robust", choices=("none", "huber"), default=None)
    a.set_defaults(func=cmd_ablate)

    u = add("augment", "write an augmented copy of a sample")
    u.add_argument("--sample", required=True)
    u.add_argument("--seed", type=int, default=0)
    u.add_argument("--out", required=True)
    u.set_defaults(func=cmd_augment)
    return p


def _subparsers(parser):
    action = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    return action.choices


def _apply_config(parser, values):
    """Turn file values into parser defaults; returns the stage options."""
    subs = _subparsers(parser)
    dests = {a.dest for sp in subs.values() for a in sp._actions}
    options = {}
    for key, value in values.items():
        if key in _SOLVER_KEYS or key in _AUGMENT_KEYS:
            options[key] = value
        elif key not in dests or key in ("config", "help"):
            raise UsageError(f"unknown config key {key!r}")
    for sp in subs.values():
        own = {a.dest: a for a in sp._actions}
        defaults = {}
        for key, value in values.items():
            if key in own and key not in options:
                action = own[key]
                action.required = False
                defaults[key] = action.type(value) if action.type else value
        sp.set_defaults(**defaults)
    return options


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        finder = argparse.ArgumentParser(add_help=False)
        finder.add_argument("--config")
        pre, _ = finder.parse_known_args(argv)
        options = {}
        if pre.config:
            options = _apply_config(parser, read_config(pre.config))
        args = parser.parse_args(argv)
        args.threads = getattr(args, "threads", 1)
        if args.threads < 1:
            raise UsageError("--threads must be at least 1")
        args.func(args, options)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (UsageError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FileNotFoundError, FormatError, OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except np.linalg.LinAlgError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
