"""Light-count ablation: solve every sample with 1, 3, 6 and 9 rig lights."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from ._parallel import ordered_map
from .dataset import load_manifest, load_sample
from .metrics import eval_report, mean_reports
from .solver import SolverConfig, solve_gbuffer

# azimuths spread evenly so the light matrix stays well conditioned
SUBSETS = {
    1: (8,),
    3: (0, 3, 6),
    6: (0, 1, 3, 4, 6, 7),
    9: (0, 1, 2, 3, 4, 5, 6, 7, 8),
}
DEFAULT_COUNTS = (1, 3, 6, 9)


def light_subset(count: int, available: int = 9) -> tuple:
    if count > available:
        raise ValueError(f"L={count} exceeds the {available} available lights")
    if count not in SUBSETS:
        raise ValueError(f"no light subset defined for L={count}")
    return SUBSETS[count]


@dataclass
class AblationResult:
    counts: tuple
    subsets: dict
    metrics: dict
    per_sample: dict = field(default_factory=dict)
    invalid_samples: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "counts": list(self.counts),
            "subsets": {str(k): list(v) for k, v in self.subsets.items()},
            "metrics": {str(k): v for k, v in self.metrics.items()},
            "per_sample": {str(k): v for k, v in self.per_sample.items()},
            "invalid_samples": {str(k): v for k, v in self.invalid_samples.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def table(self) -> str:
        """Plain-text table: one row per light count."""
        head = ("L", "alb PSNR", "alb RMSE", "rgh PSNR", "rgh RMSE", "met PSNR", "met RMSE",
                "MAE", "5°", "7.5°", "11.25°", "22.5°")
        lines = ["  ".join(f"{h:>8}" for h in head)]
        for k in self.counts:
            m = self.metrics[k]
            acc = m["normal_accuracy"]
            row = [str(k)] + [f"{m[key]:.3f}" for key in ("albedo_psnr", "albedo_rmse", "roughness_psnr",
                                                          "roughness_rmse", "metallic_psnr", "metallic_rmse",
                                                          "normal_mean")]
            row += [f"{acc[t]:.2f}" for t in ("5", "7.5", "11.25", "22.5")]
            lines.append("  ".join(f"{c:>8}" for c in row))
        return "\n".join(lines) + "\n"


def check_nested(counts: Sequence[int]) -> None:
    """Subsets from L=3 upward are nested; the single-light subset is the
    overhead light and sits outside the L=3 ring by construction."""
    ring = [c for c in counts if c >= 3]
    for a, b in zip(ring, ring[1:]):
        if not set(SUBSETS[a]) <= set(SUBSETS[b]):
            raise ValueError(f"light subsets for L={a} and L={b} are not nested")


def run_ablation(dataset_dir, counts: Sequence[int] = DEFAULT_COUNTS, cfg: SolverConfig = SolverConfig(),
                 threads: int = 1, samples: Optional[Sequence[str]] = None) -> AblationResult:
    counts = tuple(int(c) for c in counts)
    if list(counts) != sorted(set(counts)):
        raise ValueError("light counts must be strictly increasing")
    manifest = load_manifest(dataset_dir)
    names = [s["name"] for s in manifest["samples"]] if samples is None else list(samples)
    if not names:
        raise ValueError("dataset has no samples")
    loaded = [load_sample(Path(dataset_dir) / n) for n in names]
    subsets = {c: light_subset(c, min(len(s.mls) for s in loaded)) for c in counts}
    check_nested(counts)

    def run(job):
        sample, count = job
        idx = subsets[count]
        pred, report = solve_gbuffer(sample.mls.input, sample.mls.subset(idx), sample.camera,
                                     sample.rig.subset(idx), cfg)
        return eval_report(pred, sample.gt), report

    jobs = [(s, c) for c in counts for s in loaded]
    results = ordered_map(run, jobs, threads)
    metrics, per_sample, invalid = {}, {}, {}
    for ci, c in enumerate(counts):
        chunk = results[ci * len(loaded):(ci + 1) * len(loaded)]
        reports = [r for r, _ in chunk]
        metrics[c] = mean_reports(reports)
        per_sample[c] = {s.name: r.normal_mean for s, r in zip(loaded, reports)}
        invalid[c] = [s.name for s, (_, rep) in zip(loaded, chunk) if rep.foreground and rep.refined == 0]
    return AblationResult(counts, subsets, metrics, per_sample, invalid)
