"""Evaluation: angular error statistics, image metrics and G-buffer losses.

All statistics are taken over a foreground mask. Sums use ``math.fsum`` so
results do not depend on summation order.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.ndimage import gaussian_filter

from .core import GBuffer

THRESHOLDS = (3.0, 5.0, 7.5, 11.25, 22.5, 30.0)
PSNR_CAP = 99.0
NORMAL_LAMBDA = 0.25
NORMAL_WEIGHT = 4.0
PBR_WEIGHT = 1.0

SSIM_SIGMA = 1.5
SSIM_RADIUS = 5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _mask(mask, shape) -> np.ndarray:
    if mask is None:
        m = np.ones(shape, dtype=bool)
    else:
        m = np.asarray(mask).astype(bool)
        if m.shape != tuple(shape):
            raise ValueError(f"mask shape {m.shape} does not match {tuple(shape)}")
    if not m.any():
        raise ValueError("empty mask")
    return m


def _mean(values) -> float:
    values = np.ravel(values)
    return math.fsum(values.tolist()) / values.size


def angular_errors(pred, gt, mask=None) -> np.ndarray:
    """Per-pixel angle in degrees between normal maps, masked pixels only."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    m = _mask(mask, pred.shape[:-1])
    cos = np.clip(np.sum(pred[m] * gt[m], axis=-1), -1.0, 1.0)
    return np.degrees(np.arccos(cos))


def angular_error_stats(pred, gt, mask=None, thresholds: Sequence[float] = THRESHOLDS) -> dict:
    e = angular_errors(pred, gt, mask)
    return {
        "mean": _mean(e),
        "median": float(np.median(e)),
        "accuracy": {float(t): 100.0 * np.count_nonzero(e <= t) / e.size for t in thresholds},
    }


def psnr_from_mse(mse: float) -> float:
    if mse < 1e-10:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(1.0 / mse))


def _channels(img) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    return img[..., None] if img.ndim == 2 else img


def mse(pred, gt, mask=None) -> float:
    p, g = _channels(pred), _channels(gt)
    if p.shape != g.shape:
        raise ValueError(f"shape mismatch {p.shape} vs {g.shape}")
    m = _mask(mask, p.shape[:2])
    d = p[m] - g[m]
    return _mean(d * d)


def ssim(pred, gt, mask=None) -> float:
    """Gaussian-window SSIM (11x11, sigma 1.5), averaged over masked centers and channels."""
    p, g = _channels(pred), _channels(gt)
    m = _mask(mask, p.shape[:2])
    c1 = (SSIM_K1 * 1.0) ** 2
    c2 = (SSIM_K2 * 1.0) ** 2

    def blur(x):
        return gaussian_filter(x, SSIM_SIGMA, mode="reflect", truncate=SSIM_RADIUS / SSIM_SIGMA)

    vals = []
    for c in range(p.shape[2]):
        x, y = p[..., c], g[..., c]
        mx, my = blur(x), blur(y)
        sxx = blur(x * x) - mx * mx
        syy = blur(y * y) - my * my
        sxy = blur(x * y) - mx * my
        num = (2.0 * mx * my + c1) * (2.0 * sxy + c2)
        den = (mx * mx + my * my + c1) * (sxx + syy + c2)
        vals.append(num[m] / den[m])
    return _mean(np.stack(vals))


def image_metrics(pred, gt, mask=None):
    """``(psnr_db, rmse, ssim)`` over the masked pixels."""
    e = mse(pred, gt, mask)
    return psnr_from_mse(e), math.sqrt(e), ssim(pred, gt, mask)


def normal_loss(pred, gt, mask=None, lam: float = NORMAL_LAMBDA) -> float:
    """Mean of ``(1 - cos) + lam * |n - n_hat|^2`` over the mask."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    m = _mask(mask, pred.shape[:-1])
    p, g = pred[m], gt[m]
    cos = np.sum(p * g, axis=-1)
    d = p - g
    return _mean((1.0 - cos) + lam * np.sum(d * d, axis=-1))


def pbr_loss(pred: GBuffer, gt: GBuffer, mask=None) -> float:
    m = gt.alpha if mask is None else mask
    return mse(pred.albedo, gt.albedo, m) + mse(pred.roughness, gt.roughness, m) + mse(pred.metallic, gt.metallic, m)


def combined_score(n_loss: float, p_loss: float) -> float:
    if n_loss < 0 or p_loss < 0:
        raise ValueError("losses must be non-negative")
    return (NORMAL_WEIGHT * n_loss + PBR_WEIGHT * p_loss) / (NORMAL_WEIGHT + PBR_WEIGHT)


@dataclass
class MetricsReport:
    normal_mean: float
    normal_median: float
    normal_accuracy: dict
    albedo_psnr: float
    albedo_rmse: float
    roughness_psnr: float
    roughness_rmse: float
    metallic_psnr: float
    metallic_rmse: float
    relight_psnr: Optional[float] = None
    relight_ssim: Optional[float] = None
    normal_loss: float = 0.0
    pbr_loss: float = 0.0
    combined: float = 0.0
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["normal_accuracy"] = {f"{k:g}": v for k, v in self.normal_accuracy.items()}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def eval_report(pred: GBuffer, gt: GBuffer, relit_pairs=(), mask=None) -> MetricsReport:
    """All metrics for a predicted G-buffer; relighting fields stay ``None``
    when no (prediction, reference) image pairs are given."""
    m = gt.alpha if mask is None else np.asarray(mask, dtype=bool)
    stats = angular_error_stats(pred.normal, gt.normal, m)
    a_psnr, a_rmse = _psnr_rmse(pred.albedo, gt.albedo, m)
    r_psnr, r_rmse = _psnr_rmse(pred.roughness, gt.roughness, m)
    mt_psnr, mt_rmse = _psnr_rmse(pred.metallic, gt.metallic, m)
    n_l = normal_loss(pred.normal, gt.normal, m)
    p_l = pbr_loss(pred, gt, m)
    relit_psnr = relit_ssim = None
    pairs = list(relit_pairs)
    if pairs:
        ps, ss = [], []
        for img_p, img_g in pairs:
            p_db, _, s = image_metrics(img_p, img_g, m)
            ps.append(p_db)
            ss.append(s)
        relit_psnr = math.fsum(ps) / len(ps)
        relit_ssim = math.fsum(ss) / len(ss)
    return MetricsReport(
        normal_mean=stats["mean"], normal_median=stats["median"], normal_accuracy=stats["accuracy"],
        albedo_psnr=a_psnr, albedo_rmse=a_rmse, roughness_psnr=r_psnr, roughness_rmse=r_rmse,
        metallic_psnr=mt_psnr, metallic_rmse=mt_rmse, relight_psnr=relit_psnr, relight_ssim=relit_ssim,
        normal_loss=n_l, pbr_loss=p_l, combined=combined_score(n_l, p_l),
    )


def _psnr_rmse(pred, gt, mask):
    e = mse(pred, gt, mask)
    return psnr_from_mse(e), math.sqrt(e)


def mean_reports(reports: Sequence[MetricsReport]) -> dict:
    """Average per-sample reports field by field (absent relighting fields are skipped)."""
    if not reports:
        raise ValueError("no reports to average")
    out = {}
    for key, value in reports[0].to_dict().items():
        if key == "extra":
            continue
        if key == "normal_accuracy":
            out[key] = {t: math.fsum(r.to_dict()[key][t] for r in reports) / len(reports) for t in value}
            continue
        vals = [r.to_dict()[key] for r in reports if r.to_dict()[key] is not None]
        out[key] = math.fsum(vals) / len(vals) if vals else None
    return out
