"""Image files: PFM (exact float32) and 16-bit PNG."""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np
import png

PNG_MAX = 65535


class FormatError(ValueError):
    """A file that does not parse; the message names the byte offset."""


def write_pfm(img, path) -> None:
    """Little-endian PFM; color for (H, W, 3), grayscale for (H, W) or (H, W, 1)."""
    arr = np.asarray(img)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[..., 0]
    if arr.ndim == 2:
        magic = b"Pf"
    elif arr.ndim == 3 and arr.shape[2] == 3:
        magic = b"PF"
    else:
        raise ValueError(f"cannot store an array of shape {arr.shape} as PFM")
    if not np.all(np.isfinite(arr)):
        raise ValueError("PFM data must be finite")
    h, w = arr.shape[:2]
    header = magic + b"\n" + f"{w} {h}\n-1.0\n".encode("ascii")
    payload = np.ascontiguousarray(arr[::-1], dtype="<f4").tobytes()
    with open(path, "wb") as f:
        f.write(header + payload)


def _token_line(data: bytes, pos: int):
    end = data.find(b"\n", pos)
    if end < 0:
        raise FormatError(f"malformed PFM header: missing newline after byte offset {pos}")
    return data[pos:end].decode("ascii", errors="replace").strip(), end + 1


def parse_pfm(data: bytes, name: str = "<bytes>") -> np.ndarray:
    magic, pos = _token_line(data, 0)
    if magic == "PF":
        channels = 3
    elif magic == "Pf":
        channels = 1
    else:
        raise FormatError(f"{name}: bad PFM magic {magic!r} at byte offset 0")
    dims_at = pos
    dims, pos = _token_line(data, pos)
    parts = dims.split()
    if len(parts) != 2 or not all(p.isdigit() for p in parts):
        raise FormatError(f"{name}: malformed dimensions {dims!r} at byte offset {dims_at}")
    w, h = int(parts[0]), int(parts[1])
    if w == 0 or h == 0:
        raise FormatError(f"{name}: zero dimension at byte offset {dims_at}")
    scale_at = pos
    scale_txt, pos = _token_line(data, pos)
    try:
        scale = float(scale_txt)
    except ValueError:
        raise FormatError(f"{name}: malformed scale {scale_txt!r} at byte offset {scale_at}") from None
    if scale == 0.0:
        raise FormatError(f"{name}: zero scale at byte offset {scale_at}")
    need = w * h * channels * 4
    have = len(data) - pos
    if have < need:
        raise FormatError(f"{name}: truncated payload at byte offset {len(data)}: "
                          f"expected {need} bytes after offset {pos}, found {have}")
    if have > need:
        raise FormatError(f"{name}: unexpected trailing data at byte offset {pos + need}")
    dtype = "<f4" if scale < 0 else ">f4"
    arr = np.frombuffer(data, dtype=dtype, count=w * h * channels, offset=pos)
    arr = arr.reshape((h, w, channels) if channels == 3 else (h, w))[::-1]
    return arr.astype(np.float64)


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as f:
        return parse_pfm(f.read(), str(path))


def write_png16(img, path) -> None:
    """Values in [0, 1] quantized to 16 bits; (H, W) or (H, W, 1) gray, (H, W, 3) RGB."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[..., 0]
    gray = arr.ndim == 2
    if not gray and (arr.ndim != 3 or arr.shape[2] != 3):
        raise ValueError(f"cannot store an array of shape {arr.shape} as PNG")
    q = np.round(np.clip(arr, 0.0, 1.0) * PNG_MAX).astype(np.uint16)
    h, w = q.shape[:2]
    rows = q.reshape(h, -1)
    writer = png.Writer(width=w, height=h, greyscale=gray, bitdepth=16, interlace=False)
    with open(path, "wb") as f:
        writer.write(f, rows)


def read_png16(path) -> np.ndarray:
    """Floats in [0, 1]; gray files come back as (H, W)."""
    try:
        w, h, rows, info = png.Reader(filename=os.fspath(path)).asDirect()
        data = np.vstack([np.asarray(r, dtype=np.float64) for r in rows])
    except png.Error as err:
        raise FormatError(f"{path}: {err}") from None
    planes = info["planes"]
    scale = float(2 ** info["bitdepth"] - 1)
    data = data.reshape(h, w, planes) / scale
    if info.get("alpha"):
        data = data[..., :-1]
        planes -= 1
    return data[..., 0] if planes == 1 else data


def atomic_write_text(path, text: str) -> None:
    """Write to a sibling temp file, then rename over ``path``."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as f:
        f.write(text)
    os.replace(tmp, path)
