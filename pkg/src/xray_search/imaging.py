"""Debug image dumps: depth, masks and distribution heatmaps."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

DEPTH_SCALE = 1e4  # 16-bit counts per meter (0.1 mm resolution)


def save_depth_png(depth: np.ndarray, path, scale: float = DEPTH_SCALE) -> None:
    """16-bit PNG storing ``round(depth * scale)``; the scale goes to a JSON sidecar."""
    path = Path(path)
    raw = np.clip(np.round(np.asarray(depth, dtype=np.float64) * scale), 0, 65535)
    Image.fromarray(raw.astype(np.uint16)).save(path)
    path.with_suffix(".json").write_text(json.dumps({"scale": scale, "unit": "m"}) + "\n")


def load_depth_png(path) -> np.ndarray:
    path = Path(path)
    scale = json.loads(path.with_suffix(".json").read_text())["scale"]
    return np.asarray(Image.open(path), dtype=np.float64) / scale


def save_mask_png(mask: np.ndarray, path) -> None:
    Image.fromarray(np.where(mask, 255, 0).astype(np.uint8)).save(Path(path))


def save_distribution(values: np.ndarray, path) -> None:
    """8-bit heatmap PNG plus the raw float32 little-endian raster next to it (``.f32``)."""
    path = Path(path)
    v = np.asarray(values, dtype=np.float32)
    Image.fromarray(np.round(np.clip(v, 0, 1) * 255).astype(np.uint8)).save(path)
    path.with_suffix(".f32").write_bytes(v.astype("<f4").tobytes())


def load_distribution_raw(path, shape: tuple[int, int]) -> np.ndarray:
    return np.frombuffer(Path(path).with_suffix(".f32").read_bytes(), dtype="<f4").reshape(shape)
