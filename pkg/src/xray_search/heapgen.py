"""Seeded procedural heaps.

A heap is built by dropping the target first and then N distractors drawn
from a fixed procedural object library.  Every random draw comes from a
Philox counter-based generator keyed by the seed, so ``(seed, config)``
determines the scene bit for bit.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from typing import Optional

import numpy as np

from .errors import EmptyPlacement
from .scene import Footprint, Pose, Scene, place

# generator stream ids; distinct streams keep heap sampling and policy
# randomness independent of each other
STREAM_HEAP = 0
STREAM_POLICY = 1
STREAM_LIBRARY = 2


def make_rng(seed: int, stream: int = STREAM_HEAP) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), stream])))


@dataclass(frozen=True)
class LibraryConfig:
    """Parameters of the procedural distractor library (sizes in meters)."""

    n_models: int = 240
    seed: int = 2020
    kinds: tuple[str, ...] = ("rectangle", "lshape", "disc")
    size_range: tuple[float, float] = (0.03, 0.10)
    aspect_range: tuple[float, float] = (1.0, 3.0)
    thickness_range: tuple[float, float] = (0.008, 0.05)
    test_every: int = 5  # every k-th model is held out for the test split


@dataclass(frozen=True)
class HeapConfig:
    n_lambda: float = 12.0
    n_min: int = 10
    n_max: int = 15
    placement_sigma: float = 28.0  # pixels
    center_margin: float = 0.3  # heap centers avoid this fraction of each border
    width: int = 256
    height: int = 192
    pixel_size: float = 0.002
    n_rot: int = 16
    # target box: length, width, thickness (m); the 2:1 equal-volume box
    target_dims: tuple[float, float, float] = (0.0424, 0.0212, 0.005)
    library: LibraryConfig = field(default_factory=LibraryConfig)

    def __post_init__(self):
        if not self.n_min <= self.n_max:
            raise ValueError("n_min must not exceed n_max")
        if not self.placement_sigma > 0:
            raise ValueError("placement_sigma must be positive")

    @classmethod
    def simulation(cls, n_objects: int = 14, **kw) -> "HeapConfig":
        """Fixed-count preset used for policy rollouts (N distractors + target)."""
        return cls(n_min=n_objects, n_max=n_objects, **kw)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "HeapConfig":
        d = dict(d)
        lib = d.pop("library", None)
        for k in ("target_dims",):
            if k in d:
                d[k] = tuple(d[k])
        library = LibraryConfig(**{k: tuple(v) if isinstance(v, list) else v
                                   for k, v in (lib or {}).items()})
        return cls(library=library, **d)

    def with_(self, **kw) -> "HeapConfig":
        return replace(self, **kw)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def target_footprint(self) -> Footprint:
        length, width, thickness = self.target_dims
        w = max(1, round(length / self.pixel_size))
        h = max(1, round(width / self.pixel_size))
        return Footprint.rectangle(w, h, thickness, name="target")


@dataclass(frozen=True)
class ModelSpec:
    index: int
    kind: str
    dims: tuple[float, float]
    thickness: float

    def footprint(self, pixel_size: float) -> Footprint:
        return _footprint(self, pixel_size)


@lru_cache(maxsize=4096)
def _footprint(spec: ModelSpec, pixel_size: float) -> Footprint:
    a = max(1, round(spec.dims[0] / pixel_size))
    b = max(1, round(spec.dims[1] / pixel_size))
    if spec.kind == "rectangle":
        grid = np.ones((b, a), dtype=bool)
    elif spec.kind == "lshape":
        grid = np.ones((b, a), dtype=bool)
        # keep an L by cutting the far quadrant; arms are at least 1 px thick
        grid[max(1, b // 2):, max(1, a // 2):] = False
        if not grid.any():
            grid[0, 0] = True
    elif spec.kind == "disc":
        r = a / 2.0
        jj, ii = np.mgrid[0:a, 0:a]
        grid = (ii + 0.5 - r) ** 2 + (jj + 0.5 - r) ** 2 <= r * r
        if not grid.any():
            grid[a // 2, a // 2] = True
    else:
        raise ValueError(f"unknown model kind {spec.kind!r}")
    return Footprint(grid, spec.thickness, name=f"{spec.kind}-{spec.index}")


@lru_cache(maxsize=16)
def model_library(cfg: LibraryConfig) -> tuple[ModelSpec, ...]:
    rng = make_rng(cfg.seed, STREAM_LIBRARY)
    out = []
    for k in range(cfg.n_models):
        kind = cfg.kinds[int(rng.integers(len(cfg.kinds)))]
        size = float(rng.uniform(*cfg.size_range))
        aspect = float(rng.uniform(*cfg.aspect_range))
        thickness = float(rng.uniform(*cfg.thickness_range))
        dims = (size, size) if kind == "disc" else (size, size / aspect)
        out.append(ModelSpec(k, kind, dims, thickness))
    return tuple(out)


def partition_models(cfg: LibraryConfig, partition: Optional[str]) -> tuple[ModelSpec, ...]:
    """Models of the ``train`` or ``test`` partition (``None`` = all)."""
    models = model_library(cfg)
    if partition is None:
        return models
    held_out = [m.index % cfg.test_every == cfg.test_every - 1 for m in models]
    if partition == "test":
        return tuple(m for m, h in zip(models, held_out) if h)
    if partition == "train":
        return tuple(m for m, h in zip(models, held_out) if not h)
    raise ValueError(f"unknown partition {partition!r}")


def sample_object_count(rng: np.random.Generator, config: HeapConfig) -> int:
    """Poisson(lambda) rejection-sampled into ``[n_min, n_max]``."""
    if config.n_min == config.n_max:
        return config.n_min
    while True:
        n = int(rng.poisson(config.n_lambda))
        if config.n_min <= n <= config.n_max:
            return n


def _gaussian_point(rng, center, sigma, width, height) -> tuple[int, int]:
    # truncated by rejection against the workspace rectangle
    while True:
        x, y = rng.normal(center, sigma)
        tx, ty = int(math.floor(x)), int(math.floor(y))
        if 0 <= tx < width and 0 <= ty < height:
            return tx, ty


def sample_heap(seed: int, config: HeapConfig, partition: Optional[str] = None) -> Scene:
    rng = make_rng(seed)
    n = sample_object_count(rng, config)
    models = partition_models(config.library, partition)
    picks = rng.choice(len(models), size=n, replace=n > len(models))

    m = config.center_margin
    center = (rng.uniform(m * config.width, (1 - m) * config.width),
              rng.uniform(m * config.height, (1 - m) * config.height))
    scene = Scene(config.width, config.height, config.pixel_size)

    target = config.target_footprint()
    while True:
        tx, ty = _gaussian_point(rng, center, config.placement_sigma, config.width, config.height)
        pose = Pose(tx, ty, int(rng.integers(config.n_rot)), config.n_rot)
        try:
            scene = place(scene, target, pose, is_target=True)
            break
        except EmptyPlacement:
            continue

    for k in picks:
        fp = models[int(k)].footprint(config.pixel_size)
        tx, ty = _gaussian_point(rng, center, config.placement_sigma, config.width, config.height)
        pose = Pose(tx, ty, int(rng.integers(config.n_rot)), config.n_rot)
        try:
            scene = place(scene, fp, pose)
        except EmptyPlacement:
            pass  # fell off the workspace
    return scene


def fixture_f1() -> Scene:
    """Canonical 16x12 scene: 4x2 target under a 6x6 occluder, plus a free 3x3 box."""
    scene = Scene(16, 12, pixel_size=0.01)
    scene = place(scene, Footprint.rectangle(4, 2, 1.0, name="target"), Pose(5, 3, 0),
                  is_target=True, obj_id=0)
    scene = place(scene, Footprint.rectangle(6, 6, 2.0, name="occluder"), Pose(5, 3, 0), obj_id=1)
    scene = place(scene, Footprint.rectangle(3, 3, 1.5, name="box"), Pose(12, 8, 0), obj_id=2)
    return scene
