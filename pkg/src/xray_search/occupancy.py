"""Exact target occupancy distributions.

The distribution is built the way ground-truth labels are: every candidate
target pose on a translation/rotation grid is dropped at floor level into the
scene (all other objects unchanged), its would-be modal mask is compared with
the observed target modal mask, and the amodal masks of all consistent poses
are summed and max-normalized.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import DimensionMismatch, NoTarget
from .scene import Footprint, Pose, Scene, rasterize
from .sensor import modal_mask

IOU_THRESHOLD = 0.9


@dataclass(frozen=True)
class CandidateGrid:
    stride: int = 8
    n_tx: int = 64
    n_ty: int = 48
    n_rot: int = 16
    include_true_pose: bool = True

    def __post_init__(self):
        if self.stride < 1 or self.n_rot < 1 or self.n_tx < 1 or self.n_ty < 1:
            raise ValueError(f"invalid candidate grid {self}")

    @classmethod
    def covering(cls, width: int, height: int, stride: int = 8, n_rot: int = 16,
                 include_true_pose: bool = True) -> "CandidateGrid":
        """Smallest grid whose translations tile a ``width x height`` workspace."""
        return cls(stride, math.ceil(width / stride), math.ceil(height / stride), n_rot,
                   include_true_pose)

    @property
    def size(self) -> int:
        return self.n_tx * self.n_ty * self.n_rot

    def translations(self) -> tuple[np.ndarray, np.ndarray]:
        return (np.arange(self.n_tx, dtype=np.int64) * self.stride,
                np.arange(self.n_ty, dtype=np.int64) * self.stride)

    def contains(self, pose: Pose) -> bool:
        return (pose.n_rot == self.n_rot
                and pose.tx % self.stride == 0 and 0 <= pose.tx // self.stride < self.n_tx
                and pose.ty % self.stride == 0 and 0 <= pose.ty // self.stride < self.n_ty)

    def poses(self):
        """All grid poses in evaluation order: rotation, then row, then column."""
        txs, tys = self.translations()
        for r in range(self.n_rot):
            for ty in tys:
                for tx in txs:
                    yield Pose(int(tx), int(ty), r, self.n_rot)


@dataclass(frozen=True, eq=False)
class OccupancyDistribution:
    values: np.ndarray
    matched_poses: list[Pose] = field(default_factory=list)
    counts: np.ndarray | None = None

    @property
    def support(self) -> np.ndarray:
        return self.values > 0

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True)
class DistributionMetrics:
    balanced_accuracy: float
    iou: float


def without_target(scene: Scene) -> Scene:
    """The scene minus its target, other objects left exactly where they are."""
    return Scene(scene.width, scene.height, scene.pixel_size, scene.floor_height,
                 tuple(i for i in scene.instances if not i.is_target))


def candidate_modal_mask(scene_without_target: Scene, target_footprint: Footprint,
                         pose: Pose) -> np.ndarray:
    """Modal mask the target would have at ``pose`` resting on the floor."""
    s = scene_without_target
    amodal = rasterize(target_footprint, pose, s.width, s.height)
    return amodal & (s.floor_height + target_footprint.thickness > s.heightmap)


def mask_iou(a: np.ndarray, b: np.ndarray) -> float:
    if a.shape != b.shape:
        raise DimensionMismatch(f"{a.shape} vs {b.shape}")
    union = np.count_nonzero(a | b)
    if union == 0:
        return 1.0
    return np.count_nonzero(a & b) / union


def is_consistent(candidate_modal: np.ndarray, observed_modal: np.ndarray,
                  threshold: float = IOU_THRESHOLD) -> bool:
    if candidate_modal.shape != observed_modal.shape:
        raise DimensionMismatch(f"{candidate_modal.shape} vs {observed_modal.shape}")
    c = np.count_nonzero(candidate_modal)
    o = np.count_nonzero(observed_modal)
    if c == 0 and o == 0:
        return True
    inter = np.count_nonzero(candidate_modal & observed_modal)
    return inter / (c + o - inter) > threshold


def normalize(counts: np.ndarray) -> np.ndarray:
    top = counts.max() if counts.size else 0
    if top == 0:
        return np.zeros(counts.shape, dtype=np.float32)
    return (counts.astype(np.float64) / float(top)).astype(np.float32)


def occupancy_distribution(scene: Scene, grid: CandidateGrid | None = None,
                           workers: int = 1,
                           threshold: float = IOU_THRESHOLD) -> OccupancyDistribution:
    """Exact occupancy distribution of the scene's target.

    ``workers`` splits rotation bins across threads; per-thread integer
    accumulators are merged in bin order, so the result never depends on it.
    """
    target = scene.target
    if target is None:
        raise NoTarget("scene has no target object")
    grid = grid or CandidateGrid.covering(scene.width, scene.height)
    fp = target.footprint

    others = scene.heightmap_without(target.id)
    visible = np.ascontiguousarray(scene.floor_height + fp.thickness > others, dtype=np.uint8)
    observed = np.ascontiguousarray(modal_mask(scene, target.id), dtype=np.uint8)
    obs_count = int(observed.sum())
    txs, tys = grid.translations()

    def scan(rot_bins, n_rot, xs, ys):
        acc = np.zeros(scene.shape, dtype=np.int32)
        hits = []
        for r in rot_bins:
            dx, dy = fp.offsets(r, n_rot)
            h = np.zeros((ys.size, xs.size), dtype=np.uint8)
            _kernels.scan_rotation(visible, observed, obs_count, dx, dy, xs, ys,
                                   float(threshold), acc, h)
            hits.append(h)
        return acc, hits

    bins = list(range(grid.n_rot))
    workers = max(1, min(int(workers), len(bins)))
    if workers == 1:
        parts = [scan(bins, grid.n_rot, txs, tys)]
    else:
        chunks = [bins[k::workers] for k in range(workers)]
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda c: scan(c, grid.n_rot, txs, tys), chunks))
        # restore rotation order for pose bookkeeping
        ordered = [None] * len(bins)
        for chunk, (_, hits) in zip(chunks, parts):
            for r, h in zip(chunk, hits):
                ordered[r] = h
        parts = [(sum((p[0] for p in parts[1:]), parts[0][0]), ordered)]

    counts, hits = parts[0]
    matched = []
    for r, h in enumerate(hits):
        for j, i in zip(*np.nonzero(h)):
            matched.append(Pose(int(txs[i]), int(tys[j]), r, grid.n_rot))

    if grid.include_true_pose and not grid.contains(target.pose):
        p = target.pose
        acc, (h,) = scan([p.rot_bin], p.n_rot, np.array([p.tx], np.int64),
                         np.array([p.ty], np.int64))
        if h[0, 0]:
            counts = counts + acc
            matched.append(p)

    return OccupancyDistribution(normalize(counts), matched, counts)


def support_size(dist: OccupancyDistribution | np.ndarray) -> int:
    values = dist.values if isinstance(dist, OccupancyDistribution) else dist
    return int(np.count_nonzero(values > 0))


def surrogate_reward(dist_k, dist_k1) -> int:
    """Reduction in support size from one step to the next."""
    a = dist_k.values if isinstance(dist_k, OccupancyDistribution) else dist_k
    b = dist_k1.values if isinstance(dist_k1, OccupancyDistribution) else dist_k1
    if a.shape != b.shape:
        raise DimensionMismatch(f"{a.shape} vs {b.shape}")
    return support_size(a) - support_size(b)


def distribution_metrics(pred, gt, positive: float = 0.1,
                         tolerance: float = 0.2) -> DistributionMetrics:
    """Balanced accuracy and IoU of a predicted distribution against ground truth.

    A ground-truth pixel is positive above ``positive`` and negative otherwise;
    it counts as correct when the prediction lies within ``tolerance``.  A class
    absent from ``gt`` scores accuracy 1.
    """
    pred = pred.values if isinstance(pred, OccupancyDistribution) else np.asarray(pred)
    gt = gt.values if isinstance(gt, OccupancyDistribution) else np.asarray(gt)
    if pred.shape != gt.shape:
        raise DimensionMismatch(f"{pred.shape} vs {gt.shape}")
    pred = pred.astype(np.float64)
    gt = gt.astype(np.float64)
    pos = gt > positive
    close = np.abs(pred - gt) <= tolerance
    n_pos = np.count_nonzero(pos)
    n_neg = pos.size - n_pos
    acc_pos = np.count_nonzero(pos & close) / n_pos if n_pos else 1.0
    acc_neg = np.count_nonzero(~pos & close) / n_neg if n_neg else 1.0
    pred_pos = pred > positive
    union = np.count_nonzero(pos | pred_pos)
    iou = np.count_nonzero(pos & pred_pos) / union if union else 1.0
    return DistributionMetrics(0.5 * (acc_pos + acc_neg), iou)
