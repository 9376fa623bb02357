"""Mechanical search over 2.5D heaps with exact target occupancy distributions."""

from .errors import (
    ChecksumError, CorruptMagic, DimensionMismatch, EmptyPlacement, NoTarget, TruncatedFile,
    UnknownId, VersionMismatch,
)
from .heapgen import HeapConfig, fixture_f1, sample_heap
from .occupancy import (
    CandidateGrid, OccupancyDistribution, distribution_metrics, occupancy_distribution,
    support_size, surrogate_reward,
)
from .scene import Footprint, ObjectInstance, Pose, Scene, heightmap, place, rasterize, remove
from .search import PolicyKind, RolloutRecord, SearchConfig, rollout
from .sensor import amodal_mask, modal_mask, observe, render_depth

__version__ = "0.1.0"
