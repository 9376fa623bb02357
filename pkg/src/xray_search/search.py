"""Grasp model, search policies and the episode rollout engine."""

from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import UnknownId
from .heapgen import STREAM_POLICY, HeapConfig, make_rng, sample_heap
from .occupancy import CandidateGrid, OccupancyDistribution, occupancy_distribution, support_size
from .scene import Scene, remove
from .sensor import modal_masks

RECORD_SCHEMA = "xray-rollout/1"


class PolicyKind(str, enum.Enum):
    XRAY = "xray"
    LARGEST = "largest"
    RANDOM = "random"


@dataclass(frozen=True)
class GraspAction:
    """Grasp on ``object_id``; ``None`` means no graspable object (a wasted step)."""

    object_id: Optional[int]

    @property
    def is_noop(self) -> bool:
        return self.object_id is None


NO_ACTION = GraspAction(None)


@dataclass(frozen=True)
class SearchConfig:
    heap: HeapConfig = field(default_factory=HeapConfig.simulation)
    horizon: int = 10
    gamma: float = 0.95
    tau_grasp: float = 0.75
    grid_stride: int = 8
    rot_bins: int = 16
    include_true_pose: bool = True
    workers: int = 1

    def grid(self, width: int, height: int) -> CandidateGrid:
        return CandidateGrid.covering(width, height, self.grid_stride, self.rot_bins,
                                      self.include_true_pose)


def exposure(scene: Scene, obj_id: int, modal: Optional[dict] = None) -> float:
    modal = modal if modal is not None else modal_masks(scene)
    if obj_id not in modal:
        raise UnknownId(obj_id)
    amodal = np.count_nonzero(scene.mask(obj_id))
    return np.count_nonzero(modal[obj_id]) / amodal


def graspable(scene: Scene, obj_id: int, tau: float = 0.75, modal: Optional[dict] = None) -> bool:
    """An object can be lifted when at most ``1 - tau`` of it is covered from above."""
    return exposure(scene, obj_id, modal) >= tau


def score_masks(dist: OccupancyDistribution, scene: Scene,
                modal: Optional[dict] = None) -> list[tuple[int, float]]:
    """Distribution mass under each visible mask, best first (ties by id)."""
    modal = modal if modal is not None else modal_masks(scene)
    values = dist.values.astype(np.float64)
    scores = [(i, float(values[m].sum())) for i, m in modal.items()]
    return sorted(scores, key=lambda s: (-s[1], s[0]))


def _graspable_ids(scene: Scene, tau: float, modal: dict) -> list[int]:
    return [i for i in scene.ids if graspable(scene, i, tau, modal)]


def _largest_visible(ids: list[int], modal: dict) -> int:
    return min(ids, key=lambda i: (-int(np.count_nonzero(modal[i])), i))


def xray_action(scene: Scene, dist: OccupancyDistribution, tau: float = 0.75,
                modal: Optional[dict] = None) -> GraspAction:
    modal = modal if modal is not None else modal_masks(scene)
    ok = set(_graspable_ids(scene, tau, modal))
    if not ok:
        return NO_ACTION
    for obj_id, score in score_masks(dist, scene, modal):
        if score <= 0:
            break
        if obj_id in ok:
            return GraspAction(obj_id)
    return GraspAction(_largest_visible(sorted(ok), modal))


def largest_action(scene: Scene, tau: float = 0.75, modal: Optional[dict] = None) -> GraspAction:
    modal = modal if modal is not None else modal_masks(scene)
    target = scene.target
    if target is not None and graspable(scene, target.id, tau, modal):
        return GraspAction(target.id)
    ok = _graspable_ids(scene, tau, modal)
    return GraspAction(_largest_visible(ok, modal)) if ok else NO_ACTION


def random_action(rng: np.random.Generator, scene: Scene, tau: float = 0.75,
                  modal: Optional[dict] = None) -> GraspAction:
    modal = modal if modal is not None else modal_masks(scene)
    target = scene.target
    if target is not None and graspable(scene, target.id, tau, modal):
        return GraspAction(target.id)
    ok = _graspable_ids(scene, tau, modal)
    if not ok:
        return NO_ACTION
    return GraspAction(ok[int(rng.integers(len(ok)))])


def step(scene: Scene, action: GraspAction, tau: float = 0.75) -> tuple[Scene, int]:
    """Execute a grasp; ungraspable or empty actions leave the scene unchanged."""
    if action.is_noop or action.object_id not in scene:
        return scene, 0
    if not graspable(scene, action.object_id, tau):
        return scene, 0
    was_target = scene.get(action.object_id).is_target
    return remove(scene, action.object_id), int(was_target)


@dataclass
class StepRecord:
    action: Optional[int]
    graspable: bool
    reward: int
    support_before: int
    support_after: int
    surrogate_reward: int
    target_visible: bool
    target_visible_after: bool


@dataclass
class RolloutRecord:
    seed: int
    policy: str
    steps: list[StepRecord] = field(default_factory=list)
    success: bool = False
    action_count: int = 0
    discounted_return: float = 0.0
    gamma: float = 0.95
    n_objects: int = 0
    schema: str = RECORD_SCHEMA

    @property
    def initial_support(self) -> int:
        return self.steps[0].support_before if self.steps else 0

    @property
    def final_support(self) -> int:
        return self.steps[-1].support_after if self.steps else 0

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "RolloutRecord":
        d = json.loads(line)
        if d.get("schema") != RECORD_SCHEMA:
            raise ValueError(f"unsupported rollout schema {d.get('schema')!r}")
        d["steps"] = [StepRecord(**s) for s in d["steps"]]
        return cls(**d)


def _support(scene: Scene, config: SearchConfig) -> tuple[int, Optional[OccupancyDistribution]]:
    if scene.target is None:
        return 0, None  # target extracted: its location is no longer uncertain
    grid = config.grid(scene.width, scene.height)
    dist = occupancy_distribution(scene, grid, workers=config.workers)
    return support_size(dist), dist


def rollout(seed: int, policy: PolicyKind | str, config: SearchConfig | None = None,
            scene: Scene | None = None,
            on_step: Callable[[int, Scene, Optional[OccupancyDistribution], GraspAction], None]
            | None = None) -> RolloutRecord:
    """Run one episode; the heap comes from ``seed`` unless ``scene`` is given.

    ``on_step`` sees each pre-action state, e.g. for image dumps.
    """
    config = config or SearchConfig()
    policy = PolicyKind(policy)
    if scene is None:
        scene = sample_heap(seed, config.heap)
    rng = make_rng(seed, STREAM_POLICY)
    rec = RolloutRecord(seed, policy.value, gamma=config.gamma, n_objects=len(scene.instances))
    support, dist = _support(scene, config)
    for k in range(config.horizon):
        modal = modal_masks(scene)
        if policy is PolicyKind.XRAY:
            action = xray_action(scene, dist, config.tau_grasp, modal)
        elif policy is PolicyKind.LARGEST:
            action = largest_action(scene, config.tau_grasp, modal)
        else:
            action = random_action(rng, scene, config.tau_grasp, modal)
        if on_step is not None:
            on_step(k, scene, dist, action)
        target_visible = bool(modal[scene.target.id].any())
        ok = not action.is_noop and graspable(scene, action.object_id, config.tau_grasp, modal)
        scene, reward = step(scene, action, config.tau_grasp)
        after, dist = _support(scene, config) if ok else (support, dist)
        visible_after = not reward and bool(modal_masks(scene)[scene.target.id].any())
        rec.steps.append(StepRecord(action.object_id, ok, reward, support, after,
                                    support - after, target_visible, visible_after))
        rec.discounted_return += config.gamma ** k * reward
        support = after
        if reward:
            rec.success = True
            break
    rec.action_count = len(rec.steps)
    return rec
