"""Overhead orthographic depth camera and segmentation masks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NoTarget
from .scene import Scene

CAMERA_HEIGHT = 0.8


@dataclass(frozen=True, eq=False)
class AugmentedObservation:
    """Target modal mask plus depth; the depth channel is duplicated on export."""

    target_modal: np.ndarray
    depth: np.ndarray

    def as_array(self) -> np.ndarray:
        """``(3, H, W)`` float32 stack: mask, depth, depth."""
        d = self.depth.astype(np.float32)
        return np.stack([self.target_modal.astype(np.float32), d, d])


def render_depth(scene: Scene, camera_height: float = CAMERA_HEIGHT) -> np.ndarray:
    return camera_height - scene.heightmap


def visibility_owner(scene: Scene) -> np.ndarray:
    """Index into ``scene.instances`` of the visible instance per pixel, -1 for floor.

    Highest top wins; equal tops go to the later-placed instance.
    """
    owner = np.full(scene.shape, -1, dtype=np.int32)
    best = np.full(scene.shape, -np.inf)
    for k, inst in enumerate(scene.instances):
        m = scene.mask(inst.id)
        win = m & (inst.top >= best)
        owner[win] = k
        best[win] = inst.top
    return owner


def modal_mask(scene: Scene, obj_id: int) -> np.ndarray:
    k = scene._index.get(obj_id)
    if k is None:
        scene.get(obj_id)  # raises UnknownId
    return _owner(scene) == k


def amodal_mask(scene: Scene, obj_id: int) -> np.ndarray:
    return scene.mask(obj_id).copy()


def modal_masks(scene: Scene) -> dict[int, np.ndarray]:
    owner = _owner(scene)
    return {inst.id: owner == k for k, inst in enumerate(scene.instances)}


def _owner(scene: Scene) -> np.ndarray:
    cached = scene.__dict__.get("_owner")
    if cached is None:
        cached = visibility_owner(scene)
        cached.setflags(write=False)
        scene.__dict__["_owner"] = cached
    return cached


def observe(scene: Scene, camera_height: float = CAMERA_HEIGHT) -> AugmentedObservation:
    target = scene.target
    if target is None:
        raise NoTarget("scene has no target object")
    return AugmentedObservation(modal_mask(scene, target.id), render_depth(scene, camera_height))
