"""Extruded-footprint objects on a planar workspace.

Objects are binary footprints extruded by a thickness.  They rest flat at the
highest point of the heightmap under their footprint (no tilting, no
sliding), which is enough to reproduce the occlusion structure of a heap.

Coordinates: rasters are indexed ``[row, col]`` = ``[y, x]``.  A footprint
pixel ``(i, j)`` spans the continuous square ``[i, i+1) x [j, j+1)``; the
footprint origin is a continuous point in that frame and a pose places the
origin at the world point ``(tx, ty)``.  Rasterization samples world pixel
centers, so poses are integer and masks are exactly reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import EmptyPlacement, UnknownId

# decimals kept before flooring sample coordinates; makes boundary hits
# independent of trig rounding noise
_SNAP_DECIMALS = 9


@dataclass(frozen=True, eq=False)
class Footprint:
    occupancy_grid: np.ndarray
    thickness: float
    origin: Optional[tuple[float, float]] = None
    name: str = ""
    _offsets: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        grid = np.ascontiguousarray(self.occupancy_grid, dtype=bool)
        if grid.ndim != 2 or not grid.any():
            raise ValueError("footprint grid must be 2D with at least one set pixel")
        if not self.thickness > 0:
            raise ValueError("footprint thickness must be positive")
        grid.setflags(write=False)
        object.__setattr__(self, "occupancy_grid", grid)
        h, w = grid.shape
        origin = self.origin if self.origin is not None else (w // 2, h // 2)
        ox, oy = float(origin[0]), float(origin[1])
        if not (0 <= ox <= w and 0 <= oy <= h):
            raise ValueError(f"origin {origin} outside footprint grid {w}x{h}")
        object.__setattr__(self, "origin", (ox, oy))
        object.__setattr__(self, "thickness", float(self.thickness))

    @classmethod
    def rectangle(cls, width: int, height: int, thickness: float, **kw) -> "Footprint":
        return cls(np.ones((height, width), dtype=bool), thickness, **kw)

    @property
    def width(self) -> int:
        return self.occupancy_grid.shape[1]

    @property
    def height(self) -> int:
        return self.occupancy_grid.shape[0]

    @property
    def area(self) -> int:
        return int(self.occupancy_grid.sum())

    def offsets(self, rot_bin: int, n_rot: int) -> tuple[np.ndarray, np.ndarray]:
        """Pixel offsets ``(dx, dy)`` covered when posed at (0, 0) with this rotation.

        Offsets are ordered row-major and cached per (rot_bin, n_rot).
        """
        key = (rot_bin % n_rot, n_rot)
        cached = self._offsets.get(key)
        if cached is None:
            cached = self._compute_offsets(*key)
            self._offsets[key] = cached
        return cached

    def _compute_offsets(self, rot_bin: int, n_rot: int):
        theta = rot_bin * (2.0 * math.pi / n_rot)
        c, s = math.cos(theta), math.sin(theta)
        ox, oy = self.origin
        h, w = self.occupancy_grid.shape
        # forward-map the footprint corners to bound the search window
        corners = np.array([[0, 0], [w, 0], [0, h], [w, h]], dtype=float) - (ox, oy)
        xs = c * corners[:, 0] - s * corners[:, 1]
        ys = s * corners[:, 0] + c * corners[:, 1]
        x0, x1 = int(math.floor(xs.min())) - 1, int(math.ceil(xs.max())) + 1
        y0, y1 = int(math.floor(ys.min())) - 1, int(math.ceil(ys.max())) + 1
        dy, dx = np.mgrid[y0:y1 + 1, x0:x1 + 1]
        px, py = dx + 0.5, dy + 0.5
        # inverse rotation of world pixel centers into footprint coordinates
        u = np.floor(np.round(c * px + s * py + ox, _SNAP_DECIMALS)).astype(np.int64)
        v = np.floor(np.round(-s * px + c * py + oy, _SNAP_DECIMALS)).astype(np.int64)
        inside = (u >= 0) & (u < w) & (v >= 0) & (v < h)
        hit = np.zeros_like(inside)
        hit[inside] = self.occupancy_grid[v[inside], u[inside]]
        out = (dx[hit].astype(np.int32), dy[hit].astype(np.int32))
        out[0].setflags(write=False)
        out[1].setflags(write=False)
        return out


@dataclass(frozen=True)
class Pose:
    tx: int
    ty: int
    rot_bin: int = 0
    n_rot: int = 16

    def __post_init__(self):
        if self.n_rot < 1 or not 0 <= self.rot_bin < self.n_rot:
            raise ValueError(f"rotation bin {self.rot_bin} outside [0, {self.n_rot})")

    @property
    def angle(self) -> float:
        return self.rot_bin * (2.0 * math.pi / self.n_rot)

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.tx, self.ty, self.rot_bin)


@dataclass(frozen=True)
class ObjectInstance:
    id: int
    footprint: Footprint
    pose: Pose
    rest_height: float = 0.0
    is_target: bool = False

    @property
    def top(self) -> float:
        return self.rest_height + self.footprint.thickness


def rasterize(footprint: Footprint, pose: Pose, width: int, height: int) -> np.ndarray:
    """Boolean ``(height, width)`` mask of the footprint at ``pose``, clipped to the grid."""
    dx, dy = footprint.offsets(pose.rot_bin, pose.n_rot)
    x = dx + pose.tx
    y = dy + pose.ty
    keep = (x >= 0) & (x < width) & (y >= 0) & (y < height)
    mask = np.zeros((height, width), dtype=bool)
    mask[y[keep], x[keep]] = True
    return mask


@dataclass(frozen=True, eq=False)
class Scene:
    """Immutable workspace state.  Operations return new scenes."""

    width: int
    height: int
    pixel_size: float = 0.002
    floor_height: float = 0.0
    instances: tuple[ObjectInstance, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "instances", tuple(self.instances))
        ids = [inst.id for inst in self.instances]
        if len(set(ids)) != len(ids):
            raise ValueError("instance ids must be unique")
        if sum(inst.is_target for inst in self.instances) > 1:
            raise ValueError("a scene holds at most one target")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def ids(self) -> list[int]:
        return [inst.id for inst in self.instances]

    @cached_property
    def _index(self) -> dict[int, int]:
        return {inst.id: k for k, inst in enumerate(self.instances)}

    @cached_property
    def _masks(self) -> dict[int, np.ndarray]:
        return {}

    def get(self, obj_id: int) -> ObjectInstance:
        try:
            return self.instances[self._index[obj_id]]
        except KeyError:
            raise UnknownId(obj_id) from None

    def __contains__(self, obj_id) -> bool:
        return obj_id in self._index

    @property
    def target(self) -> Optional[ObjectInstance]:
        for inst in self.instances:
            if inst.is_target:
                return inst
        return None

    def mask(self, obj_id: int) -> np.ndarray:
        """Amodal mask of an instance (cached, read-only)."""
        inst = self.get(obj_id)
        m = self._masks.get(obj_id)
        if m is None:
            m = rasterize(inst.footprint, inst.pose, self.width, self.height)
            m.setflags(write=False)
            self._masks[obj_id] = m
        return m

    @cached_property
    def heightmap(self) -> np.ndarray:
        hm = _top_surface(self, self.instances)
        hm.setflags(write=False)
        return hm

    def heightmap_without(self, obj_id: int) -> np.ndarray:
        """Top surface of every other instance, left at its current rest height."""
        self.get(obj_id)
        return _top_surface(self, [i for i in self.instances if i.id != obj_id])

    def next_id(self) -> int:
        return max(self.ids, default=-1) + 1

    def to_dict(self) -> dict:
        return {
            "width": self.width,
            "height": self.height,
            "pixel_size": self.pixel_size,
            "floor_height": self.floor_height,
            "instances": [
                {
                    "id": inst.id,
                    "name": inst.footprint.name,
                    "footprint_shape": list(inst.footprint.occupancy_grid.shape),
                    "footprint_bits": np.packbits(inst.footprint.occupancy_grid).tobytes().hex(),
                    "origin": list(inst.footprint.origin),
                    "thickness": inst.footprint.thickness,
                    "pose": [inst.pose.tx, inst.pose.ty, inst.pose.rot_bin, inst.pose.n_rot],
                    "rest_height": inst.rest_height,
                    "is_target": inst.is_target,
                }
                for inst in self.instances
            ],
        }


def _top_surface(scene: Scene, instances: Iterable[ObjectInstance]) -> np.ndarray:
    hm = np.full(scene.shape, scene.floor_height, dtype=np.float64)
    for inst in instances:
        m = scene.mask(inst.id)
        np.maximum(hm, np.where(m, inst.top, scene.floor_height), out=hm)
    return hm


def heightmap(scene: Scene) -> np.ndarray:
    """Per-pixel top-surface height; ``floor_height`` where nothing is present."""
    return scene.heightmap


def place(
    scene: Scene,
    footprint: Footprint,
    pose: Pose,
    *,
    is_target: bool = False,
    obj_id: Optional[int] = None,
) -> Scene:
    """Drop ``footprint`` at ``pose``; it rests on the highest point beneath it.

    Raises EmptyPlacement when the footprint lands entirely off the workspace.
    """
    mask = rasterize(footprint, pose, scene.width, scene.height)
    if not mask.any():
        raise EmptyPlacement(f"{footprint.name or 'object'} at {pose.as_tuple()} is off the workspace")
    if obj_id is None:
        obj_id = scene.next_id()
    elif obj_id in scene:
        raise ValueError(f"duplicate id {obj_id}")
    rest = float(scene.heightmap[mask].max())
    inst = ObjectInstance(obj_id, footprint, pose, rest, is_target)
    new = Scene(scene.width, scene.height, scene.pixel_size, scene.floor_height,
                scene.instances + (inst,))
    _inherit_masks(scene, new)
    mask.setflags(write=False)
    new._masks[obj_id] = mask
    hm = scene.heightmap.copy()
    hm[mask] = inst.top
    hm.setflags(write=False)
    new.__dict__["heightmap"] = hm
    return new


def settle(scene: Scene, instances: Sequence[ObjectInstance]) -> Scene:
    """Rebuild a scene by re-dropping ``instances`` in order onto an empty workspace."""
    out = Scene(scene.width, scene.height, scene.pixel_size, scene.floor_height)
    _inherit_masks(scene, out)
    for inst in instances:
        out = place(out, inst.footprint, inst.pose, is_target=inst.is_target, obj_id=inst.id)
    return out


def remove(scene: Scene, obj_id: int) -> Scene:
    """Lift an instance out; everything left re-settles in original placement order."""
    scene.get(obj_id)
    return settle(scene, [i for i in scene.instances if i.id != obj_id])


def _inherit_masks(src: Scene, dst: Scene) -> None:
    # masks depend only on (footprint, pose, grid); place() overwrites any reused id
    dst._masks.update(src._masks)


def with_target_flag(scene: Scene, obj_id: int) -> Scene:
    """Copy of ``scene`` with ``obj_id`` marked as the (sole) target."""
    scene.get(obj_id)
    insts = tuple(replace(i, is_target=(i.id == obj_id)) for i in scene.instances)
    new = Scene(scene.width, scene.height, scene.pixel_size, scene.floor_height, insts)
    _inherit_masks(scene, new)
    return new
