"""On-disk dataset of augmented observations labeled with occupancy distributions.

Shard layout (all integers little-endian)::

    magic   8 bytes  b"XRAYDS1\\0"
    version u32
    width   u32
    height  u32
    count   u32      samples in this shard
    flags   u32      bit 0: depth is stored once; the model input duplicates it
    count x { depth f32[h*w], distribution f32[h*w], target_modal u8[h*w] }
    crc32   u32      over every preceding byte

Rasters are row-major.  Per-sample metadata lives in a JSON sidecar with the
same stem.  A dataset directory holds ``shards/NNNN.xrd`` plus
``manifest.json``, which is written last.
"""

from __future__ import annotations

import json
import logging
import multiprocessing
import os
import struct
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ChecksumError, CorruptMagic, DatasetWriteError, TruncatedFile, VersionMismatch
from .heapgen import HeapConfig, partition_models, sample_heap
from .occupancy import CandidateGrid, occupancy_distribution, support_size
from .sensor import observe

log = logging.getLogger(__name__)

MAGIC = b"XRAYDS1\0"
FORMAT_VERSION = 1
FLAG_DEPTH_ONCE = 1
_HEADER = struct.Struct("<8sIIIII")
_CRC = struct.Struct("<I")


@dataclass(eq=False)
class SampleRecord:
    target_modal: np.ndarray  # bool (H, W)
    depth: np.ndarray  # float32 (H, W)
    distribution: np.ndarray  # float32 (H, W)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.target_modal = np.asarray(self.target_modal, dtype=bool)
        self.depth = np.asarray(self.depth, dtype=np.float32)
        self.distribution = np.asarray(self.distribution, dtype=np.float32)
        if not (self.target_modal.shape == self.depth.shape == self.distribution.shape):
            raise ValueError("sample rasters must share dimensions")

    @property
    def shape(self) -> tuple[int, int]:
        return self.depth.shape

    def same_as(self, other: "SampleRecord") -> bool:
        """Bitwise equality of rasters and metadata."""
        return (self.depth.tobytes() == other.depth.tobytes()
                and self.distribution.tobytes() == other.distribution.tobytes()
                and self.target_modal.tobytes() == other.target_modal.tobytes()
                and self.meta == other.meta)


def encode_shard(records: Sequence[SampleRecord]) -> bytes:
    if not records:
        raise ValueError("a shard needs at least one record")
    h, w = records[0].shape
    parts = [_HEADER.pack(MAGIC, FORMAT_VERSION, w, h, len(records), FLAG_DEPTH_ONCE)]
    for r in records:
        if r.shape != (h, w):
            raise ValueError("all records in a shard must share dimensions")
        parts.append(r.depth.astype("<f4").tobytes())
        parts.append(r.distribution.astype("<f4").tobytes())
        parts.append(r.target_modal.astype(np.uint8).tobytes())
    body = b"".join(parts)
    return body + _CRC.pack(zlib.crc32(body))


def decode_shard(blob: bytes, metas: Optional[Sequence[dict]] = None) -> list[SampleRecord]:
    if len(blob) < _HEADER.size:
        if not MAGIC.startswith(blob[:8]):
            raise CorruptMagic("not an XRAYDS shard")
        raise TruncatedFile(f"{len(blob)} bytes is shorter than the header")
    magic, version, w, h, count, _flags = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise CorruptMagic(f"bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"shard version {version}, reader supports {FORMAT_VERSION}")
    n = w * h
    expected = _HEADER.size + count * 9 * n + _CRC.size
    if len(blob) < expected:
        raise TruncatedFile(f"expected {expected} bytes, found {len(blob)}")
    (crc,) = _CRC.unpack_from(blob, expected - _CRC.size)
    if zlib.crc32(blob[:expected - _CRC.size]) != crc:
        raise ChecksumError("CRC32 mismatch")
    out = []
    off = _HEADER.size
    for k in range(count):
        depth = np.frombuffer(blob, "<f4", n, off).reshape(h, w).astype(np.float32)
        off += 4 * n
        dist = np.frombuffer(blob, "<f4", n, off).reshape(h, w).astype(np.float32)
        off += 4 * n
        modal = np.frombuffer(blob, np.uint8, n, off).reshape(h, w).astype(bool)
        off += n
        out.append(SampleRecord(modal, depth, dist, dict(metas[k]) if metas else {}))
    return out


def _sidecar(path: Path) -> Path:
    return path.with_suffix(".json")


def write_shard(records: Sequence[SampleRecord], path) -> int:
    """Write records plus metadata sidecar; returns the shard CRC32."""
    path = Path(path)
    blob = encode_shard(records)
    path.write_bytes(blob)
    meta = {"format_version": FORMAT_VERSION, "samples": [r.meta for r in records]}
    _sidecar(path).write_text(json.dumps(meta, sort_keys=True, indent=1) + "\n")
    return _CRC.unpack_from(blob, len(blob) - _CRC.size)[0]


def read_shard(path) -> list[SampleRecord]:
    path = Path(path)
    side = _sidecar(path)
    metas = json.loads(side.read_text())["samples"] if side.exists() else None
    return decode_shard(path.read_bytes(), metas)


def write_sample(record: SampleRecord, path) -> None:
    write_shard([record], path)


def read_sample(path) -> SampleRecord:
    (record,) = read_shard(path)
    return record


def dataset_grid(config: HeapConfig, stride: int = 8, n_rot: int = 16) -> CandidateGrid:
    # labels use the pure grid, without injecting the true pose
    return CandidateGrid.covering(config.width, config.height, stride, n_rot,
                                  include_true_pose=False)


def make_sample(seed: int, config: HeapConfig, grid: CandidateGrid,
                split: Optional[str] = None) -> SampleRecord:
    scene = sample_heap(seed, config, partition=split)
    obs = observe(scene)
    dist = occupancy_distribution(scene, grid)
    t = scene.target.pose
    meta = {
        "seed": int(seed),
        "split": split,
        "config_hash": config.digest(),
        "target_pose": [t.tx, t.ty, t.rot_bin, t.n_rot],
        "object_count": len(scene.instances),
        "matched_poses": len(dist.matched_poses),
        "support_size": support_size(dist),
        "depth_channels": 2,
    }
    return SampleRecord(obs.target_modal, obs.depth.astype(np.float32), dist.values, meta)


def split_seeds(seeds: range, train_fraction: float = 0.8) -> dict[str, range]:
    cut = seeds.start + int(round(len(seeds) * train_fraction)) * seeds.step
    return {"train": range(seeds.start, cut, seeds.step),
            "test": range(cut, seeds.stop, seeds.step)}


def _build_shard(job) -> tuple[int, str, int, list[int]]:
    index, seeds, config, grid, cut, out_dir = job
    records = [make_sample(s, config, grid, "train" if s < cut else "test") for s in seeds]
    rel = f"shards/{index:04d}.xrd"
    crc = write_shard(records, Path(out_dir) / rel)
    return index, rel, crc, list(seeds)


def generate_dataset(seeds: range, config: HeapConfig, out_dir, *, shard_size: int = 100,
                     train_fraction: float = 0.8, grid: Optional[CandidateGrid] = None,
                     threads: int = 1) -> dict:
    """One sample per seed, sharded; returns the manifest (also written to disk).

    Seeds in the train split draw distractors only from the train model
    partition, test seeds only from the held-out models.
    """
    if seeds.step != 1:
        raise ValueError("seed ranges must be contiguous")
    out = Path(out_dir)
    (out / "shards").mkdir(parents=True, exist_ok=True)
    grid = grid or dataset_grid(config)
    splits = split_seeds(seeds, train_fraction)
    cut = splits["test"].start
    jobs = [(k, seeds[a:a + shard_size], config, grid, cut, str(out))
            for k, a in enumerate(range(0, len(seeds), shard_size))]

    done, errors = {}, {}
    if threads > 1 and len(jobs) > 1:
        ctx = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(min(threads, len(jobs)), mp_context=ctx) as pool:
            futures = [(job[0], pool.submit(_build_shard, job)) for job in jobs]
            for k, fut in futures:
                try:
                    done[k] = fut.result()
                except OSError as e:
                    errors[k] = str(e)
    else:
        for job in jobs:
            try:
                done[job[0]] = _build_shard(job)
            except OSError as e:
                errors[job[0]] = str(e)

    lib = config.library
    manifest = {
        "format": "xrayds",
        "format_version": FORMAT_VERSION,
        "status": "partial" if errors else "complete",
        "sample_count": sum(len(d[3]) for d in done.values()),
        "width": config.width,
        "height": config.height,
        "config": config.to_dict(),
        "config_hash": config.digest(),
        "grid": {"stride": grid.stride, "n_tx": grid.n_tx, "n_ty": grid.n_ty,
                 "n_rot": grid.n_rot, "include_true_pose": grid.include_true_pose},
        "split": {
            name: {"seeds": [r.start, r.stop],
                   "models": [m.index for m in partition_models(lib, name)]}
            for name, r in splits.items()
        },
        "shards": [
            {"file": rel, "seeds": [s[0], s[-1] + 1], "count": len(s), "crc32": crc}
            for _, rel, crc, s in (done[k] for k in sorted(done))
        ],
    }
    if errors:
        manifest["errors"] = {f"shards/{k:04d}.xrd": msg for k, msg in sorted(errors.items())}
    path = out / "manifest.json"
    tmp = path.with_suffix(".json.tmp")
    text = json.dumps(manifest, sort_keys=True, indent=1)
    tmp.write_text(text + "\n")
    os.replace(tmp, path)
    manifest = json.loads(text)  # same shape as load_manifest()
    if errors:
        raise DatasetWriteError(f"{len(errors)} shard(s) failed; partial manifest at {path}")
    log.info("wrote %d samples in %d shards to %s", manifest["sample_count"], len(done), out)
    return manifest


def load_manifest(out_dir) -> dict:
    return json.loads((Path(out_dir) / "manifest.json").read_text())


def check_split(manifest: dict) -> bool:
    """Seed ranges and model partitions of the splits are disjoint."""
    tr, te = manifest["split"]["train"], manifest["split"]["test"]
    seeds_ok = set(range(*tr["seeds"])).isdisjoint(range(*te["seeds"]))
    models_ok = set(tr["models"]).isdisjoint(te["models"])
    return seeds_ok and models_ok


def regenerate(meta: dict, manifest: dict) -> SampleRecord:
    """Rebuild a sample from its recorded seed and the manifest configuration."""
    config = HeapConfig.from_dict(manifest["config"])
    if config.digest() != meta["config_hash"]:
        raise ValueError("sample config hash does not match the manifest")
    g = manifest["grid"]
    grid = CandidateGrid(g["stride"], g["n_tx"], g["n_ty"], g["n_rot"], g["include_true_pose"])
    return make_sample(meta["seed"], config, grid, meta["split"])
