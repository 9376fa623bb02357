"""Command line entry point: ``xray-sim {gen-dataset,rollout,bench,inspect}``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import multiprocessing
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import datasetio
from .heapgen import HeapConfig
from .search import PolicyKind, RolloutRecord, SearchConfig, rollout

log = logging.getLogger("xray_search")

# reference row from the 1,000-heap simulation study (success, action quartiles)
REFERENCE_ROWS = {
    "random": (0.42, (4, 7, 9)),
    "largest": (0.67, (4, 5, 7)),
    "xray": (0.82, (3, 5, 6)),
}


def parse_seeds(text: str) -> range:
    """``"7"`` -> one seed, ``"0..99"`` -> 0 through 99 inclusive."""
    if ".." in text:
        a, b = text.split("..", 1)
        lo, hi = int(a), int(b)
        if hi < lo:
            raise argparse.ArgumentTypeError(f"empty seed range {text!r}")
        return range(lo, hi + 1)
    return range(int(text), int(text) + 1)


def _load_heap_config(path: str | None) -> HeapConfig:
    if not path:
        return HeapConfig()
    return HeapConfig.from_dict(json.loads(Path(path).read_text()))


def search_config_from_args(args) -> SearchConfig:
    heap = _load_heap_config(getattr(args, "config", None))
    heap = replace(heap, n_min=args.objects, n_max=args.objects)
    return SearchConfig(heap=heap, horizon=args.horizon, tau_grasp=args.tau_grasp,
                        grid_stride=args.grid_stride, rot_bins=args.rot_bins)


# ---------------------------------------------------------------- bench

def _rollout_seed(job) -> list[str]:
    seed, policies, config = job
    return [rollout(seed, p, config).to_json() for p in policies]


def run_rollouts(seeds: Sequence[int], policies: Sequence[PolicyKind], config: SearchConfig,
                 threads: int = 1) -> dict[str, list[RolloutRecord]]:
    """Paired rollouts: every policy sees every seed.  Output is keyed by seed order."""
    jobs = [(s, list(policies), config) for s in seeds]
    if threads > 1 and len(jobs) > 1:
        ctx = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(min(threads, len(jobs)), mp_context=ctx) as pool:
            lines = list(pool.map(_rollout_seed, jobs, chunksize=max(1, len(jobs) // (4 * threads))))
    else:
        lines = [_rollout_seed(j) for j in jobs]
    out: dict[str, list[RolloutRecord]] = {p.value: [] for p in policies}
    for per_seed in lines:
        for p, line in zip(policies, per_seed):
            out[p.value].append(RolloutRecord.from_json(line))
    return out


def summarize(records: list[RolloutRecord]) -> dict:
    succ = [r.action_count for r in records if r.success]
    q = [float(v) for v in np.percentile(succ, [25, 50, 75])] if succ else [float("nan")] * 3
    return {
        "heaps": len(records),
        "successes": len(succ),
        "success_rate": len(succ) / len(records) if records else 0.0,
        "q1": q[0], "median": q[1], "q3": q[2],
        "mean_actions": float(np.mean(succ)) if succ else float("nan"),
    }


def format_table(summary: dict[str, dict]) -> str:
    lines = [f"{'policy':<10}{'heaps':>7}{'success':>10}{'q1':>7}{'median':>8}{'q3':>7}"]
    for name, s in summary.items():
        lines.append(f"{name:<10}{s['heaps']:>7}{s['success_rate']:>10.1%}"
                     f"{s['q1']:>7.1f}{s['median']:>8.1f}{s['q3']:>7.1f}")
    lines.append("reference (1,000 heaps, physics simulator):")
    for name, (rate, (a, b, c)) in REFERENCE_ROWS.items():
        lines.append(f"  {name:<8}{'':>7}{rate:>10.0%}{a:>7d}{b:>8d}{c:>7d}")
    return "\n".join(lines)


def cmd_bench(policies: Sequence[PolicyKind | str], seeds: Sequence[int], config: SearchConfig,
              out: str | os.PathLike | None = None, threads: int = 1) -> dict:
    """Run the paired policy comparison and write report files to ``out``."""
    policies = [PolicyKind(p) for p in policies]
    records = run_rollouts(list(seeds), policies, config, threads)
    summary = {name: summarize(recs) for name, recs in records.items()}
    report = {"summary": summary, "table": format_table(summary), "records": records,
              "csv": _summary_csv(summary), "histogram_csv": _histogram_csv(records, config.horizon)}
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "bench.csv").write_text(report["csv"])
        (out / "histogram.csv").write_text(report["histogram_csv"])
        (out / "report.txt").write_text(report["table"] + "\n")
        with open(out / "rollouts.jsonl", "w") as f:
            for name in records:
                for r in records[name]:
                    f.write(r.to_json() + "\n")
    return report


def _summary_csv(summary: dict[str, dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["policy", "heaps", "successes", "success_rate", "q1", "median", "q3"])
    for name, s in summary.items():
        w.writerow([name, s["heaps"], s["successes"], f"{s['success_rate']:.4f}",
                    f"{s['q1']:.2f}", f"{s['median']:.2f}", f"{s['q3']:.2f}"])
    return buf.getvalue()


def _histogram_csv(records: dict[str, list[RolloutRecord]], horizon: int) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    names = list(records)
    w.writerow(["actions", *names])
    for k in range(1, horizon + 1):
        w.writerow([k, *(sum(r.success and r.action_count == k for r in records[n]) for n in names)])
    return buf.getvalue()


# ---------------------------------------------------------------- subcommands

def _bench(args) -> int:
    config = search_config_from_args(args)
    seeds = range(args.seed, args.seed + args.heaps)
    t0 = time.perf_counter()
    report = cmd_bench(args.policy, seeds, config, args.out, args.threads)
    log.info("bench finished in %.1f s", time.perf_counter() - t0)
    print(report["table"])
    return 0


def _rollout(args) -> int:
    config = replace(search_config_from_args(args), workers=args.threads)
    dump = Path(args.dump_dir) if args.dump_dir else None
    out = open(args.out, "w") if args.out else sys.stdout
    try:
        for seed in args.seeds:
            for p in args.policy:
                on_step = _dumper(dump / f"seed{seed:06d}-{p.value}") if dump else None
                out.write(rollout(seed, p, config, on_step=on_step).to_json() + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def _dumper(root: Path):
    from PIL import Image

    from .imaging import save_depth_png, save_distribution, save_mask_png
    from .sensor import render_depth, visibility_owner

    def on_step(k, scene, dist, action):
        d = root / f"step{k:02d}"
        d.mkdir(parents=True, exist_ok=True)
        save_depth_png(render_depth(scene), d / "depth.png")
        owner = visibility_owner(scene)
        t = scene._index[scene.target.id]
        save_mask_png(owner == t, d / "target_modal.png")
        # visible-instance label image: 0 floor, k+1 for the k-th placed instance
        Image.fromarray(np.where(owner >= 0, 1 + owner, 0).astype(np.uint8)).save(d / "segmask.png")
        if dist is not None:
            save_distribution(dist.values, d / "distribution.png")
        (d / "action.json").write_text(json.dumps({"object_id": action.object_id}) + "\n")

    return on_step


def _gen_dataset(args) -> int:
    config = _load_heap_config(args.config)
    grid = datasetio.dataset_grid(config, args.grid_stride, args.rot_bins)
    manifest = datasetio.generate_dataset(args.seeds, config, args.out, shard_size=args.shard_size,
                                          grid=grid, threads=args.threads)
    print(f"{manifest['sample_count']} samples -> {args.out}")
    return 0


def _inspect(args) -> int:
    path = Path(args.path)
    if path.is_dir():
        m = datasetio.load_manifest(path)
        total = 0
        for s in m["shards"]:
            recs = datasetio.read_shard(path / s["file"])
            total += len(recs)
            print(f"{s['file']}: {len(recs)} samples (manifest {s['count']}), seeds {s['seeds']}")
        print(f"status {m['status']}, manifest count {m['sample_count']}, read {total}, "
              f"split disjoint: {datasetio.check_split(m)}")
        return 0 if total == m["sample_count"] else 1
    recs = datasetio.read_shard(path)
    for r in recs:
        md = r.meta
        print(f"seed {md.get('seed')}: {r.shape[1]}x{r.shape[0]}, objects {md.get('object_count')}, "
              f"target visible px {int(r.target_modal.sum())}, "
              f"support {int(np.count_nonzero(r.distribution > 0))}")
    print(f"{len(recs)} samples")
    return 0


def _add_search_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--objects", type=int, default=14, help="distractors per heap")
    p.add_argument("--horizon", type=int, default=10)
    p.add_argument("--tau-grasp", type=float, default=0.75)
    p.add_argument("--grid-stride", type=int, default=8)
    p.add_argument("--rot-bins", type=int, default=16)
    p.add_argument("--config", help="heap config JSON")
    p.add_argument("--threads", type=int, default=1)


def _policies(text: str) -> list[PolicyKind]:
    if text == "all":
        return [PolicyKind.XRAY, PolicyKind.LARGEST, PolicyKind.RANDOM]
    try:
        return [PolicyKind(t.strip()) for t in text.split(",")]
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="xray-sim", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bench", help="paired policy comparison")
    _add_search_flags(b)
    b.add_argument("--heaps", type=int, default=200)
    b.add_argument("--seed", type=int, default=0, help="first seed")
    b.add_argument("--policy", type=_policies, default=_policies("all"))
    b.add_argument("--out", default="bench-out")
    b.set_defaults(func=_bench)

    r = sub.add_parser("rollout", help="run single episodes, JSON-lines to stdout")
    _add_search_flags(r)
    r.add_argument("--seed", "--seeds", dest="seeds", type=parse_seeds, required=True)
    r.add_argument("--policy", type=_policies, default=[PolicyKind.XRAY])
    r.add_argument("--out")
    r.add_argument("--dump-dir", help="write per-step PNGs here")
    r.set_defaults(func=_rollout)

    g = sub.add_parser("gen-dataset", help="generate a labeled dataset")
    g.add_argument("--seeds", "--seed", dest="seeds", type=parse_seeds, required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--config", help="heap config JSON")
    g.add_argument("--grid-stride", type=int, default=8)
    g.add_argument("--rot-bins", type=int, default=16)
    g.add_argument("--shard-size", type=int, default=100)
    g.add_argument("--threads", type=int, default=1)
    g.set_defaults(func=_gen_dataset)

    i = sub.add_parser("inspect", help="print a dataset directory or shard")
    i.add_argument("path")
    i.set_defaults(func=_inspect)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("XRAY_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError) as e:
        print(f"xray-sim: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
