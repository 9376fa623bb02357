import csv
import json
from dataclasses import replace

import pytest

from xray_search.cli import main, parse_seeds
from xray_search.heapgen import HeapConfig, sample_heap
from xray_search.search import graspable

SMALL = HeapConfig(width=96, height=64, pixel_size=0.005, placement_sigma=10.0)


@pytest.fixture
def small_config(tmp_path):
    p = tmp_path / "heap.json"
    p.write_text(json.dumps(SMALL.to_dict()))
    return str(p)


def test_parse_seeds():
    assert parse_seeds("7") == range(7, 8)
    assert list(parse_seeds("0..3")) == [0, 1, 2, 3]


def test_rollout_is_reproducible(tmp_path, small_config, capsys):
    args = ["rollout", "--seed", "7", "--policy", "xray", "--objects", "6", "--config", small_config]
    assert main(args) == 0
    first = capsys.readouterr().out
    assert main(args) == 0
    assert capsys.readouterr().out == first
    rec = json.loads(first)
    assert rec["seed"] == 7 and rec["policy"] == "xray"
    assert rec["action_count"] == len(rec["steps"])


def test_rollout_dump(tmp_path, small_config):
    out = tmp_path / "r.jsonl"
    dump = tmp_path / "dump"
    assert main(["rollout", "--seeds", "1..2", "--policy", "xray,random", "--objects", "6",
                 "--config", small_config, "--out", str(out), "--dump-dir", str(dump)]) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 4
    step0 = dump / "seed000001-xray" / "step00"
    for name in ["depth.png", "depth.json", "target_modal.png", "segmask.png",
                 "distribution.png", "distribution.f32", "action.json"]:
        assert (step0 / name).exists(), name


def test_gen_dataset_and_inspect(tmp_path, small_config, capsys):
    out = tmp_path / "ds"
    assert main(["gen-dataset", "--seeds", "0..99", "--out", str(out), "--config", small_config,
                 "--shard-size", "40"]) == 0
    m = json.loads((out / "manifest.json").read_text())
    assert m["sample_count"] == 100 and m["status"] == "complete"
    capsys.readouterr()
    assert main(["inspect", str(out)]) == 0
    text = capsys.readouterr().out
    assert "manifest count 100, read 100" in text
    assert "split disjoint: True" in text
    assert main(["inspect", str(out / "shards" / "0002.xrd")]) == 0
    assert capsys.readouterr().out.strip().endswith("20 samples")


def _exposed_seed(config):
    for seed in range(200):
        s = sample_heap(seed, config)
        if graspable(s, s.target.id):
            return seed
    raise AssertionError("no exposed heap in range")


def test_bench_exposed_target(tmp_path, small_config, capsys):
    seed = _exposed_seed(replace(SMALL, n_min=6, n_max=6))
    out = tmp_path / "bench"
    assert main(["bench", "--heaps", "1", "--seed", str(seed), "--objects", "6",
                 "--config", small_config, "--out", str(out)]) == 0
    rows = list(csv.DictReader((out / "bench.csv").open()))
    assert [r["policy"] for r in rows] == ["xray", "largest", "random"]
    for r in rows:
        assert float(r["success_rate"]) == 1.0
        assert (float(r["q1"]), float(r["median"]), float(r["q3"])) == (1.0, 1.0, 1.0)
    hist = list(csv.reader((out / "histogram.csv").open()))
    assert hist[1] == ["1", "1", "1", "1"]
    assert len((out / "rollouts.jsonl").read_text().splitlines()) == 3
    assert "reference" in (out / "report.txt").read_text()


def test_usage_errors(tmp_path, capsys):
    with pytest.raises(SystemExit) as e:
        main([])
    assert e.value.code != 0
    with pytest.raises(SystemExit) as e:
        main(["rollout", "--seed", "1", "--policy", "bogus"])
    assert e.value.code != 0
    with pytest.raises(SystemExit) as e:
        main(["gen-dataset", "--seeds", "5..1", "--out", str(tmp_path)])
    assert e.value.code != 0
    assert main(["inspect", str(tmp_path / "missing")]) != 0
    assert "error" in capsys.readouterr().err
