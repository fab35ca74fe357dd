import json

import numpy as np

from ktb.cli import main

TASK = "mon-hum-neu"


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0
    for sub in ("catalog", "repack", "bench-loader", "render", "train",
                "eval", "report", "synth", "sample"):
        assert main([sub, "--help"]) == 0, sub
    capsys.readouterr()


def test_usage_error_exits_one(capsys):
    assert main(["train"]) == 1          # missing required flags
    assert main(["no-such-command"]) == 1
    capsys.readouterr()


def test_runtime_error_exits_two(tmp_path, capsys):
    assert main(["store", "inspect", str(tmp_path / "missing.ktb")]) == 2
    err = capsys.readouterr().err
    assert "error:" in err


def test_catalog_json(capsys):
    assert main(["catalog", "--format", "json"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert len(data) == 38
    assert data["mon-hum-neu"]["transitions"] == 33741542


def test_catalog_csv(tmp_path):
    out = tmp_path / "catalog.csv"
    assert main(["catalog", "--format", "csv", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 39
    assert lines[0].startswith("task,category,transitions")


def test_pipeline_synth_repack_inspect_sample_render(tmp_path, capsys):
    raw = tmp_path / "episodes.krs"
    assert main(["synth", "--task", TASK, "--episodes", "6", "--seed", "3",
                 "--format", "raw", "--out", str(raw)]) == 0
    store_path = tmp_path / "task.ktb"
    assert main(["repack", "--input", str(raw), "--task", TASK,
                 "--episodes", "4", "--strata", "2", "--seed", "1",
                 "--out", str(store_path)]) == 0

    assert main(["store", "inspect", str(store_path)]) == 0
    capsys.readouterr()

    assert main(["store", "inspect", str(store_path), "--episodes",
                 "--out", str(tmp_path / "inspect.json")]) == 0
    info = json.loads((tmp_path / "inspect.json").read_text())
    assert info["episode_count"] == 4
    assert info["task_id"] == TASK

    png = tmp_path / "step.png"
    assert main(["render", "--store", str(store_path), "--episode", "0",
                 "--step", "0", "--png", str(png)]) == 0
    assert png.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    capsys.readouterr()

    dump = tmp_path / "dump"
    assert main(["sample", "--store", str(store_path), "--batch", "3",
                 "--seq", "5", "--seed", "11", "--out", str(dump)]) == 0
    manifest = json.loads((dump / "manifest.json").read_text())
    assert manifest["fields"]["tty_chars"]["shape"] == [3, 6, 24, 80]
    chars = np.fromfile(dump / "tty_chars.bin", dtype=np.uint8)
    assert chars.size == 3 * 6 * 24 * 80
    capsys.readouterr()


def test_sample_dump_matches_library(tmp_path):
    from ktb.loaders import SamplerConfig, close, load, sample_sequences
    store_path = tmp_path / "t.ktb"
    assert main(["synth", "--task", TASK, "--episodes", "5", "--seed", "2",
                 "--out", str(store_path)]) == 0
    dump = tmp_path / "dump"
    assert main(["sample", "--store", str(store_path), "--batch", "4",
                 "--seq", "6", "--seed", "9", "--out", str(dump)]) == 0
    handle = load(str(store_path), "in_memory")
    batch = sample_sequences(handle, SamplerConfig(4, 6, seed=9))
    close(handle)
    manifest = json.loads((dump / "manifest.json").read_text())
    for name, arr in batch.arrays().items():
        meta = manifest["fields"][name]
        disk = np.fromfile(dump / meta["file"],
                           dtype=np.dtype(meta["dtype"])).reshape(meta["shape"])
        assert np.array_equal(disk, arr), name


def test_train_eval_report_smoke(tmp_path, capsys):
    store_path = tmp_path / "t.ktb"
    assert main(["synth", "--task", TASK, "--episodes", "8", "--seed", "5",
                 "--out", str(store_path)]) == 0
    ckpt = tmp_path / "bc.ckpt"
    metrics = tmp_path / "metrics.jsonl"
    assert main(["train", "--algo", "bc", "--store", str(store_path),
                 "--iters", "3", "--seed", "1",
                 "--set", "lstm_hidden_dim=8", "--set", "lstm_layers=1",
                 "--set", "embed_dim=8", "--set", "batch_size=2",
                 "--set", "sequence_length=4",
                 "--set", "crop_rows=5", "--set", "crop_cols=5",
                 "--set", "glyph_height=1", "--set", "glyph_width=1",
                 "--metrics", str(metrics), "--out", str(ckpt)]) == 0
    assert ckpt.exists()
    assert metrics.read_text().strip()
    capsys.readouterr()

    runs = tmp_path / "runs.jsonl"
    assert main(["eval", "--ckpt", str(ckpt), "--episodes", "4", "--seed", "2",
                 "--task", TASK, "--horizon", "40", "--out", str(runs)]) == 0
    rows = [json.loads(x) for x in runs.read_text().splitlines()]
    assert len(rows) == 4

    # tag rows with algorithm names for the report
    tagged = tmp_path / "tagged.jsonl"
    with open(tagged, "w") as f:
        for r in rows:
            f.write(json.dumps({**r, "algorithm": "bc"}) + "\n")
        for r in rows:
            f.write(json.dumps({**r, "score": r["score"] * 0.5,
                                "algorithm": "rnd"}) + "\n")
    outdir = tmp_path / "report"
    assert main(["report", "--runs", str(tagged), "--metric",
                 "normalized_score", "--baseline", "bc", "--replicates", "100",
                 "--out", str(outdir)]) == 0
    bundle = json.loads((outdir / "report.json").read_text())
    assert "bc_vs_rnd" in bundle["probability_of_improvement"]
    capsys.readouterr()


def test_config_file_and_flag_precedence(tmp_path, capsys):
    store_path = tmp_path / "t.ktb"
    assert main(["synth", "--task", TASK, "--episodes", "4", "--seed", "1",
                 "--out", str(store_path)]) == 0
    cfg = tmp_path / "bc.cfg"
    cfg.write_text("training_iterations = 500\nlstm_hidden_dim = 8\n"
                   "lstm_layers = 1\nembed_dim = 8\nbatch_size = 2\n"
                   "sequence_length = 4\ncrop_rows = 5\ncrop_cols = 5\n"
                   "glyph_height = 1\nglyph_width = 1\n")
    ckpt = tmp_path / "c.ckpt"
    assert main(["train", "--algo", "bc", "--store", str(store_path),
                 "--config", str(cfg), "--iters", "2",
                 "--out", str(ckpt)]) == 0
    out = capsys.readouterr().out
    assert "for 2 iterations" in out    # flag beat the config file


def test_data_dir_env_resolution(tmp_path, monkeypatch, capsys):
    store_path = tmp_path / "data" / "env.ktb"
    store_path.parent.mkdir()
    assert main(["synth", "--task", TASK, "--episodes", "4", "--seed", "1",
                 "--out", str(store_path)]) == 0
    monkeypatch.setenv("KATAKOMBA_DATA_DIR", str(tmp_path / "data"))
    monkeypatch.chdir(tmp_path)
    assert main(["store", "inspect", "env.ktb"]) == 0
    capsys.readouterr()


def test_bench_loader_csv(tmp_path, capsys):
    store_path = tmp_path / "t.ktb"
    assert main(["synth", "--task", TASK, "--episodes", "5", "--seed", "4",
                 "--out", str(store_path)]) == 0
    out = tmp_path / "bench.csv"
    assert main(["bench-loader", "--store", str(store_path),
                 "--modes", "in_memory,compressed", "--batch", "2",
                 "--seq", "4", "--iters", "2", "--warmup", "1",
                 "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "variant,in_memory_ms,compressed_ms"
    assert lines[1].startswith("batch_size=2 seq_len=4,")
    capsys.readouterr()
