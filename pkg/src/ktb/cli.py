"""Command-line entry point.

Subcommands cover the whole pipeline: synth (generate stub datasets), repack
(raw streams -> store), store inspect, bench-loader, render, sample (dump a
batch for foreign bindings), train, eval, report, catalog. Exit codes:
0 success, 1 usage error, 2 runtime failure. Store paths that do not exist
as given are retried under $KATAKOMBA_DATA_DIR.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import catalog as cat
from . import evalstats, loaders, repack, store
from .algorithms import config as algocfg
from .algorithms import training
from .envadapter import GridHack, record_episode, scripted_policy
from .errors import KtbError
from .ttyrender import RenderSpec, render_screen, to_png_bytes

DATA_DIR_ENV = "KATAKOMBA_DATA_DIR"


def _resolve(path: str) -> str:
    if os.path.exists(path) or os.path.isabs(path):
        return path
    base = os.environ.get(DATA_DIR_ENV)
    if base:
        candidate = os.path.join(base, path)
        if os.path.exists(candidate):
            return candidate
    return path


def _cmd_catalog(args) -> int:
    if args.format == "json":
        text = cat.catalog_json()
    else:
        lines = ["task,category,transitions,median_turns,median_score,"
                 "median_deathlvl,size_gb,compressed_size_gb,"
                 "min_score,max_score,mean_score"]
        for task_id, row in cat.catalog_as_dict().items():
            lines.append(",".join(str(x) for x in (
                task_id, row["category"], row["transitions"], row["median_turns"],
                row["median_score"], row["median_deathlvl"], row["size_gb"],
                row["compressed_size_gb"], row["min_score"], row["max_score"],
                row["mean_score"])))
        text = "\n".join(lines) + "\n"
    _emit(text, args.out)
    return 0


def _emit(text: str, out: str | None):
    if out:
        with open(out, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _cmd_store_inspect(args) -> int:
    info = store.inspect_store(_resolve(args.path))
    if not args.episodes:
        info["episodes"] = f"{len(info['episodes'])} entries (rerun with --episodes)"
    _emit(json.dumps(info, indent=2), args.out)
    return 0


def _cmd_synth(args) -> int:
    env = GridHack(horizon=args.horizon, max_depth=args.max_depth)
    episodes = [
        record_episode(env, scripted_policy, seed=args.seed + i,
                       task_id=args.task, episode_id=f"synth-{args.seed + i}")
        for i in range(args.episodes)
    ]
    if args.format == "raw":
        repack.write_raw_stream(args.out, episodes)
        print(f"wrote {len(episodes)} raw episodes to {args.out}")
    else:
        aligned = [repack.align_episode(ep) for ep in episodes]
        summary = store.write_store(args.out, aligned, compression=args.codec)
        print(f"wrote {summary.episode_count} episodes to {summary.path} "
              f"({summary.raw_bytes} raw / {summary.compressed_bytes} compressed bytes)")
    return 0


def _cmd_repack(args) -> int:
    plan = repack.StrataPlan(n_strata=args.strata, target_episodes=args.episodes,
                             seed=args.seed)
    summary = repack.import_source(args.input, args.task, plan, args.out,
                                   compression=args.codec)
    print(f"wrote {summary.episode_count} episodes to {summary.path} "
          f"({summary.raw_bytes} raw / {summary.compressed_bytes} compressed bytes)")
    return 0


def _cmd_bench_loader(args) -> int:
    modes = (["in_memory", "memmap", "compressed"] if args.modes == "all"
             else args.modes.split(","))
    batches = [int(x) for x in args.batch.split(",")]
    seqs = [int(x) for x in args.seq.split(",")]
    configs = [(b, s) for b in batches for s in seqs]
    rows = loaders.benchmark_loader(_resolve(args.store), modes=modes,
                                    configs=configs, iterations=args.iters,
                                    warmup=args.warmup, seed=args.seed)
    _emit(loaders.benchmark_table_csv(rows), args.out)
    return 0


def _cmd_render(args) -> int:
    spec = RenderSpec(crop_rows=args.crop_rows, crop_cols=args.crop_cols,
                      glyph_height=args.glyph_height, glyph_width=args.glyph_width)
    with store.open_store(_resolve(args.store)) as handle:
        ep = handle.read_episode(args.episode)
    t = args.step
    if not 0 <= t < ep.length:
        raise KtbError(f"step {t} outside episode of length {ep.length}")
    img = render_screen(ep.tty_chars[t], ep.tty_colors[t], ep.tty_cursor[t], spec)
    with open(args.png, "wb") as f:
        f.write(to_png_bytes(img))
    print(f"wrote {args.png} ({img.shape[2]}x{img.shape[1]})")
    return 0


def _cmd_sample(args) -> int:
    handle = loaders.load(_resolve(args.store), args.mode)
    try:
        cfg = loaders.SamplerConfig(args.batch, args.seq, seed=args.seed,
                                    pad_policy=args.pad_policy)
        batch = loaders.sample_sequences(handle, cfg)
        os.makedirs(args.out, exist_ok=True)
        manifest = {"store": os.path.abspath(_resolve(args.store)),
                    "mode": args.mode, "batch_size": args.batch,
                    "seq_len": args.seq, "seed": args.seed,
                    "pad_policy": args.pad_policy, "fields": {}}
        for name, arr in batch.arrays().items():
            fname = f"{name}.bin"
            arr = np.ascontiguousarray(arr)
            with open(os.path.join(args.out, fname), "wb") as f:
                f.write(arr.tobytes())
            manifest["fields"][name] = {
                "dtype": arr.dtype.str.lstrip("<>|="),
                "shape": list(arr.shape), "file": fname}
        with open(os.path.join(args.out, "manifest.json"), "w") as f:
            json.dump(manifest, f, indent=2)
        print(f"wrote batch dump to {args.out}")
        return 0
    finally:
        loaders.close(handle)


def _collect_options(args) -> dict[str, str]:
    options: dict[str, str] = {}
    if args.config:
        options.update(algocfg.parse_config_file(args.config))
    for item in args.set or []:
        if "=" not in item:
            raise KtbError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        options[k.strip().lower()] = v.strip()
    if args.iters is not None:
        options["iterations"] = str(args.iters)
    if args.seed is not None:
        options["seed"] = str(args.seed)
    return options


def _cmd_train(args) -> int:
    options = _collect_options(args)
    train_cfg, model_cfg = algocfg.build_configs(args.algo, options)
    handle = loaders.load(_resolve(args.store), args.mode)
    sink = training.JsonlSink(args.metrics) if args.metrics else None
    try:
        model = training.train(args.algo, handle, train_cfg, model_cfg,
                               metric_sink=sink, checkpoint_path=args.out)
    finally:
        if sink:
            sink.close()
        loaders.close(handle)
    print(f"trained {args.algo} for {train_cfg.iterations} iterations -> {args.out} "
          f"({model.num_params} parameters)")
    return 0


def _cmd_eval(args) -> int:
    model, header = training.load_checkpoint(args.ckpt)
    rule = args.rule or algocfg.ALGORITHMS[header["algorithm"]].eval_rule
    env = GridHack(horizon=args.horizon, max_depth=args.max_depth)
    rows = training.evaluate(model, env, args.episodes, rule, seed=args.seed,
                             task_id=args.task)
    text = "\n".join(json.dumps(r) for r in rows) + "\n"
    _emit(text, args.out)
    return 0


def _cmd_report(args) -> int:
    matrices: dict[str, evalstats.EvalRunMatrix] = {}
    for spec_item in args.runs:
        if "=" in spec_item and not os.path.exists(spec_item):
            name, path = spec_item.split("=", 1)
            matrices[name] = evalstats.EvalRunMatrix.from_jsonl(path)
        else:
            m = evalstats.EvalRunMatrix.from_jsonl(spec_item)
            by_algo: dict[str, list[dict]] = {}
            for r in m.rows:
                by_algo.setdefault(r.get("algorithm", "default"), []).append(r)
            for name, rows in by_algo.items():
                matrices.setdefault(name, evalstats.EvalRunMatrix([]))
                matrices[name].rows.extend(rows)
    cfg = evalstats.BootstrapConfig(replicates=args.replicates,
                                    level=args.level, seed=args.seed)
    bundle = evalstats.report(matrices, metric=args.metric,
                              category=args.category, baseline=args.baseline,
                              cfg=cfg, gamma0=args.gamma0,
                              normalizer=args.normalizer)
    if args.out:
        files = evalstats.write_report(bundle, args.out)
        print("\n".join(files))
    else:
        sys.stdout.write(json.dumps(bundle, indent=2) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ktb", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("catalog", help="export the 38-task catalog")
    sp.add_argument("--format", choices=("json", "csv"), default="json")
    sp.add_argument("--out")
    sp.set_defaults(fn=_cmd_catalog)

    sp = sub.add_parser("store", help="store utilities")
    store_sub = sp.add_subparsers(dest="store_command", required=True)
    si = store_sub.add_parser("inspect", help="dump header/index as JSON")
    si.add_argument("path")
    si.add_argument("--episodes", action="store_true",
                    help="include the full per-episode index")
    si.add_argument("--out")
    si.set_defaults(fn=_cmd_store_inspect)

    sp = sub.add_parser("synth", help="generate synthetic GridHack datasets")
    sp.add_argument("--task", default="mon-hum-neu")
    sp.add_argument("--episodes", type=int, default=200)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--horizon", type=int, default=200)
    sp.add_argument("--max-depth", type=int, default=3)
    sp.add_argument("--format", choices=("store", "raw"), default="store")
    sp.add_argument("--codec", choices=sorted(store.CODECS), default="deflate")
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=_cmd_synth)

    sp = sub.add_parser("repack", help="align + subsample raw streams into a store")
    sp.add_argument("--input", required=True, help=".krs file or directory")
    sp.add_argument("--task", required=True)
    sp.add_argument("--episodes", type=int, default=680)
    sp.add_argument("--strata", type=int, default=10)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--codec", choices=sorted(store.CODECS), default="deflate")
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=_cmd_repack)

    sp = sub.add_parser("bench-loader", help="loader latency benchmark")
    sp.add_argument("--store", required=True)
    sp.add_argument("--modes", default="all")
    sp.add_argument("--batch", default="64,256")
    sp.add_argument("--seq", default="16,32,64")
    sp.add_argument("--iters", type=int, default=500)
    sp.add_argument("--warmup", type=int, default=10)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out")
    sp.set_defaults(fn=_cmd_bench_loader)

    sp = sub.add_parser("render", help="rasterize one stored step to PNG")
    sp.add_argument("--store", required=True)
    sp.add_argument("--episode", type=int, default=0)
    sp.add_argument("--step", type=int, default=0)
    sp.add_argument("--crop-rows", type=int, default=0)
    sp.add_argument("--crop-cols", type=int, default=0)
    sp.add_argument("--glyph-height", type=int, default=6)
    sp.add_argument("--glyph-width", type=int, default=4)
    sp.add_argument("--png", required=True)
    sp.set_defaults(fn=_cmd_render)

    sp = sub.add_parser("sample", help="dump one sampled batch as raw arrays")
    sp.add_argument("--store", required=True)
    sp.add_argument("--batch", type=int, default=64)
    sp.add_argument("--seq", type=int, default=16)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--mode", choices=[m.value for m in loaders.LoaderMode],
                    default="in_memory")
    sp.add_argument("--pad-policy", dest="pad_policy", default="reject_short",
                    choices=("reject_short", "left_clamp"))
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=_cmd_sample)

    sp = sub.add_parser("train", help="train an algorithm on a store")
    sp.add_argument("--algo", required=True, choices=sorted(algocfg.ALGORITHMS))
    sp.add_argument("--store", required=True)
    sp.add_argument("--config", help="key = value config file")
    sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                    help="override one config key (repeatable)")
    sp.add_argument("--iters", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--mode", choices=[m.value for m in loaders.LoaderMode],
                    default="in_memory")
    sp.add_argument("--metrics", help="JSON-lines metric sink path")
    sp.add_argument("--out", required=True, help="checkpoint path")
    sp.set_defaults(fn=_cmd_train)

    sp = sub.add_parser("eval", help="evaluate a checkpoint on the stub env")
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--episodes", type=int, default=50)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--rule", choices=("sample_policy", "greedy_policy", "greedy_q"))
    sp.add_argument("--task", default="mon-hum-neu")
    sp.add_argument("--horizon", type=int, default=200)
    sp.add_argument("--max-depth", type=int, default=3)
    sp.add_argument("--out")
    sp.set_defaults(fn=_cmd_eval)

    sp = sub.add_parser("report", help="statistics bundle from eval runs")
    sp.add_argument("--runs", action="append", required=True,
                    metavar="[NAME=]PATH", help="JSON-lines eval rows (repeatable)")
    sp.add_argument("--metric", choices=evalstats.METRICS,
                    default="normalized_score")
    sp.add_argument("--category", choices=("base", "extended", "complete"))
    sp.add_argument("--baseline")
    sp.add_argument("--normalizer", choices=("minmax", "mean"), default="minmax")
    sp.add_argument("--replicates", type=int, default=2000)
    sp.add_argument("--level", type=float, default=0.95)
    sp.add_argument("--gamma0", type=float, default=100.0)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", help="output directory (default: JSON to stdout)")
    sp.set_defaults(fn=_cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code in (0, None) else 1
    try:
        return args.fn(args)
    except KtbError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
