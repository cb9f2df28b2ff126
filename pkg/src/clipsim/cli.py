"""Command-line front end: one binary, subcommands for every pipeline stage.

Exit codes: 0 success, 1 usage or configuration error, 2 data error
(unreadable store/checkpoint/config file), 3 numerical failure (training
divergence). Errors go to stderr as a single JSON line; stdout carries the
paths of whatever reports were written plus a short human summary.

Every subcommand that writes artifacts also writes ``resolved_config.json``
next to them, echoing the fully resolved parameters of the run.
"""

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import plots
from .aggregation import ProjectionLayer
from .errors import (
    ClipSimError,
    ConfigError,
    DataError,
    InvalidArgumentError,
    NumericalError,
)
from .scoring import ScoringNet
from .store import read_store, write_store
from .synthgen import SynthConfig, generate
from .trainer import (
    EVAL_METHODS,
    TOP_T_VARIANTS,
    ExperimentConfig,
    corruption_sweep,
    evaluate_store,
    multiclip_trend,
    pair_importance,
    train_aggregation,
    train_embedding_head,
    train_top_t,
)


class UsageError(ClipSimError):
    """Bad flags or flag combinations; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _require_out(args):
    if args.out is None:
        raise UsageError(f"{args.command} needs --out")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_echo(out_dir, payload):
    path = Path(out_dir) / "resolved_config.json"
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2, default=_json_default)
        fh.write("\n")
    return str(path)


def _dump_json(payload, path):
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2, default=_json_default)
        fh.write("\n")
    return str(path)


def _write_csv(rows, fieldnames, path):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if row.get(k) is None else row[k]) for k in fieldnames})
    return str(path)


def _load_config(path):
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _table_kwargs(table, cls, label):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(table) - names)
    if unknown:
        raise ConfigError(f"unknown [{label}] keys: {', '.join(unknown)}")
    return dict(table)


def _synth_config(table, seed_override=None):
    kw = _table_kwargs(table, SynthConfig, "synth")
    if seed_override is not None:
        kw["rng_seed"] = seed_override
    return SynthConfig(**kw)


def _experiment_config(table, synth=None, seed_override=None, store_path=None):
    if "synth" in table:
        raise ConfigError("generation settings belong in the [synth] table, not [train]")
    kw = _table_kwargs(table, ExperimentConfig, "train")
    for key in ("lr_decay_epochs", "mc_levels", "t_values"):
        if key in kw:
            kw[key] = tuple(kw[key])
    if seed_override is not None:
        kw["seed"] = seed_override
    if store_path is not None:
        kw["store_path"] = store_path
    return ExperimentConfig(synth=synth, **kw)


def _float_list(text):
    try:
        vals = tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError as exc:
        raise UsageError(f"expected a comma-separated numeric list, got {text!r}") from exc
    if not vals:
        raise UsageError(f"empty list {text!r}")
    return vals


def _int_list(text):
    return tuple(int(v) for v in _float_list(text))


def _cmd_synth(args):
    if args.config is None:
        raise UsageError("synth needs --config with a [synth] table")
    out = _require_out(args)
    cfg = _synth_config(_load_config(args.config).get("synth", {}), args.seed)
    store = generate(cfg)
    store_path = out / "features.csf"
    write_store(store.tracklets, store_path, extra=store.extra)
    echo = _write_echo(out, {"command": "synth", "synth": cfg.to_dict()})
    print(f"store: {store_path}")
    print(f"config echo: {echo}")
    print(f"tracklets={len(store.tracklets)} feature_dim={store.feature_dim}")
    return 0


def _cmd_train(args):
    out = _require_out(args)
    store = read_store(args.store)
    table = {} if args.config is None else _load_config(args.config).get("train", {})
    cfg = _experiment_config(table, seed_override=args.seed, store_path=str(args.store))
    if args.kind == "aggregation":
        result = train_aggregation(store, cfg, out_dir=out)
    elif args.kind == "topt":
        result = train_top_t(store, cfg, variant=args.variant, t_percent=args.t, out_dir=out)
    else:
        result = train_embedding_head(store, cfg, use_triplet=not args.no_triplet,
                                      use_ce=not args.no_ce, out_dir=out)
    echo = _write_echo(out, {"command": "train", "kind": args.kind,
                             "train": cfg.to_dict(), "extra": result.extra})
    print(f"checkpoint: {result.checkpoint_path}")
    print(f"log: {result.log_path}")
    print(f"config echo: {echo}")
    if result.logs:
        fig = plots.render_training_curve(result.logs, out / "training_curve.png")
        print(f"figure: {fig}")
        print(f"final epoch mean loss: {result.epoch_losses()[-1]:.6f}")
    return 0


def _cmd_eval(args):
    out = _require_out(args)
    store = read_store(args.store)
    net = projection = None
    if args.method == "learned":
        if args.checkpoint is None:
            raise UsageError("--method learned needs --checkpoint")
        net = ScoringNet.load(args.checkpoint)
    elif args.method == "topt" and args.checkpoint is not None:
        projection = ProjectionLayer.load(args.checkpoint)
    report = evaluate_store(store, args.method, net=net, projection=projection,
                            t_percent=args.t, normalize=not args.raw, jobs=args.jobs)
    path = _dump_json(report.to_dict(), out / "report.json")
    echo = _write_echo(out, {"command": "eval", "method": args.method,
                             "checkpoint": args.checkpoint, "t": args.t,
                             "normalize": not args.raw, "jobs": args.jobs,
                             "store": str(args.store)})
    print(f"report: {path}")
    print(f"config echo: {echo}")
    cmc = " ".join(f"CMC@{r}={v:.4f}" for r, v in sorted(report.cmc.items()))
    print(f"mAP={report.mean_ap:.4f} {cmc} "
          f"queries={report.query_count} skipped={report.skipped_queries}")
    return 0


def _cmd_baseline(args):
    out = _require_out(args)
    if args.multiclip is not None:
        if args.config is None:
            raise UsageError("--multiclip needs --config with a [synth] table")
        if args.store is not None:
            raise UsageError("--multiclip generates its own stores; drop --store")
        synth = _synth_config(_load_config(args.config).get("synth", {}), args.seed)
        m_values = _int_list(args.multiclip)
        rows = multiclip_trend(synth, m_values=m_values)
        csv_path = _write_csv(rows, ["m", "normalized", "mAP", "cmc1"], out / "multiclip.csv")
        fig = plots.render_multiclip_figure(rows, out / "multiclip.png")
        echo = _write_echo(out, {"command": "baseline", "mode": "multiclip",
                                 "m_values": list(m_values), "synth": synth.to_dict()})
        print(f"table: {csv_path}")
        print(f"figure: {fig}")
        print(f"config echo: {echo}")
        for row in rows:
            kind = "normalized" if row["normalized"] else "raw"
            print(f"m={row['m']} {kind}: mAP={row['mAP']:.4f} CMC@1={row['cmc1']:.4f}")
        return 0

    if args.store is None:
        raise UsageError("baseline needs --store (or --multiclip with --config)")
    store = read_store(args.store)
    projection = ProjectionLayer.load(args.checkpoint) if args.checkpoint else None
    rows = []
    report = evaluate_store(store, "mean")
    rows.append({"method": "mean", "t": None, "mAP": report.mean_ap, "cmc1": report.cmc[1]})
    for t in _float_list(args.t):
        report = evaluate_store(store, "topt", projection=projection, t_percent=t)
        rows.append({"method": "topt", "t": t, "mAP": report.mean_ap, "cmc1": report.cmc[1]})
    csv_path = _write_csv(rows, ["method", "t", "mAP", "cmc1"], out / "baseline.csv")
    fig = plots.render_baseline_figure(rows, out / "baseline.png")
    echo = _write_echo(out, {"command": "baseline", "mode": "store",
                             "store": str(args.store), "t": list(_float_list(args.t)),
                             "checkpoint": args.checkpoint})
    print(f"table: {csv_path}")
    print(f"figure: {fig}")
    print(f"config echo: {echo}")
    best = max(rows, key=lambda r: r["mAP"])
    label = best["method"] if best["t"] is None else f"{best['method']} t={best['t']:g}%"
    print(f"best: {label} mAP={best['mAP']:.4f}")
    return 0


def _cmd_sweep(args):
    if args.config is None:
        raise UsageError("sweep needs --config with a [synth] table")
    out = _require_out(args)
    doc = _load_config(args.config)
    if "synth" not in doc:
        raise ConfigError(f"{args.config}: sweep needs a [synth] table")
    synth = _synth_config(doc["synth"], args.seed)
    cfg = _experiment_config(doc.get("train", {}), synth=synth, seed_override=args.seed)
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    result = corruption_sweep(cfg, out_dir=out, methods=methods,
                              train_in_place=args.checkpoints is None,
                              checkpoint_dir=args.checkpoints, jobs=args.jobs)
    echo = _write_echo(out, {"command": "sweep", "methods": list(methods),
                             "jobs": args.jobs, "train": cfg.to_dict()})
    print(f"table: {result.csv_path}")
    print(f"report: {result.json_path}")
    print(f"config echo: {echo}")
    if any(r["status"] == "ok" for r in result.rows):
        fig = plots.render_sweep_figure(result.rows, out / "sweep.png")
        print(f"figure: {fig}")
    head = result.headline
    if head["gap"] is not None:
        print(f"headline: max_corrupt={head['max_corrupt']} "
              f"learned mAP={head['learned_mAP']:.4f} vs best baseline "
              f"mAP={head['best_baseline_mAP']:.4f} (t={head['best_baseline_t']:g}) "
              f"gap={head['gap']:+.4f}")
    else:
        print(f"headline: incomplete at max_corrupt={head['max_corrupt']}")
    return 0


def _pair_line(tag, rec):
    flags = []
    if rec["query_clip_corrupted"]:
        flags.append("query clip corrupted")
    if rec["gallery_clip_corrupted"]:
        flags.append("gallery clip corrupted")
    note = f" ({', '.join(flags)})" if flags else ""
    return (f"{tag}: rank {rec['rank']} clips ({rec['query_clip']},{rec['gallery_clip']}) "
            f"alpha={rec['alpha']:.5f} cosine={rec['cosine']:.4f}{note}")


def _cmd_inspect(args):
    out = _require_out(args)
    store = read_store(args.store)
    net = ScoringNet.load(args.checkpoint)
    records = pair_importance(net, store, args.query, args.gallery)
    path = out / "importance.jsonl"
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True, default=_json_default) + "\n")
    fig = plots.render_importance_figure(records, out / "importance.png")
    echo = _write_echo(out, {"command": "inspect-importance", "query": args.query,
                             "gallery": args.gallery, "checkpoint": str(args.checkpoint),
                             "store": str(args.store)})
    print(f"records: {path}")
    print(f"figure: {fig}")
    print(f"config echo: {echo}")
    for rec in records[:2]:
        print(_pair_line("high", rec))
    for rec in records[-2:]:
        print(_pair_line("low", rec))
    return 0


def _cmd_store_info(args):
    store = read_store(args.store)
    counts = {"train": 0, "query": 0, "gallery": 0}
    clip_counts, corrupted = [], 0
    for t in store.tracklets:
        counts[t.split] += 1
        clip_counts.append(t.num_clips)
        if t.corrupted_mask is not None:
            corrupted += int(t.corrupted_mask.sum())
    info = {
        "feature_dim": store.feature_dim,
        "tracklets": len(store.tracklets),
        "identities": store.identity_count,
        "splits": counts,
        "clips": {"min": min(clip_counts), "max": max(clip_counts), "total": sum(clip_counts)},
        "corrupted_clips": corrupted,
        "feature_checksum": store.feature_checksum(),
        "extra": store.extra,
    }
    text = json.dumps(info, sort_keys=True, indent=2, default=_json_default)
    print(text)
    if args.out is not None:
        out = _require_out(args)
        path = out / "store_info.json"
        with open(path, "w") as fh:
            fh.write(text + "\n")
        _write_echo(out, {"command": "store-info", "store": str(args.store)})
        print(f"report: {path}")
    return 0


def _build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help="override the seed from --config")
    common.add_argument("--config", default=None,
                        help="TOML file with [synth] and [train] tables")
    common.add_argument("--out", default=None,
                        help="directory for reports and artifacts")

    parser = _Parser(prog="clipsim",
                     description="clip-similarity aggregation experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common],
                       help="generate a synthetic feature store")
    p.set_defaults(handler=_cmd_synth)

    p = sub.add_parser("train", parents=[common], help="train one model stage")
    p.add_argument("--store", required=True, help="feature-store file")
    p.add_argument("--kind", choices=("aggregation", "topt", "head"),
                   default="aggregation")
    p.add_argument("--variant", choices=TOP_T_VARIANTS, default="eval-only",
                   help="top-t training variant (with --kind topt)")
    p.add_argument("--t", type=float, default=100.0,
                   help="top-t percentage (with --kind topt --variant train-eval)")
    p.add_argument("--no-triplet", action="store_true",
                   help="drop the triplet term (with --kind head)")
    p.add_argument("--no-ce", action="store_true",
                   help="drop the cross-entropy term (with --kind head)")
    p.set_defaults(handler=_cmd_train)

    p = sub.add_parser("eval", parents=[common], help="retrieval evaluation on a store")
    p.add_argument("--store", required=True)
    p.add_argument("--method", required=True, choices=EVAL_METHODS)
    p.add_argument("--checkpoint", default=None,
                   help="scoring net (learned) or projection (topt)")
    p.add_argument("--t", type=float, default=100.0, help="top-t percentage")
    p.add_argument("--raw", action="store_true",
                   help="skip clip normalization before mean pooling")
    p.add_argument("--jobs", type=int, default=1,
                   help="worker processes for the similarity matrix")
    p.set_defaults(handler=_cmd_eval)

    p = sub.add_parser("baseline", parents=[common],
                       help="training-free estimator table, or multi-clip trend")
    p.add_argument("--store", default=None)
    p.add_argument("--t", default="20,50,100", help="comma-separated top-t percentages")
    p.add_argument("--checkpoint", default=None, help="optional trained projection")
    p.add_argument("--multiclip", default=None, metavar="M_LIST",
                   help="comma-separated clip counts; mean-pool trend over generated stores")
    p.set_defaults(handler=_cmd_baseline)

    p = sub.add_parser("sweep", parents=[common],
                       help="corruption sweep: train and evaluate every cell")
    p.add_argument("--methods", default="learned,topt-e",
                   help="comma-separated subset of learned,topt-e,topt-te")
    p.add_argument("--checkpoints", default=None, metavar="DIR",
                   help="reuse trained checkpoints from DIR instead of training")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(handler=_cmd_sweep)

    p = sub.add_parser("inspect-importance", parents=[common],
                       help="per clip-pair importance scores for one sequence pair")
    p.add_argument("--store", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--query", required=True, help="query tracklet id")
    p.add_argument("--gallery", required=True, help="gallery tracklet id")
    p.set_defaults(handler=_cmd_inspect)

    p = sub.add_parser("store-info", parents=[common],
                       help="print a store's manifest summary as JSON")
    p.add_argument("--store", required=True)
    p.set_defaults(handler=_cmd_store_info)

    return parser


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
        return args.handler(args)
    except SystemExit as exc:  # argparse --help
        return 0 if exc.code in (0, None) else 1
    except (UsageError, ConfigError, InvalidArgumentError) as exc:
        return _fail(exc, 1)
    except NumericalError as exc:
        return _fail(exc, 3)
    except (DataError, OSError) as exc:
        return _fail(exc, 2)


def _fail(exc, code):
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
