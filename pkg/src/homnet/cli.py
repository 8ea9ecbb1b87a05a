"""``homnet`` command line interface.

Subcommands::

    homnet graph build   --input data.csv --out graph.json [--hasse h.json] [--dot g.dot]
    homnet tabular train --input data.csv --target y --out model.json
    homnet tabular eval  --checkpoint model.json --input data.csv --target y
    homnet ts train      --input series.txt --horizon 3 --out model.json
    homnet ts eval       --checkpoint model.json --input series.txt
    homnet report        --manifests run1.json run2.json --csv table.csv

Exit status is 0 on success, 1 on runtime failures and 2 on usage errors.
Every run writes a JSON manifest (``--manifest``, default next to the main
output) recording seeds, configuration and input hashes.
"""
import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, bench, hnn, timeseries
from .corr import load_csv, pearson_similarity, zscore
from .graph import ChordalGraph
from .homology import hasse_from_graph
from .tmfg import tmfg_construct, verify_tmfg

logger = logging.getLogger("homnet")

MANIFEST_SCHEMA = 1
DATA_DIR_ENV = "HOMNET_DATA_DIR"

TRAIN_DEFAULTS = {f: getattr(hnn.TrainConfig(), f) for f in hnn.TrainConfig.__dataclass_fields__}
DEFAULTS = {
    "graph build": {"variant": "absolute", "target": None, "no_header": False},
    "tabular train": {**TRAIN_DEFAULTS, "variant": "hnn", "activation": "relu",
                      "channels": 1, "test_fraction": 0.3, "valid_fraction": 0.15,
                      "no_header": False},
    "tabular eval": {"split": "test", "no_header": False},
    "ts train": {**TRAIN_DEFAULTS, "horizon": 3, "lookback": 24, "hidden": 64,
                 "variant": "hnn", "activation": "relu", "channels": 1,
                 "split": "0.6,0.2,0.2"},
    "ts eval": {"part": "test"},
    "report": {},
}


class UsageError(Exception):
    pass


def file_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def resolve_input(path) -> Path:
    p = Path(path)
    if not p.exists() and not p.is_absolute() and os.environ.get(DATA_DIR_ENV):
        alt = Path(os.environ[DATA_DIR_ENV]) / p
        if alt.exists():
            return alt
    if not p.exists():
        raise FileNotFoundError(f"input file not found: {path}")
    return p


def write_manifest(path, command, argv, config, inputs, outputs, metrics=None):
    cfg_blob = json.dumps(config, sort_keys=True, default=str)
    doc = {
        "schema": MANIFEST_SCHEMA,
        "homnet_version": __version__,
        "command": command,
        "argv": list(argv),
        "config": config,
        "config_hash": hashlib.sha256(cfg_blob.encode()).hexdigest(),
        "seed": config.get("seed"),
        "inputs": {str(k): {"path": str(v), "sha256": file_hash(v)} for k, v in inputs.items()},
        "outputs": {k: str(v) for k, v in outputs.items()},
        "metrics": metrics or {},
    }
    Path(path).write_text(json.dumps(doc, indent=2, default=str))
    logger.info("manifest written to %s", path)


def default_manifest(out) -> Path:
    out = Path(out)
    return out.with_name(out.stem + ".manifest.json")


def train_config(cfg: dict) -> hnn.TrainConfig:
    return hnn.TrainConfig(**{k: cfg[k] for k in TRAIN_DEFAULTS})


# -- commands -------------------------------------------------------------------

def cmd_graph_build(args, cfg, argv):
    src = resolve_input(args.input)
    ds = load_csv(src, has_header=not cfg["no_header"], target_column=cfg["target"])
    ds, _ = zscore(ds)
    w = pearson_similarity(ds, cfg["variant"])
    g, trace = tmfg_construct(w.values)
    g = ChordalGraph(g.p, g.edges, "tmfg", ds.names)
    report = verify_tmfg(g)
    Path(args.out).write_text(g.to_json())
    outputs = {"graph": args.out}
    d = hasse_from_graph(g)
    if args.hasse:
        Path(args.hasse).write_text(d.to_json())
        outputs["hasse"] = args.hasse
    if args.dot:
        Path(args.dot).write_text(g.to_dot())
        outputs["dot"] = args.dot
    if args.hasse_dot:
        Path(args.hasse_dot).write_text(d.to_dot(ds.names))
        outputs["hasse_dot"] = args.hasse_dot
    if args.similarity:
        Path(args.similarity).write_text(w.to_json())
        outputs["similarity"] = args.similarity
    metrics = {"p": g.p, "edges": len(g.edges), "layer_sizes": d.sizes,
               "is_tmfg": report.is_tmfg, "initial_tetrahedron": list(trace.initial)}
    write_manifest(args.manifest or default_manifest(args.out), "graph build", argv,
                   cfg, {"input": src}, outputs, metrics)
    print(json.dumps(metrics))


def cmd_tabular_train(args, cfg, argv):
    src = resolve_input(args.input)
    ds = load_csv(src, has_header=not cfg["no_header"], target_column=args.target)
    tc = train_config(cfg)
    prep = bench.prepare_tabular(ds, cfg["test_fraction"], tc.seed)
    x, y = prep["x_train"], prep["y_train"]
    n_valid = max(1, int(round(len(x) * cfg["valid_fraction"])))
    perm = np.random.default_rng(tc.seed + 11).permutation(len(x))
    vi, ti = perm[:n_valid], perm[n_valid:]
    spec = bench.AblationSpec(cfg["variant"])
    m = spec.build(prep["diagram"], tc, activation=cfg["activation"], channels=cfg["channels"])
    m, hist = hnn.train(m, (x[ti], y[ti]), (x[vi], y[vi]), tc)
    pred = m.predict(prep["x_test"]).ravel() * prep["y_std"] + prep["y_mean"]
    r2 = bench.r2_score(prep["y_test"], pred)
    norm = {"names": prep["names"], "mean": prep["x_mean"].tolist(),
            "std": prep["x_std"].tolist(), "y_mean": prep["y_mean"], "y_std": prep["y_std"]}
    extra = {"kind": "tabular", "variant": spec.variant, "target": args.target,
             "test_fraction": cfg["test_fraction"], "split_seed": tc.seed,
             "graph": prep["graph"].to_dict()}
    hnn.save_checkpoint(args.out, m, tc, normalization=norm, extra=extra)
    outputs = {"checkpoint": args.out}
    if args.history:
        hnn.write_history(hist, args.history)
        outputs["history"] = args.history
    metrics = {"variant": spec.variant, "r2": r2, "params": hnn.param_count(m).total,
               "epochs": len(hist)}
    write_manifest(args.manifest or default_manifest(args.out), "tabular train", argv,
                   cfg, {"input": src}, outputs, metrics)
    print(json.dumps(metrics))


def cmd_tabular_eval(args, cfg, argv):
    src = resolve_input(args.input)
    diagram = None
    if args.graph:
        diagram = hasse_from_graph(ChordalGraph.from_json(Path(args.graph).read_text()))
    m, doc = hnn.load_checkpoint(args.checkpoint, diagram)
    info, norm = doc["extra"], doc["normalization"]
    if info.get("kind") != "tabular":
        raise ValueError(f"{args.checkpoint} is not a tabular checkpoint")
    ds = load_csv(src, has_header=not cfg["no_header"], target_column=args.target or info["target"])
    rows = np.arange(ds.n_rows)
    if cfg["split"] == "test":
        _, rows = bench.split_indices(ds.n_rows, info["test_fraction"], info["split_seed"])
    idx = [ds.names.index(n) for n in norm["names"]]
    x = (ds.values[rows][:, idx] - np.asarray(norm["mean"])) / np.asarray(norm["std"])
    pred = m.predict(x).ravel() * norm["y_std"] + norm["y_mean"]
    metrics = {"variant": info["variant"], "split": cfg["split"], "n": int(len(rows)),
               "r2": bench.r2_score(ds.target[rows], pred)}
    outputs = {}
    if args.out:
        Path(args.out).write_text(json.dumps(metrics, indent=2))
        outputs["metrics"] = args.out
    base = Path(args.out or args.checkpoint)
    manifest = args.manifest or base.with_name(base.stem + ".eval.manifest.json")
    write_manifest(manifest, "tabular eval", argv, cfg,
                   {"input": src, "checkpoint": args.checkpoint}, outputs, metrics)
    print(json.dumps(metrics))


def parse_split(text) -> tuple:
    try:
        parts = tuple(float(v) for v in str(text).split(","))
    except ValueError:
        raise UsageError(f"bad split {text!r}") from None
    if len(parts) != 3:
        raise UsageError("split needs three comma-separated fractions")
    return parts


def cmd_ts_train(args, cfg, argv):
    src = resolve_input(args.input)
    s = timeseries.load_series(src)
    tc = train_config(cfg)
    splits = timeseries.make_windows(s, cfg["lookback"], cfg["horizon"], parse_split(cfg["split"]))
    spec = bench.AblationSpec(cfg["variant"])
    model = timeseries.forecaster_for(s, splits, hidden=cfg["hidden"], seed=tc.seed,
                                      activation=cfg["activation"], channels=cfg["channels"],
                                      residual=spec.residual, dense=spec.dense)
    model, hist = timeseries.train_forecaster(model, splits, tc)
    yt, yp = timeseries.predict_split(model, splits, "test")
    metrics = {"variant": spec.variant, "horizon": cfg["horizon"],
               "rse": bench.rse(yt, yp), "corr": bench.corr_metric(yt, yp),
               "params": sum(p.size for p in model.parameters()), "epochs": len(hist)}
    timeseries.save_forecaster(args.out, model, tc, splits,
                               {"split": cfg["split"], "variant": spec.variant})
    outputs = {"checkpoint": args.out}
    if args.history:
        hnn.write_history(hist, args.history)
        outputs["history"] = args.history
    write_manifest(args.manifest or default_manifest(args.out), "ts train", argv, cfg,
                   {"input": src}, outputs, metrics)
    print(json.dumps(metrics))


def cmd_ts_eval(args, cfg, argv):
    src = resolve_input(args.input)
    model, doc = timeseries.load_forecaster(args.checkpoint)
    info = doc["extra"]
    s = timeseries.load_series(src)
    splits = timeseries.make_windows(s, info["lookback"], info["horizon"], parse_split(info["split"]))
    if not np.allclose(splits.mean, doc["normalization"]["mean"]):
        logger.warning("series statistics differ from the training run")
    part = cfg["part"]
    yt, yp = timeseries.predict_split(model, splits, part)
    pers = splits.denormalize(bench.persistence_forecast(getattr(splits, part).x))
    metrics = {"variant": info.get("variant", "hnn"), "horizon": info["horizon"], "part": part,
               "rse": bench.rse(yt, yp), "corr": bench.corr_metric(yt, yp),
               "persistence_rse": bench.rse(yt, pers)}
    outputs = {}
    if args.forecasts:
        timeseries.write_forecasts(args.forecasts, getattr(splits, part).target_index, yp, s.names)
        outputs["forecasts"] = args.forecasts
    if args.out:
        Path(args.out).write_text(json.dumps(metrics, indent=2))
        outputs["metrics"] = args.out
    manifest = args.manifest or Path(args.checkpoint).with_name(
        Path(args.checkpoint).stem + ".eval.manifest.json")
    write_manifest(manifest, "ts eval", argv, cfg,
                   {"input": src, "checkpoint": args.checkpoint}, outputs, metrics)
    print(json.dumps(metrics))


def cmd_report(args, cfg, argv):
    """Assemble result tables from run manifests.

    Tabular runs become one row per variant with R2 quantiles; forecasting
    runs become one row per (variant, metric) with one column per horizon.
    """
    tab, ts = {}, {}
    for path in args.manifests:
        doc = json.loads(resolve_input(path).read_text())
        if doc.get("schema") != MANIFEST_SCHEMA:
            raise ValueError(f"{path}: unsupported manifest schema")
        met = doc.get("metrics", {})
        if "r2" in met:
            tab.setdefault(met["variant"], []).append(met["r2"])
        elif "rse" in met:
            for key in ("rse", "corr"):
                ts.setdefault((met["variant"], key), {}).setdefault(met["horizon"], []).append(met[key])
    tables = {}
    if tab:
        tables["tabular"] = [r.row() for r in bench.summarize(tab)]
    if ts:
        rows = []
        for (variant, key), by_h in sorted(ts.items()):
            row = {"model": variant, "metric": key}
            row.update({str(h): float(np.mean(v)) for h, v in sorted(by_h.items())})
            rows.append(row)
        tables["timeseries"] = rows
    if not tables:
        raise ValueError("no metrics found in the given manifests")
    text = json.dumps(tables, indent=2)
    outputs = {}
    if args.json:
        Path(args.json).write_text(text)
        outputs["json"] = args.json
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            for name, rows in tables.items():
                fields = list(dict.fromkeys(k for r in rows for k in r))
                fh.write(f"# {name}\n")
                w = csv.DictWriter(fh, fieldnames=fields)
                w.writeheader()
                w.writerows(rows)
        outputs["csv"] = args.csv
    if args.manifest:
        write_manifest(args.manifest, "report", argv, cfg,
                       {f"manifest{i}": resolve_input(p) for i, p in enumerate(args.manifests)},
                       outputs, {})
    print(text)


# -- parser ---------------------------------------------------------------------

def add_train_flags(p):
    g = p.add_argument_group("training")
    g.add_argument("--lr", type=float)
    g.add_argument("--optimizer", choices=hnn.OPTIMIZERS)
    g.add_argument("--batch-size", dest="batch_size", type=int)
    g.add_argument("--max-epochs", dest="max_epochs", type=int)
    g.add_argument("--patience", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--init", choices=hnn.INIT_SCHEMES)
    g.add_argument("--l2", type=float)
    g.add_argument("--activation", choices=hnn.ACTIVATIONS)
    g.add_argument("--channels", type=int)
    g.add_argument("--variant", choices=bench.VARIANTS)
    g.add_argument("--history", help="write per-epoch losses as CSV")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="homnet", description="Homological neural networks")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="group", required=True)

    def common(p):
        p.add_argument("--config", help="flat JSON file of option values")
        p.add_argument("--manifest", help="where to write the run manifest")

    graph = sub.add_parser("graph").add_subparsers(dest="action", required=True)
    p = graph.add_parser("build", help="CSV -> TMFG JSON and Hasse diagram")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--target", help="column to exclude from the graph")
    p.add_argument("--no-header", dest="no_header", action="store_true", default=None)
    p.add_argument("--variant", choices=("signed", "absolute"))
    p.add_argument("--hasse", help="Hasse diagram JSON output")
    p.add_argument("--dot", help="graph DOT output")
    p.add_argument("--hasse-dot", dest="hasse_dot", help="Hasse diagram DOT output")
    p.add_argument("--similarity", help="similarity matrix JSON output")
    common(p)

    tab = sub.add_parser("tabular").add_subparsers(dest="action", required=True)
    p = tab.add_parser("train")
    p.add_argument("--input", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--no-header", dest="no_header", action="store_true", default=None)
    p.add_argument("--test-fraction", dest="test_fraction", type=float)
    p.add_argument("--valid-fraction", dest="valid_fraction", type=float)
    add_train_flags(p)
    common(p)
    p = tab.add_parser("eval")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--target")
    p.add_argument("--graph", help="graph JSON the checkpoint must match")
    p.add_argument("--split", choices=("test", "all"))
    p.add_argument("--no-header", dest="no_header", action="store_true", default=None)
    p.add_argument("--out", help="metrics JSON output")
    common(p)

    ts = sub.add_parser("ts").add_subparsers(dest="action", required=True)
    p = ts.add_parser("train")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--horizon", type=int)
    p.add_argument("--lookback", type=int)
    p.add_argument("--hidden", type=int)
    p.add_argument("--split", help="train,valid,test fractions")
    add_train_flags(p)
    common(p)
    p = ts.add_parser("eval")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--part", choices=("train", "valid", "test"))
    p.add_argument("--forecasts", help="CSV of (timestamp, series, prediction)")
    p.add_argument("--out", help="metrics JSON output")
    common(p)

    p = sub.add_parser("report")
    p.add_argument("--manifests", nargs="+", required=True)
    p.add_argument("--csv")
    p.add_argument("--json")
    common(p)
    return parser


COMMANDS = {
    "graph build": cmd_graph_build,
    "tabular train": cmd_tabular_train,
    "tabular eval": cmd_tabular_eval,
    "ts train": cmd_ts_train,
    "ts eval": cmd_ts_eval,
    "report": cmd_report,
}


def resolve_config(name, args) -> dict:
    """Defaults < config file < explicit flags."""
    cfg = dict(DEFAULTS[name])
    if getattr(args, "config", None):
        try:
            loaded = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(loaded, dict) or any(isinstance(v, (dict, list)) for v in loaded.values()):
            raise UsageError("config file must be a flat JSON object")
        unknown = set(loaded) - set(cfg)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        cfg.update(loaded)
    for key in cfg:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    if "lr" in cfg:
        try:
            train_config(cfg)
        except (TypeError, ValueError) as exc:
            raise UsageError(str(exc)) from None
    return cfg


def dispatch(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    name = args.group if args.group == "report" else f"{args.group} {args.action}"
    try:
        cfg = resolve_config(name, args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"homnet: error: {exc}", file=sys.stderr)
        return 2
    try:
        COMMANDS[name](args, cfg, argv)
    except UsageError as exc:
        print(f"homnet: error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"homnet: error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, RuntimeError, OSError, np.linalg.LinAlgError) as exc:
        print(f"homnet: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
