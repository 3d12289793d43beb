"""Command-line front end.

    snnlab <propagate|sweep|train|gradcheck|report> [--config FILE] [--set key=value]...

Configuration precedence is defaults < JSON file < flags. Each run writes a
CSV whose ``#`` comment header carries the resolved config, plus SVG charts
with the same config in ``<metadata>``.

Exit codes: 0 success, 2 config error, 3 data error, 4 gradcheck failure.
"""

from __future__ import annotations

import argparse
import copy
import csv
import html
import io
import json
import logging
import math
import sys
from collections import defaultdict
from dataclasses import replace
from pathlib import Path
from typing import Any

import numpy as np

from snnlab import svg
from snnlab.core import LifParams, NetworkSpec
from snnlab.data import load_dataset, normalize, subset
from snnlab.errors import ConfigError, SnnLabError
from snnlab.initschemes import SCHEMES, InitScheme
from snnlab.propagation import PropagationConfig, SimTrace, compare
from snnlab.training import SurrogateSpec, TrainConfig, gradcheck, train

log = logging.getLogger("snnlab")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_GRADCHECK = 0, 2, 3, 4

PROPAGATION_COLUMNS = [
    "run_id", "scheme", "theta", "beta", "width", "depth", "layer", "t", "seed",
    "var_u", "spike_count", "skewness", "excess_kurtosis",
]
TRAIN_COLUMNS = ["run_id", "scheme", "param", "value", "epoch", "train_loss", "train_acc", "test_acc", "lr"]
GRADCHECK_COLUMNS = ["trial", "seed", "depth", "width", "T", "max_rel_error"]
METRIC_LABELS = {
    "var_u": "Var[u]",
    "spike_count": "spike count",
    "skewness": "skewness",
    "excess_kurtosis": "excess kurtosis",
}

# None means "derived from other keys" (see the resolve_* helpers)
DEFAULTS: dict[str, dict[str, Any]] = {
    "propagate": {
        "depth": 100, "width": 1000, "T": 1, "beta": 0.5, "theta": [1.0], "reset": None,
        "schemes": ["proposed"], "seeds": None, "seed": 0, "batch": 1, "sigma_u": 1.0,
        "calibration_batch": 16, "run_id": "propagate", "output_dir": "runs",
    },
    "sweep": {
        "widths": [100, 600], "thetas": [0.0, 0.2, 0.4, 0.6, 0.8, 1.0], "depth": 100, "T": 1,
        "beta": 0.5, "reset": None, "scheme": "proposed", "seeds": None, "seed": 0, "batch": 1,
        "calibration_batch": 16, "run_id": "sweep", "output_dir": "runs",
    },
    "train": {
        "dataset": "mnist", "data_dir": None, "arch": "mlp", "depth": 6, "width": 300, "cnn_channels": 64,
        "T": 3, "beta": 0.5, "theta": 1.0, "reset": "soft", "schemes": ["proposed", "kaiming"],
        "epochs": 5, "batch_size": 128, "lr": 1e-3, "schedule": "cosine_annealing", "optimizer": "adam",
        "adam_betas": [0.9, 0.999], "adam_eps": 1e-8, "seed": 0, "n_train": 10000, "n_eval": 2000,
        "surrogate_slope": 2.0, "detach_reset": False, "calibration_samples": 256, "grid": {}, "run_id": "train", "output_dir": "runs",
    },
    "gradcheck": {
        "trials": 10, "depth": 3, "width": 8, "T": 3, "input_dim": 5, "classes": 3, "batch": 4,
        "seed": 0, "h": 1e-5, "tol": 1e-4, "surrogate_slope": 2.0, "fixed": False, "fault": None,
        "output_dir": None,
    },
    "report": {"dir": "runs"},
}
LIST_KEYS = {"theta", "schemes", "widths", "thetas", "adam_betas"}
GRID_KEYS = ("depth", "width", "beta", "theta")


# -- config -----------------------------------------------------------------


def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _coerce(key: str, value: Any) -> Any:
    if key in LIST_KEYS and not isinstance(value, list):
        if isinstance(value, str):
            return [_parse_value(v.strip()) for v in value.split(",") if v.strip()]
        return [value]
    return value


def resolve_config(command: str, file: str | None = None, sets: list[str] | None = None) -> dict[str, Any]:
    cfg = copy.deepcopy(DEFAULTS[command])
    layers: list[dict[str, Any]] = []
    if file:
        try:
            loaded = json.loads(Path(file).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config file {file}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {file} is not valid JSON: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError(f"config file {file} must hold a JSON object")
        layers.append(loaded)
    flag_values: dict[str, Any] = {}
    for item in sets or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, text = item.split("=", 1)
        flag_values[key.strip()] = _parse_value(text.strip())
    layers.append(flag_values)
    for layer in layers:
        for key, value in layer.items():
            if key not in cfg:
                raise ConfigError(f"unknown config key {key!r} for '{command}'; allowed: {sorted(cfg)}")
            cfg[key] = _coerce(key, value)
    return cfg


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ConfigError(message)


def _scheme(name: str, **kw) -> InitScheme:
    _require(name in SCHEMES, f"unknown scheme {name!r}; choose from {sorted(SCHEMES)}")
    return InitScheme(name, **kw)


def propagation_configs(cfg: dict[str, Any], command: str) -> list[PropagationConfig]:
    T = int(cfg["T"])
    reset = cfg["reset"] or ("none" if T == 1 else "soft")
    seeds = cfg["seeds"] or (20 if T == 1 else 10)
    common = dict(depth=int(cfg["depth"]), T=T, seeds=int(seeds), seed0=int(cfg["seed"]), batch=int(cfg["batch"]),
                  calibration_batch=int(cfg["calibration_batch"]))
    if command == "propagate":
        _require(bool(cfg["theta"]), "theta list must not be empty")
        _require(bool(cfg["schemes"]), "schemes list must not be empty")
        pairs = [(s, th, int(cfg["width"])) for s in cfg["schemes"] for th in cfg["theta"]]
        sigma = float(cfg["sigma_u"])
    else:
        _require(bool(cfg["thetas"]), "sweep needs a non-empty 'thetas' grid")
        _require(bool(cfg["widths"]), "sweep needs a non-empty 'widths' grid")
        _require(all(int(w) >= 1 for w in cfg["widths"]), "all widths must be >= 1")
        pairs = [(cfg["scheme"], th, int(w)) for w in cfg["widths"] for th in cfg["thetas"]]
        sigma = 1.0
    out = []
    for scheme, theta, width in pairs:
        kw = {"sigma_u": sigma} if scheme == "fluctuation_driven" else {}
        lif = LifParams(float(cfg["beta"]), float(theta), reset)
        out.append(PropagationConfig(width=width, lif=lif, scheme=_scheme(scheme, **kw), **common))
    return out


# -- CSV --------------------------------------------------------------------


def _write_csv(path: Path, command: str, cfg: dict[str, Any], columns: list[str], rows, notes=()) -> None:
    buf = io.StringIO()
    buf.write(f"# snnlab {command}\n")
    buf.write(f"# config: {json.dumps(cfg, sort_keys=True)}\n")
    for note in notes:
        buf.write(f"# {note}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([svg.fmt(v) if isinstance(v, float) else ("" if v is None else v) for v in row])
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue())


def read_csv(path) -> tuple[str, dict[str, Any], list[dict[str, str]]]:
    """Parse an emitted CSV: (command, config, rows as dicts)."""
    text = Path(path).read_text()
    lines = text.splitlines()
    command, cfg = None, None
    body_start = 0
    for i, line in enumerate(lines):
        if not line.startswith("#"):
            body_start = i
            break
        if line.startswith("# snnlab "):
            command = line[len("# snnlab "):].strip()
        elif line.startswith("# config: "):
            cfg = json.loads(line[len("# config: "):])
    else:
        body_start = len(lines)
    if command is None or cfg is None:
        raise ValueError(f"{path}: missing snnlab header")
    reader = csv.DictReader(lines[body_start:])
    rows = list(reader)
    if reader.fieldnames is None:
        raise ValueError(f"{path}: no column header")
    expected = {"propagate": PROPAGATION_COLUMNS, "sweep": PROPAGATION_COLUMNS, "train": TRAIN_COLUMNS,
                "gradcheck": GRADCHECK_COLUMNS}.get(command)
    if expected is None or reader.fieldnames != expected:
        raise ValueError(f"{path}: unexpected columns for {command!r}")
    for row in rows:
        if None in row or any(v is None for v in row.values()):
            raise ValueError(f"{path}: ragged row")
    return command, cfg, rows


def _float(text: str) -> float:
    return float(text) if text not in ("", "nan") else math.nan


def trace_rows(run_id: str, trace: SimTrace):
    c = trace.config
    for s_idx, seed in enumerate(trace.seeds):
        for layer in range(c.depth):
            for t in range(c.T):
                yield [
                    run_id, c.scheme.name, float(c.lif.theta), float(c.lif.beta), c.width, c.depth,
                    layer + 1, t + 1, seed,
                    float(trace.var_u[s_idx, layer, t]), int(trace.spike_count[s_idx, layer, t]),
                    float(trace.skewness[s_idx, layer, t]), float(trace.excess_kurtosis[s_idx, layer, t]),
                ]


def propagation_series(rows: list[dict[str, str]], metric: str, panel_key: str | None = None):
    """Layer-wise mean and std across seeds of the per-seed time-averaged metric.

    Returns {panel: {(scheme, theta): (layers, mean, std)}} built only from
    CSV text, so plots can be regenerated from the CSV alone.
    """
    acc: dict = defaultdict(lambda: defaultdict(lambda: defaultdict(lambda: defaultdict(list))))
    for r in rows:
        panel = r[panel_key] if panel_key else ""
        key = (r["scheme"], r["theta"])
        acc[panel][key][int(r["layer"])][r["seed"]].append(_float(r[metric]))
    out: dict = {}
    for panel, series in acc.items():
        out[panel] = {}
        for key, by_layer in series.items():
            layers = sorted(by_layer)
            means, stds = [], []
            for layer in layers:
                per_seed = []
                for vals in by_layer[layer].values():
                    finite = [v for v in vals if not math.isnan(v)]
                    if finite:
                        per_seed.append(math.fsum(finite) / len(finite))
                if per_seed:
                    arr = np.asarray(per_seed)
                    means.append(float(arr.mean()))
                    stds.append(float(arr.std()))
                else:
                    means.append(math.nan)
                    stds.append(math.nan)
            out[panel][key] = (layers, means, stds)
    return out


def _propagation_svgs(out_dir: Path, stem: str, command: str, cfg, rows, panel_key=None) -> list[Path]:
    paths = []
    multi = int(cfg.get("T", 1)) > 1
    for metric, label in METRIC_LABELS.items():
        data = propagation_series(rows, metric, panel_key)
        panels = []
        for panel_name in sorted(data, key=lambda p: float(p) if p else 0.0):
            series = [
                svg.Series(f"{scheme} theta={theta}", layers, mean, std, dashed=scheme == "kaiming")
                for (scheme, theta), (layers, mean, std) in data[panel_name].items()
            ]
            title = f"n={panel_name}" if panel_key else label
            panels.append(svg.Panel(title, "layer", label + (" (time-averaged)" if multi else ""), series))
        path = out_dir / f"{stem}_{metric}.svg"
        path.write_text(svg.render(panels, f"{command}: {label}", {"command": command, "config": cfg}))
        paths.append(path)
    return paths


# -- commands ---------------------------------------------------------------


def _out_dir(cfg: dict[str, Any], run_id: str) -> Path:
    return Path(cfg["output_dir"]) / run_id


def cmd_propagate(cfg: dict[str, Any], command: str = "propagate") -> list[Path]:
    configs = propagation_configs(cfg, command)
    run_id = str(cfg["run_id"])
    traces = compare(configs)
    out = _out_dir(cfg, run_id)
    csv_path = out / f"{command}.csv"
    rows = [row for tr in traces for row in trace_rows(run_id, tr)]
    notes = ["var_u is the population (divide-by-N) variance over the neurons of a layer"]
    _write_csv(csv_path, command, cfg, PROPAGATION_COLUMNS, rows, notes)
    _, _, parsed = read_csv(csv_path)
    svgs = _propagation_svgs(out, command, command, cfg, parsed, "width" if command == "sweep" else None)
    log.info("wrote %s and %d SVGs", csv_path, len(svgs))
    return [csv_path, *svgs]


def cmd_sweep(cfg: dict[str, Any]) -> list[Path]:
    return cmd_propagate(cfg, "sweep")


def _train_network(cfg: dict[str, Any], overrides: dict[str, Any]) -> NetworkSpec:
    c = {**cfg, **overrides}
    lif = LifParams(float(c["beta"]), float(c["theta"]), c["reset"])
    depth, width = int(c["depth"]), int(c["width"])
    _require(depth >= 1 and width >= 1, "depth and width must be >= 1")
    if c["arch"] == "mlp":
        return NetworkSpec.mlp(784, [width] * (depth - 1) + [10], lif)
    if c["arch"] == "cnn":
        return NetworkSpec.cnn(1, 28, int(c["cnn_channels"]), depth, 10, lif=lif)
    raise ConfigError(f"unknown arch {c['arch']!r}; choose 'mlp' or 'cnn'")


def cmd_train(cfg: dict[str, Any]) -> list[Path]:
    grid = cfg["grid"] or {}
    _require(isinstance(grid, dict) and len(grid) <= 1, "grid must map at most one parameter to a list of values")
    for key, values in grid.items():
        _require(key in GRID_KEYS, f"grid parameter must be one of {GRID_KEYS}, got {key!r}")
        _require(isinstance(values, list) and bool(values), "grid values must be a non-empty list")
    _require(bool(cfg["schemes"]), "schemes list must not be empty")
    for s in cfg["schemes"]:
        _scheme(s)
    train_raw, test_raw = load_dataset(cfg["dataset"], cfg["data_dir"])
    train_set = subset(train_raw, min(int(cfg["n_train"]), len(train_raw)), int(cfg["seed"]))
    test_set = subset(test_raw, min(int(cfg["n_eval"]), len(test_raw)), int(cfg["seed"])) if test_raw else None
    if test_set is not None:
        train_set, test_set = normalize(train_set, test_set)
    else:
        (train_set,) = normalize(train_set)
    base = TrainConfig(
        epochs=int(cfg["epochs"]), batch_size=int(cfg["batch_size"]), T=int(cfg["T"]), lr=float(cfg["lr"]),
        schedule=cfg["schedule"], optimizer=cfg["optimizer"], adam_betas=tuple(cfg["adam_betas"]), adam_eps=float(cfg["adam_eps"]),
        seed=int(cfg["seed"]), surrogate=SurrogateSpec(slope=float(cfg["surrogate_slope"])),
        detach_reset=bool(cfg["detach_reset"]), calibration_samples=int(cfg["calibration_samples"]),
    )
    (param, values), = grid.items() if grid else (("", [None]),)
    rows, panels = [], []
    for value in values:
        net = _train_network(cfg, {param: value} if param else {})
        for scheme in cfg["schemes"]:
            tl = train(net, replace(base, scheme=InitScheme(scheme)), train_set, test_set)
            for r in tl.records:
                rows.append([cfg["run_id"], scheme, param, "" if value is None else value, r.epoch, r.train_loss,
                             r.train_accuracy, r.test_accuracy, r.lr])
    out = _out_dir(cfg, str(cfg["run_id"]))
    csv_path = out / "train.csv"
    _write_csv(csv_path, "train", cfg, TRAIN_COLUMNS, rows)
    _, _, parsed = read_csv(csv_path)
    by_panel: dict = defaultdict(lambda: defaultdict(lambda: ([], [])))
    for r in parsed:
        xs, ys = by_panel[r["value"]][r["scheme"]]
        xs.append(int(r["epoch"]))
        ys.append(_float(r["train_acc"]))
    for value, schemes in by_panel.items():
        title = f"{param}={value}" if param else "training accuracy"
        series = [svg.Series(s, xs, ys, dashed=s == "kaiming") for s, (xs, ys) in schemes.items()]
        panels.append(svg.Panel(title, "epoch", "train accuracy", series))
    svg_path = out / "train_accuracy.svg"
    svg_path.write_text(svg.render(panels, "train: accuracy vs epoch", {"command": "train", "config": cfg}))
    return [csv_path, svg_path]


def cmd_gradcheck(cfg: dict[str, Any]) -> int:
    fixed = (int(cfg["depth"]), int(cfg["width"]), int(cfg["T"])) if cfg["fixed"] else None
    _require(cfg["fault"] in (None, "sign_flip"), f"unknown fault {cfg['fault']!r}")
    results = gradcheck(
        trials=int(cfg["trials"]), max_depth=int(cfg["depth"]), max_width=int(cfg["width"]), max_T=int(cfg["T"]),
        input_dim=int(cfg["input_dim"]), classes=int(cfg["classes"]), batch=int(cfg["batch"]),
        seed=int(cfg["seed"]), h=float(cfg["h"]), surrogate=SurrogateSpec(slope=float(cfg["surrogate_slope"])),
        fault=cfg["fault"], fixed=fixed,
    )
    worst = max(r.max_rel_error for r in results)
    for r in results:
        print(f"trial {r.trial}: depth={r.depth} width={r.width} T={r.T} max_rel_error={r.max_rel_error:.3e}")
    ok = worst < float(cfg["tol"])
    print(f"gradcheck {'PASS' if ok else 'FAIL'}: max relative error {worst:.3e} (tolerance {float(cfg['tol']):g})")
    if cfg["output_dir"]:
        rows = [[r.trial, r.seed, r.depth, r.width, r.T, r.max_rel_error] for r in results]
        _write_csv(Path(cfg["output_dir"]) / "gradcheck" / "gradcheck.csv", "gradcheck", cfg, GRADCHECK_COLUMNS, rows)
    return EXIT_OK if ok else EXIT_GRADCHECK


def cmd_report(cfg: dict[str, Any]) -> Path:
    root = Path(cfg["dir"])
    if not root.is_dir():
        raise ConfigError(f"report directory {root} does not exist")
    groups: dict[str, list] = defaultdict(list)
    warnings = []
    for csv_path in sorted(root.rglob("*.csv")):
        try:
            command, run_cfg, _ = read_csv(csv_path)
        except (ValueError, OSError, UnicodeDecodeError) as exc:
            warnings.append(f"skipped {csv_path.relative_to(root)}: {exc}")
            continue
        stem = csv_path.stem
        figures = sorted(p for p in csv_path.parent.glob("*.svg") if p.name.startswith(stem))
        groups[command].append((csv_path, run_cfg, figures))
    if not groups:
        warnings.append("no snnlab CSV outputs found")
    for w in warnings:
        log.warning(w)
    esc = html.escape
    parts = ["<!DOCTYPE html>", "<html><head><meta charset='utf-8'><title>snnlab report</title></head><body>",
             "<h1>snnlab report</h1>"]
    if warnings:
        parts.append("<h2>Warnings</h2><ul>" + "".join(f"<li>{esc(w)}</li>" for w in warnings) + "</ul>")
    for command in sorted(groups):
        parts.append(f"<h2>{esc(command)}</h2>")
        for csv_path, run_cfg, figures in groups[command]:
            rel = csv_path.relative_to(root).as_posix()
            parts.append(f"<h3><a href='{esc(rel)}'>{esc(rel)}</a></h3>")
            parts.append(f"<pre class='config'>{esc(json.dumps(run_cfg, indent=1, sort_keys=True))}</pre>")
            for fig in figures:
                frel = fig.relative_to(root).as_posix()
                parts.append(f"<figure><img src='{esc(frel)}' alt='{esc(fig.stem)}'><figcaption>{esc(frel)}</figcaption></figure>")
    parts.append("</body></html>")
    index = root / "index.html"
    index.write_text("\n".join(parts) + "\n")
    return index


# -- entry point ------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="snnlab", description="Deep SNN initialization and propagation experiments")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("propagate", "sweep", "train", "gradcheck", "report"):
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one config key")
        if name == "report":
            p.add_argument("dir", nargs="?", help="directory holding previous runs")
            continue
        if name != "gradcheck":
            p.add_argument("-o", "--output-dir", help="output directory (key output_dir)")
        p.add_argument("--seed", help="base seed (key seed)")
        if name in ("propagate", "train"):
            p.add_argument("--schemes", help="comma-separated scheme names (key schemes)")
        if name == "propagate":
            p.add_argument("--theta", help="threshold or comma-separated thresholds (key theta)")
        if name == "sweep":
            p.add_argument("--widths", help="comma-separated widths")
            p.add_argument("--thetas", help="comma-separated thresholds")
    return ap


FLAG_KEYS = {"output_dir": "output_dir", "seed": "seed", "schemes": "schemes", "theta": "theta",
             "widths": "widths", "thetas": "thetas", "dir": "dir"}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    sets = list(args.set)
    for attr, key in FLAG_KEYS.items():
        value = getattr(args, attr, None)
        if value is not None:
            sets.append(f"{key}={value}" if key not in LIST_KEYS else f"{key}={json.dumps(_coerce(key, value))}")
    try:
        cfg = resolve_config(args.command, args.config, sets)
        if args.command == "propagate":
            cmd_propagate(cfg)
        elif args.command == "sweep":
            cmd_sweep(cfg)
        elif args.command == "train":
            cmd_train(cfg)
        elif args.command == "gradcheck":
            return cmd_gradcheck(cfg)
        else:
            print(cmd_report(cfg))
    except SnnLabError as exc:
        print(f"snnlab: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"snnlab: error: {exc.filename or ''}: {exc.strerror or exc}", file=sys.stderr)
        return 1
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
