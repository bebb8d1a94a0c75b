"""Command line pipeline for run clustering, classification and attribution.

Subcommands: synth, cluster, classify, regress, explain. Each reads an
optional JSON config, runs one stage and writes ``report.json`` plus its
figure and delimited side files into the output directory. Exit codes:
0 success, 2 config error, 3 data error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict

import numpy as np

from . import __version__, figures
from .data_core import Schema, encode, format_float, load_csv_path, split
from .errors import ConfigError, DataError, InvalidConfig, IoError, MissingColumn
from .feature_engineering import DIFF_COL, STD_COL, TOTAL_COL, augment
from .forest import Forest, ForestParams, fit_forest, predict, predict_proba
from .hcluster import cut_height, cut_k, ward_linkage
from .metrics import (classification_metrics, confusion, profile_clusters,
                      regression_metrics)
from .pca import pca_fit, pca_transform
from .shapley import default_background, global_ranking, shap_many
from .synthgen import (DESIGNATED_INPUT_COLUMNS, GenConfig, export, generate,
                       load_truth)

DEFAULT_CLASSIFY_INPUTS = ["recipe", DIFF_COL, "year"]
DEFAULT_REGRESS_INPUTS = list(DESIGNATED_INPUT_COLUMNS) + [
    TOTAL_COL, STD_COL, DIFF_COL, "year", "recipe", "reactor"]


# -- small IO helpers -------------------------------------------------------

def _read_text(path: str) -> str:
    try:
        with open(path, encoding="utf-8") as f:
            return f.read()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc


def _write_bytes(path: str, text: str) -> None:
    try:
        with open(path, "wb") as f:
            f.write(text.encode("utf-8"))
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def _write_report(out_dir: str, doc: dict) -> str:
    path = os.path.join(out_dir, "report.json")
    _write_bytes(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def _ensure_out_dir(cfg: dict) -> str:
    out_dir = cfg.get("out_dir", ".")
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create output directory {out_dir}: {exc}") from exc
    return out_dir


def _envelope(command: str, cfg: dict) -> dict:
    return {"tool": "critproc", "version": __version__,
            "command": command, "config": cfg}


def _load_table(cfg: dict):
    """Load the run table and, when possible, attach engineered features."""
    data_csv = cfg.get("data_csv", "runs.csv")
    schema_json = cfg.get("schema_json", "schema.json")
    schema = Schema.from_json(_read_text(schema_json))
    table = load_csv_path(data_csv, schema)
    if cfg.get("augment", True):
        names = set(table.schema.names())
        if {"disk_areas", "nominal_area"} <= names and DIFF_COL not in names:
            table = augment(table)
    return table


def _run_ids(table) -> list:
    if any(c.name == "run_id" for c in table.schema.columns):
        return [int(v) for v in table.column("run_id")]
    return list(range(table.n_rows))


def _forest_params(section: dict, default_seed: int) -> ForestParams:
    kwargs = dict(section.get("forest", {}))
    kwargs.setdefault("seed", default_seed)
    try:
        return ForestParams(**kwargs)
    except TypeError as exc:
        raise InvalidConfig(f"bad forest parameters: {exc}") from exc


def _params_dict(params: ForestParams) -> dict:
    return {"tree_count": params.tree_count, "max_depth": params.max_depth,
            "min_samples_leaf": params.min_samples_leaf,
            "features_per_split": params.features_per_split,
            "bootstrap": params.bootstrap, "seed": params.seed}


def _load_labels(path: str, n_rows: int) -> np.ndarray:
    """Cluster labels from a truth CSV or a cluster-stage report.json."""
    if path.endswith(".json"):
        doc = json.loads(_read_text(path))
        if "labels" not in doc:
            raise InvalidConfig(f"{path} holds no labels entry")
        labels = np.asarray(doc["labels"], dtype=np.intp)
    else:
        labels = load_truth(path)
    if labels.shape != (n_rows,):
        raise InvalidConfig(
            f"label count {labels.shape[0]} does not match {n_rows} data rows")
    return labels


def _save_model(out_dir: str, forest: Forest, columns: list[str],
                encoded) -> str:
    doc = {
        "forest": json.loads(forest.to_json()),
        "encoding": {
            "columns": columns,
            "feature_names": encoded.feature_names,
            "groups": [[name, list(idx)] for name, idx in encoded.groups],
        },
        "task": forest.task,
    }
    path = os.path.join(out_dir, "forest.json")
    _write_bytes(path, json.dumps(doc, sort_keys=True) + "\n")
    return path


# -- subcommands ------------------------------------------------------------

def cmd_synth(cfg: dict) -> dict:
    """Generate a synthetic dataset and write it with its ground truth."""
    if "synth" not in cfg:
        raise InvalidConfig("config has no synth section")
    gen_cfg = GenConfig.from_dict(cfg["synth"])
    out_dir = _ensure_out_dir(cfg)
    table, labels = generate(gen_cfg)
    paths = export(table, labels, out_dir)

    counts = {str(c): int((labels == c).sum()) for c in np.unique(labels)}
    report = _envelope("synth", {**cfg, "synth": json.loads(gen_cfg.to_json())})
    report.update({
        "n_runs": table.n_rows,
        "label_counts": counts,
        "files": {k: os.path.basename(v) for k, v in paths.items()},
    })
    _write_report(out_dir, report)
    return report


def _resolve_cut(section: dict):
    k = section.get("k")
    h = section.get("height")
    if k is not None and h is not None:
        raise InvalidConfig("cluster config sets both k and height")
    if k is None and h is None:
        k = 3
    return k, h


def cmd_cluster(cfg: dict) -> dict:
    """Ward-cluster the output block; write profiles, tree and projections."""
    section = dict(cfg.get("cluster", {}))
    out_dir = _ensure_out_dir(cfg)
    table = _load_table(cfg)
    X = table.output_matrix()

    dend = ward_linkage(X)
    k, h = _resolve_cut(section)
    if h is not None:
        cut = cut_height(dend, float(h))
        cut_line = float(h)
    else:
        cut = cut_k(dend, int(k))
        # Dashed marker halfway between the last kept merge and the first
        # undone one; k=1 keeps the whole tree so there is no line.
        applied = dend.n_leaves - int(k)
        if 0 < applied < len(dend.merges):
            cut_line = 0.5 * (dend.merges[applied - 1].height
                              + dend.merges[applied].height)
        elif applied == 0 and dend.merges:
            cut_line = 0.5 * dend.merges[0].height
        else:
            cut_line = None

    default_profiles = [c.name for c in table.schema.columns
                        if c.name in ("recipe", DIFF_COL, "year", "reactor",
                                      "nominal_area")]
    profile_inputs = section.get("profile_inputs", default_profiles)
    profiles = profile_clusters(table, cut.labels, profile_inputs,
                                histogram_bins=section.get("histogram_bins", 20))

    q = min(int(section.get("pca_components", 3)), table.n_rows - 1, X.shape[1])
    model = pca_fit(X, q)
    scores = pca_transform(model, X)

    ids = _run_ids(table)
    lines = ["run_id," + ",".join(f"pc{j + 1}" for j in range(q)) + ",label"]
    for i in range(table.n_rows):
        row = [str(ids[i])] + [format_float(v) for v in scores[i]]
        lines.append(",".join(row) + f",{int(cut.labels[i])}")
    _write_bytes(os.path.join(out_dir, "pca_scores.csv"), "\n".join(lines) + "\n")

    _write_bytes(os.path.join(out_dir, "dendrogram.svg"),
                 figures.render_dendrogram(dend, cut_height=cut_line))
    files = ["report.json", "pca_scores.csv", "dendrogram.svg"]
    if q == 3:
        _write_bytes(os.path.join(out_dir, "pca_panels.svg"),
                     figures.render_pca_panels(
                         scores, cut.labels, model.explained_ratio()))
        files.append("pca_panels.svg")

    resolved = {**cfg, "cluster": {**section,
                                   "k": None if h is not None else int(k),
                                   "height": h,
                                   "profile_inputs": profile_inputs}}
    report = _envelope("cluster", resolved)
    report.update({
        "n_rows": table.n_rows,
        "k": cut.k,
        "labels": [int(v) for v in cut.labels],
        "merges": [{"left": m.left, "right": m.right, "height": m.height,
                    "size": m.size} for m in dend.merges],
        "profiles": [asdict(p) for p in profiles],
        "pca": {"explained_variance": [float(v) for v in model.explained_variance],
                "explained_ratio": [float(v) for v in model.explained_ratio()]},
        "files": files,
    })
    _write_report(out_dir, report)
    return report


def cmd_classify(cfg: dict) -> dict:
    """Predict cluster labels from configured inputs; report both splits."""
    section = dict(cfg.get("classify", {}))
    out_dir = _ensure_out_dir(cfg)
    table = _load_table(cfg)

    labels_path = section.get("labels", "truth.csv")
    y = _load_labels(labels_path, table.n_rows)
    inputs = section.get("inputs", DEFAULT_CLASSIFY_INPUTS)
    if not inputs:
        raise InvalidConfig("classify input column list is empty")
    for name in inputs:
        if not any(c.name == name for c in table.schema.columns):
            raise MissingColumn(f"input column {name!r} not in schema")

    seed = int(section.get("seed", 0))
    test_ratio = float(section.get("test_ratio", 0.2))
    encoded = encode(table, inputs)
    stratify = y if section.get("stratify", True) else None
    _, _, train_idx, test_idx = split(table, test_ratio, seed,
                                      stratify_labels=stratify)

    params = _forest_params(section, seed)
    forest = fit_forest(encoded.X[train_idx], y[train_idx], params, "classify")

    k_classes = int(y.max()) + 1
    averaging = section.get("averaging", "macro")
    positive = section.get("positive_class")
    blocks = {}
    cms = {}
    for name, idx in (("train", train_idx), ("test", test_idx)):
        pred = predict(forest, encoded.X[idx])
        cm = confusion(y[idx], pred, k_classes)
        m = classification_metrics(cm, averaging=averaging, positive=positive)
        suffix = averaging if averaging == "macro" else f"positive_{positive}"
        blocks[name] = {
            "confusion": cm.counts.tolist(),
            "accuracy": m["accuracy"],
            f"precision_{suffix}": m["precision"],
            f"recall_{suffix}": m["recall"],
            f"f1_{suffix}": m["f1"],
        }
        cms[name] = (cm, idx, pred)

    ids = _run_ids(table)
    lines = ["run_id,split,true,pred"]
    for name in ("train", "test"):
        _, idx, pred = cms[name]
        for i, p in zip(idx, pred):
            lines.append(f"{ids[i]},{name},{int(y[i])},{int(p)}")
    _write_bytes(os.path.join(out_dir, "predictions.csv"), "\n".join(lines) + "\n")

    for name in ("train", "test"):
        cm, _, _ = cms[name]
        _write_bytes(os.path.join(out_dir, f"confusion_{name}.svg"),
                     figures.render_confusion(cm.counts, f"{name} set"))
    model_path = _save_model(out_dir, forest, inputs, encoded)

    resolved = {**cfg, "classify": {
        **section, "labels": labels_path, "inputs": inputs,
        "test_ratio": test_ratio, "seed": seed, "averaging": averaging,
        "stratify": bool(section.get("stratify", True)),
        "forest": _params_dict(params)}}
    report = _envelope("classify", resolved)
    report.update({
        "n_rows": table.n_rows,
        "n_classes": k_classes,
        "feature_names": encoded.feature_names,
        "encoding_warnings": encoded.warnings,
        "train": blocks["train"],
        "test": blocks["test"],
        "files": ["report.json", "predictions.csv", "confusion_train.svg",
                  "confusion_test.svg", os.path.basename(model_path)],
    })
    _write_report(out_dir, report)
    return report


def _regress_target(table, section: dict) -> tuple[list[str], np.ndarray]:
    outputs = [c.name for c in table.schema.by_role("output")]
    target_cols = section.get("target_outputs", outputs)
    if not target_cols:
        raise InvalidConfig("regress target_outputs is empty")
    for name in target_cols:
        spec = next((c for c in table.schema.columns if c.name == name), None)
        if spec is None:
            raise MissingColumn(f"target column {name!r} not in schema")
        if spec.kind != "numeric":
            raise InvalidConfig(f"target column {name!r} is not numeric")
    cols = np.column_stack([np.asarray(table.column(n)) for n in target_cols])
    return list(target_cols), cols.mean(axis=1)


def cmd_regress(cfg: dict) -> dict:
    """Predict the run-average output from a reduced input set."""
    section = dict(cfg.get("regress", {}))
    out_dir = _ensure_out_dir(cfg)
    table = _load_table(cfg)

    inputs = section.get("inputs", DEFAULT_REGRESS_INPUTS)
    if not inputs:
        raise InvalidConfig("regress input column list is empty")
    for name in inputs:
        if not any(c.name == name for c in table.schema.columns):
            raise MissingColumn(f"input column {name!r} not in schema")
    target_cols, y = _regress_target(table, section)
    # Averaging over a strict superset of the inputs is legitimate (the
    # reduced-measurement setting); a target fully contained in the
    # inputs is pure leakage.
    if set(target_cols) <= set(inputs):
        raise InvalidConfig("target outputs are all among the inputs")

    seed = int(section.get("seed", 0))
    test_ratio = float(section.get("test_ratio", 0.2))
    encoded = encode(table, inputs)
    _, _, train_idx, test_idx = split(table, test_ratio, seed)

    params = _forest_params(section, seed)
    forest = fit_forest(encoded.X[train_idx], y[train_idx], params, "regress")

    blocks = {}
    preds = {}
    for name, idx in (("train", train_idx), ("test", test_idx)):
        yhat = predict(forest, encoded.X[idx])
        m = regression_metrics(y[idx], yhat)
        blocks[name] = {"mse": m["mse"], "mae": m["mae"], "r2": m["r2"],
                        "mape_pct": m["mape"]}
        preds[name] = (idx, yhat)

    ids = _run_ids(table)
    lines = ["run_id,split,actual,predicted"]
    for name in ("train", "test"):
        idx, yhat = preds[name]
        for i, v in zip(idx, yhat):
            lines.append(f"{ids[i]},{name},{format_float(y[i])},{format_float(v)}")
    _write_bytes(os.path.join(out_dir, "predictions.csv"), "\n".join(lines) + "\n")

    test_idx_, yhat_test = preds["test"]
    _write_bytes(os.path.join(out_dir, "pred_vs_actual.svg"),
                 figures.render_pred_vs_actual(y[test_idx_], yhat_test))
    model_path = _save_model(out_dir, forest, inputs, encoded)

    resolved = {**cfg, "regress": {
        **section, "inputs": inputs, "target_outputs": target_cols,
        "test_ratio": test_ratio, "seed": seed,
        "forest": _params_dict(params)}}
    report = _envelope("regress", resolved)
    report.update({
        "n_rows": table.n_rows,
        "feature_names": encoded.feature_names,
        "encoding_warnings": encoded.warnings,
        "train": blocks["train"],
        "test": blocks["test"],
        "files": ["report.json", "predictions.csv", "pred_vs_actual.svg",
                  os.path.basename(model_path)],
    })
    _write_report(out_dir, report)
    return report


def cmd_explain(cfg: dict) -> dict:
    """Attribute model predictions to source features over sampled runs."""
    section = dict(cfg.get("shap", {}))
    out_dir = _ensure_out_dir(cfg)
    table = _load_table(cfg)

    model_path = section.get("model", os.path.join(out_dir, "forest.json"))
    doc = json.loads(_read_text(model_path))
    try:
        forest = Forest.from_json(json.dumps(doc["forest"]))
        columns = list(doc["encoding"]["columns"])
        feature_names = list(doc["encoding"]["feature_names"])
        groups = [(name, list(idx)) for name, idx in doc["encoding"]["groups"]]
    except (KeyError, TypeError) as exc:
        raise InvalidConfig(f"malformed model artifact {model_path}: {exc}") from exc

    encoded = encode(table, columns)
    if encoded.feature_names != feature_names:
        raise InvalidConfig(
            "data encoding does not match the model artifact; "
            "refit or point explain at the training data")

    if forest.task == "classify":
        class_index = int(section.get("class_index", 0))
        if forest.classes is None or not 0 <= class_index < len(forest.classes):
            raise InvalidConfig(f"class_index {class_index} out of range")

        def model_fn(rows):
            return predict_proba(forest, rows)[:, class_index]
    else:
        def model_fn(rows):
            return predict(forest, rows)

    seed = int(section.get("seed", 0))
    bg_cap = int(section.get("background_cap", 100))
    background = default_background(encoded.X, cap=bg_cap, seed=seed)

    n = encoded.X.shape[0]
    instance_cap = int(section.get("instance_cap", 10))
    if instance_cap < 1:
        raise InvalidConfig("instance_cap must be >= 1")
    if n > instance_cap:
        rng = np.random.default_rng(seed + 1)
        rows = np.sort(rng.choice(n, size=instance_cap, replace=False))
    else:
        rows = np.arange(n)

    mode = section.get("mode", "sampled")
    n_permutations = int(section.get("n_permutations", 100))
    results = shap_many(model_fn, encoded.X[rows], background, groups=groups,
                        mode=mode, n_permutations=n_permutations, seed=seed)
    ranking = global_ranking(results)

    ids = _run_ids(table)
    group_names = results[0].group_names
    lines = ["run_id," + ",".join(group_names)]
    for r_i, res in zip(rows, results):
        lines.append(",".join([str(ids[r_i])] +
                              [format_float(v) for v in res.phi]))
    _write_bytes(os.path.join(out_dir, "shap_values.csv"), "\n".join(lines) + "\n")
    _write_bytes(os.path.join(out_dir, "shap_bar.svg"),
                 figures.render_shap_bar(ranking))

    instances = []
    for r_i, res in zip(rows, results):
        entry = {"id": ids[r_i],
                 "phi": {name: float(v)
                         for name, v in zip(group_names, res.phi)}}
        if res.stderr is not None:
            entry["stderr"] = {name: float(v)
                               for name, v in zip(group_names, res.stderr)}
        instances.append(entry)

    resolved = {**cfg, "shap": {
        **section, "model": model_path, "mode": mode, "seed": seed,
        "background_cap": bg_cap, "instance_cap": instance_cap,
        "n_permutations": n_permutations}}
    report = _envelope("explain", resolved)
    report.update({
        "base_value": results[0].base_value,
        "background_rows": int(background.shape[0]),
        "features": [{"name": name, "mean_abs_shap": val}
                     for name, val in ranking],
        "instances": instances,
        "files": ["report.json", "shap_values.csv", "shap_bar.svg"],
    })
    _write_report(out_dir, report)
    return report


# -- argument parsing -------------------------------------------------------

COMMANDS = {
    "synth": cmd_synth,
    "cluster": cmd_cluster,
    "classify": cmd_classify,
    "regress": cmd_regress,
    "explain": cmd_explain,
}

_SEED_SECTION = {"synth": "synth", "classify": "classify",
                 "regress": "regress", "explain": "shap"}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="critproc",
        description="Production run clustering, classification and "
                    "feature attribution pipeline.")
    sub = parser.add_subparsers(dest="command", required=True)
    descriptions = {
        "synth": "generate a synthetic production dataset with ground truth",
        "cluster": "hierarchically cluster runs on their output block",
        "classify": "fit a forest predicting cluster labels from inputs",
        "regress": "fit a forest predicting the run-average output",
        "explain": "attribute a fitted model's predictions to features",
    }
    for name, desc in descriptions.items():
        p = sub.add_parser(name, help=desc, description=desc)
        p.add_argument("--config", metavar="JSON",
                       help="path to a pipeline config document")
        p.add_argument("--out", metavar="DIR",
                       help="output directory (overrides config out_dir)")
        p.add_argument("--seed", type=int, metavar="N",
                       help="seed override for this stage")
    return parser


def _merge_cli_args(args) -> dict:
    if args.config is not None:
        try:
            cfg = json.loads(_read_text(args.config))
        except IoError as exc:
            raise InvalidConfig(str(exc)) from exc
        except json.JSONDecodeError as exc:
            raise InvalidConfig(f"config is not valid JSON: {exc}") from exc
        if not isinstance(cfg, dict):
            raise InvalidConfig("config root must be a JSON object")
    else:
        cfg = {"synth": {}} if args.command == "synth" else {}
    if args.out is not None:
        cfg["out_dir"] = args.out
    if args.seed is not None:
        section = _SEED_SECTION.get(args.command)
        if section is not None:
            cfg.setdefault(section, {})
            cfg[section] = {**cfg[section], "seed": args.seed}
    return cfg


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _merge_cli_args(args)
        COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
