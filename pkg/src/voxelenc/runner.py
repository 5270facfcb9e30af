"""Experiment orchestration over a dataset manifest.

Four experiment kinds share one execution engine:

  cv       k-fold cross-validation over the full stimulus set
  cross    train/test transfer matrix over sub-datasets (same-set
           cells degenerate to k-fold CV inside the sub-dataset)
  concept  directional transfer between the 'concrete' and 'abstract'
           stimulus classes
  sweep    cv repeated per feature layer, with a best-layer-per-ROI
           summary

A work unit is one (subject, split): the training design is normalized
and factorized once there and reused for every ROI block, which is the
point of the shared-Gram formulation. Units run on a bounded thread
pool; assembly is single-threaded in a fixed order so reports are
byte-identical for identical configs. Timing goes to a separate file,
never into report.json.

Fold seeds derive from (seed, subject, context), so adding subjects or
running other cells never reshuffles existing folds.
"""

from __future__ import annotations

import csv
import json
import math
import os
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from . import __version__
from .errors import ValidationError, VoxelencError
from .folds import SplitSpec, _cell_label, concept_split, cross_split, make_folds, make_grouped_folds
from .matio import DatasetManifest, SubjectEntry, read_manifest, read_matrix
from .metrics import evaluate
from .ridge import (
    DEFAULT_BLOCK_SIZE,
    DEFAULT_LAMBDA,
    DEFAULT_LAMBDA_GRID,
    SharedDesign,
    predict,
    tune_lambda,
)
from .rng import derive_seed

KINDS = ("cv", "cross", "concept", "sweep")

LEAF_FIELDS = [
    "subject",
    "group",
    "layer",
    "roi",
    "fold",
    "lambda",
    "n_train",
    "n_test",
    "n_voxels",
    "n_pairs",
    "two_v_two",
    "pearson",
    "pearson_degenerate",
    "mae_mean",
]

_AGG_METRICS = ("two_v_two", "pearson", "mae_mean")


class ExperimentConfig(BaseModel):
    """Everything needed to reproduce one experiment run."""

    model_config = ConfigDict(populate_by_name=True, extra="forbid")

    manifest: str
    kind: Literal["cv", "cross", "concept", "sweep"]
    k: int = Field(10, ge=2)
    seed: int = Field(42, ge=0)
    lambda_: float = Field(DEFAULT_LAMBDA, alias="lambda", ge=0.0)
    tune: bool = False
    lambda_grid: list[float] = Field(default_factory=lambda: list(DEFAULT_LAMBDA_GRID))
    normalization: Literal["zscore", "none"] = "zscore"
    model: Optional[str] = None
    layer: Optional[str] = None
    subjects: Optional[list[str]] = None
    rois: Optional[list[str]] = None
    cells: Optional[list[str]] = None
    group_by_concept: bool = True
    threads: int = Field(0, ge=0)  # 0 = VOXELENC_THREADS, else logical cores
    block_size: int = Field(DEFAULT_BLOCK_SIZE, ge=1)
    out_dir: Optional[str] = None

    @field_validator("lambda_grid")
    @classmethod
    def _grid_ok(cls, v):
        if not v:
            raise ValueError("lambda_grid must not be empty")
        if any(g < 0 for g in v):
            raise ValueError("lambda_grid values must be nonnegative")
        return v

    def echo(self) -> dict:
        """Config as it goes into the report; out_dir stays out of it so
        the same experiment written elsewhere produces identical bytes."""
        d = self.model_dump(by_alias=True, mode="json")
        d.pop("out_dir")
        return d


def resolve_threads(requested: int) -> int:
    """requested > 0 wins, then VOXELENC_THREADS, then logical cores."""
    if requested > 0:
        return requested
    env = os.environ.get("VOXELENC_THREADS", "").strip()
    if env:
        try:
            v = int(env)
        except ValueError:
            raise ValidationError(f"VOXELENC_THREADS is not an integer: {env!r}") from None
        if v < 1:
            raise ValidationError(f"VOXELENC_THREADS must be >= 1, got {v}")
        return v
    return os.cpu_count() or 1


@dataclass
class _Task:
    """One (subject, split) unit; holds views onto shared X/Y arrays."""

    order: int
    subject: str
    group: str  # "cv", cell label, direction, or layer name
    layer: str
    x: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)
    split: SplitSpec = field(repr=False)
    rois: list = field(repr=False)


@dataclass
class EvalReport:
    kind: str
    config: dict
    rows: list
    aggregates: dict
    extras: dict
    timing: dict
    mae_vectors: dict = field(default_factory=dict, repr=False)
    # mae_vectors: (subject, group, roi) -> (roi_start, fold-averaged vector)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "config": self.config,
            "rows": self.rows,
            "aggregates": self.aggregates,
            "extras": self.extras,
            "tool_version": __version__,
        }

    def save(self, out_dir) -> Path:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        report_path = out_dir / "report.json"
        report_path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        (out_dir / "timing.json").write_text(json.dumps(self.timing, indent=2, sort_keys=True) + "\n")

        with open(out_dir / "leaf_rows.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=LEAF_FIELDS)
            w.writeheader()
            for row in self.rows:
                flat = dict(row)
                if flat["fold"] is None:
                    flat["fold"] = ""
                w.writerow(flat)

        by_roi: dict = {}
        for (subject, group, roi), (start, vec) in self.mae_vectors.items():
            by_roi.setdefault(roi, (start, []))[1].append((f"{subject}/{group}", vec))
        for roi, (start, cols) in by_roi.items():
            safe = re.sub(r"[^A-Za-z0-9_.-]", "_", roi)
            with open(out_dir / f"mae_{safe}.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["voxel_index"] + [label for label, _ in cols])
                for i in range(len(cols[0][1])):
                    w.writerow([start + i] + [repr(float(vec[i])) for _, vec in cols])
        return report_path

    @staticmethod
    def load(path) -> dict:
        """Read report.json back and re-derive the aggregate block from the
        leaf rows; any disagreement means the file was edited or corrupt."""
        data = json.loads(Path(path).read_text())
        recomputed = _aggregate(data["rows"])
        if not _close(recomputed, data["aggregates"]):
            raise ValidationError(f"{path}: aggregates do not match the leaf rows")
        return data


def _close(a, b, rel=1e-12) -> bool:
    if isinstance(a, dict) and isinstance(b, dict):
        return a.keys() == b.keys() and all(_close(a[k], b[k], rel) for k in a)
    if isinstance(a, list) and isinstance(b, list):
        return len(a) == len(b) and all(_close(x, y, rel) for x, y in zip(a, b))
    if isinstance(a, float) or isinstance(b, float):
        if a is None or b is None:
            return a is b
        return math.isclose(a, b, rel_tol=rel, abs_tol=1e-15)
    return a == b


def _mean_sd(vals: list) -> tuple[float, Optional[float]]:
    arr = np.asarray(vals, dtype=np.float64)
    m = float(arr.mean())
    sd = float(arr.std(ddof=1)) if arr.size > 1 else None
    return m, sd


def _aggregate(rows: list) -> dict:
    per: dict = {}
    for r in rows:
        per.setdefault((r["subject"], r["group"], r["layer"], r["roi"]), []).append(r)
    per_subject = []
    for (subject, group, layer, roi), rs in per.items():
        entry = {
            "subject": subject,
            "group": group,
            "layer": layer,
            "roi": roi,
            "n_rows": len(rs),
        }
        for m in _AGG_METRICS:
            mean, sd = _mean_sd([r[m] for r in rs])
            entry[f"{m}_mean"] = mean
            entry[f"{m}_sd"] = sd
        per_subject.append(entry)

    across: dict = {}
    for e in per_subject:
        across.setdefault((e["group"], e["layer"], e["roi"]), []).append(e)
    across_subjects = []
    for (group, layer, roi), es in across.items():
        entry = {"group": group, "layer": layer, "roi": roi, "n_subjects": len(es)}
        for m in _AGG_METRICS:
            entry[f"{m}_mean"] = float(np.mean([e[f"{m}_mean"] for e in es]))
        across_subjects.append(entry)
    return {"per_subject": per_subject, "across_subjects": across_subjects}


def _selected_subjects(man: DatasetManifest, cfg: ExperimentConfig) -> list:
    if cfg.subjects is None:
        return list(man.subjects)
    return [man.subject(name) for name in cfg.subjects]


def _selected_rois(entry: SubjectEntry, cfg: ExperimentConfig) -> list:
    if cfg.rois is None:
        return list(entry.rois)
    return [entry.roi(name) for name in cfg.rois]


def _model_layers(entry: SubjectEntry, model: Optional[str]) -> tuple[str, list]:
    models = []
    for f in entry.features:
        if f.model not in models:
            models.append(f.model)
    if model is None:
        if len(models) != 1:
            raise ValidationError(
                f"subject {entry.name}: manifest lists models {models}; pass one explicitly"
            )
        model = models[0]
    elif model not in models:
        raise ValidationError(f"subject {entry.name}: no feature entries for model {model!r}")
    layers = [f.layer for f in entry.features if f.model == model]
    return model, layers


def _resolve_layer(entry: SubjectEntry, cfg: ExperimentConfig) -> tuple[str, str]:
    model, layers = _model_layers(entry, cfg.model)
    if cfg.layer is not None:
        if cfg.layer not in layers:
            raise ValidationError(
                f"subject {entry.name}: model {model!r} has no layer {cfg.layer!r} (has {layers})"
            )
        return model, cfg.layer
    if len(layers) != 1:
        raise ValidationError(
            f"subject {entry.name}: model {model!r} has layers {layers}; pass one explicitly"
        )
    return model, layers[0]


def _fold_splits(entry: SubjectEntry, cfg: ExperimentConfig) -> tuple[list, str]:
    fold_seed = derive_seed(cfg.seed, entry.name, "cv")
    if cfg.group_by_concept and entry.groups is not None:
        plan = make_grouped_folds(entry.groups, cfg.k, fold_seed)
        mode = "grouped"
    else:
        plan = make_folds(entry.n_stimuli, cfg.k, fold_seed)
        mode = "plain"
    splits = [
        SplitSpec(
            label="cv",
            train_indices=plan.train_indices(f),
            test_indices=plan.test_indices(f),
            fold=f,
        )
        for f in range(cfg.k)
    ]
    return splits, mode


def _run_task(task: _Task, cfg: ExperimentConfig) -> tuple[list, list]:
    split = task.split
    xtr = task.x[split.train_indices]
    xte = task.x[split.test_indices]
    design = None
    if not cfg.tune:
        design = SharedDesign(xtr, cfg.lambda_, cfg.normalization, cfg.block_size)
    rows = []
    maes = []
    foldtag = "" if split.fold is None else str(split.fold)
    for roi in task.rois:
        ytr = task.y[split.train_indices, roi.start : roi.stop]
        if cfg.tune:
            tuned = tune_lambda(
                xtr,
                ytr,
                cfg.lambda_grid,
                seed=derive_seed(cfg.seed, "tune", task.subject, task.group, roi.name, foldtag),
                normalization_mode=cfg.normalization,
                block_size=cfg.block_size,
            )
            model, lam = tuned.model, tuned.lambda_
        else:
            model, lam = design.fit_block(ytr), cfg.lambda_
        res = evaluate(task.y[split.test_indices, roi.start : roi.stop], predict(model, xte))
        rows.append(
            {
                "subject": task.subject,
                "group": task.group,
                "layer": task.layer,
                "roi": roi.name,
                "fold": split.fold,
                "lambda": lam,
                "n_train": int(len(split.train_indices)),
                "n_test": int(len(split.test_indices)),
                "n_voxels": res.n_voxels,
                "n_pairs": res.n_pairs,
                "two_v_two": res.two_v_two,
                "pearson": res.pearson,
                "pearson_degenerate": res.pearson_degenerate,
                "mae_mean": res.mae_mean,
            }
        )
        maes.append(((task.subject, task.group, roi.name), roi.start, res.mae_per_voxel))
    return rows, maes


def _execute(tasks: list, cfg: ExperimentConfig, kind: str, extras: dict, save: bool = True) -> EvalReport:
    threads = resolve_threads(cfg.threads)
    t0 = time.perf_counter()
    results: list = [None] * len(tasks)

    def work(i: int):
        task = tasks[i]
        try:
            results[i] = _run_task(task, cfg)
        except VoxelencError as e:
            raise type(e)(
                f"[subject={task.subject} group={task.group} fold={task.split.fold}] {e}"
            ) from e

    if threads > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, range(len(tasks))))
    else:
        for i in range(len(tasks)):
            work(i)

    rows: list = []
    acc: dict = {}
    for task_rows, task_maes in results:
        rows.extend(task_rows)
        for key, start, vec in task_maes:
            if key in acc:
                acc[key][1] += vec
                acc[key][2] += 1
            else:
                acc[key] = [start, vec.copy(), 1]
    mae_vectors = {key: (start, vec / count) for key, (start, vec, count) in acc.items()}

    elapsed = time.perf_counter() - t0
    report = EvalReport(
        kind=kind,
        config=cfg.echo(),
        rows=rows,
        aggregates=_aggregate(rows),
        extras=extras,
        timing={"total_s": elapsed, "n_tasks": len(tasks), "threads": threads},
        mae_vectors=mae_vectors,
    )
    if save and cfg.out_dir is not None:
        report.save(cfg.out_dir)
    return report


def run_cv(config: ExperimentConfig, manifest: Optional[DatasetManifest] = None) -> EvalReport:
    """k-fold CV per subject; one fitted model per (fold, ROI)."""
    if config.kind != "cv":
        raise ValidationError(f"run_cv got kind={config.kind!r}")
    man = manifest if manifest is not None else read_manifest(config.manifest)
    tasks = []
    fold_modes = {}
    resolved = {}
    for entry in _selected_subjects(man, config):
        model, layer = _resolve_layer(entry, config)
        resolved.setdefault("model", model)
        x = read_matrix(entry.feature(model, layer).path)
        y = read_matrix(entry.response_path)
        rois = _selected_rois(entry, config)
        splits, fold_modes[entry.name] = _fold_splits(entry, config)
        for split in splits:
            tasks.append(_Task(len(tasks), entry.name, "cv", layer, x, y, split, rois))
    extras = {"fold_modes": fold_modes, "resolved_model": resolved.get("model")}
    return _execute(tasks, config, "cv", extras)


def _cell_map(entry: SubjectEntry) -> dict:
    """All train x test cells in manifest order, keyed by label."""
    names = [s.name for s in entry.sub_datasets]
    cells = {}
    for a in names:
        for b in names:
            cells[_cell_label(names, a, b)] = (a, b)
    return cells


def _requested_cells(cell_map: dict, requested: list) -> list:
    out = []
    lower = {label.lower(): label for label in cell_map}
    for want in requested:
        norm = want.strip()
        if "->" in norm or "→" in norm:
            a, _, b = norm.replace("->", "→").partition("→")
            pair = (a.strip(), b.strip())
            hits = [label for label, p in cell_map.items() if p == pair]
            if not hits:
                raise ValidationError(f"no cell trains on {pair[0]!r} and tests on {pair[1]!r}")
            out.append(hits[0])
        elif norm.lower() in lower:
            out.append(lower[norm.lower()])
        else:
            raise ValidationError(f"unknown cell {want!r}; available: {sorted(cell_map)}")
    return out


def run_cross(config: ExperimentConfig, manifest: Optional[DatasetManifest] = None) -> EvalReport:
    """Full transfer matrix over sub-datasets (or a requested subset).

    Cross cells train on the complete source sub-dataset; same-set
    cells run k-fold CV within the sub-dataset.
    """
    if config.kind != "cross":
        raise ValidationError(f"run_cross got kind={config.kind!r}")
    man = manifest if manifest is not None else read_manifest(config.manifest)
    tasks = []
    for entry in _selected_subjects(man, config):
        if len(entry.sub_datasets) < 2:
            raise ValidationError(f"subject {entry.name}: cross requires ≥ 2 sub-datasets")
        model, layer = _resolve_layer(entry, config)
        x = read_matrix(entry.feature(model, layer).path)
        y = read_matrix(entry.response_path)
        rois = _selected_rois(entry, config)
        groups = entry.groups if config.group_by_concept else None
        cell_map = _cell_map(entry)
        labels = (
            _requested_cells(cell_map, config.cells) if config.cells else list(cell_map)
        )
        for label in labels:
            a, b = cell_map[label]
            for split in cross_split(man, entry.name, a, b, config.k, config.seed, groups):
                tasks.append(_Task(len(tasks), entry.name, split.label, layer, x, y, split, rois))
    extras = {"notes": ["cross cells train on the full source sub-dataset"]}
    return _execute(tasks, config, "cross", extras)


def run_concept(config: ExperimentConfig, manifest: Optional[DatasetManifest] = None) -> EvalReport:
    """Both transfer directions between the concrete and abstract classes."""
    if config.kind != "concept":
        raise ValidationError(f"run_concept got kind={config.kind!r}")
    man = manifest if manifest is not None else read_manifest(config.manifest)
    tasks = []
    for entry in _selected_subjects(man, config):
        model, layer = _resolve_layer(entry, config)
        x = read_matrix(entry.feature(model, layer).path)
        y = read_matrix(entry.response_path)
        rois = _selected_rois(entry, config)
        for direction in ("concrete→abstract", "abstract→concrete"):
            split = concept_split(man, entry.name, direction)
            tasks.append(_Task(len(tasks), entry.name, split.label, layer, x, y, split, rois))
    return _execute(tasks, config, "concept", {})


def run_sweep(config: ExperimentConfig, manifest: Optional[DatasetManifest] = None) -> EvalReport:
    """run_cv per layer of one model, plus a best-layer-per-ROI summary.

    Folds are fixed per subject before the layer loop, so every layer
    is scored on identical splits.
    """
    if config.kind != "sweep":
        raise ValidationError(f"run_sweep got kind={config.kind!r}")
    if config.layer is not None:
        raise ValidationError("sweep runs every layer of the model; do not pass a single layer")
    man = manifest if manifest is not None else read_manifest(config.manifest)
    entries = _selected_subjects(man, config)
    layer_lists = {}
    for entry in entries:
        model, layers = _model_layers(entry, config.model)
        layer_lists[entry.name] = (model, layers)
    first = next(iter(layer_lists.values()))
    for name, got in layer_lists.items():
        if got != first:
            raise ValidationError(
                f"subject {name}: layer set {got[1]} differs from {first[1]}; sweep needs a common set"
            )
    model, layers = first

    tasks = []
    fold_modes = {}
    for entry in entries:
        y = read_matrix(entry.response_path)
        rois = _selected_rois(entry, config)
        splits, fold_modes[entry.name] = _fold_splits(entry, config)
        for layer in layers:
            x = read_matrix(entry.feature(model, layer).path)
            for split in splits:
                tasks.append(_Task(len(tasks), entry.name, layer, layer, x, y, split, rois))

    report = _execute(tasks, config, "sweep", {}, save=False)
    best = {}
    across = {(e["layer"], e["roi"]): e["pearson_mean"] for e in report.aggregates["across_subjects"]}
    roi_names = []
    for e in report.aggregates["across_subjects"]:
        if e["roi"] not in roi_names:
            roi_names.append(e["roi"])
    for roi in roi_names:
        scored = [(across[(layer, roi)], layer) for layer in layers]
        top = max(score for score, _ in scored)
        winner = next(layer for score, layer in scored if score == top)
        best[roi] = {"layer": winner, "pearson_mean": top}
    report.extras = {"fold_modes": fold_modes, "best_layer_per_roi": best, "model": model, "layers": layers}
    if config.out_dir is not None:
        report.save(config.out_dir)
    return report


RUNNERS = {"cv": run_cv, "cross": run_cross, "concept": run_concept, "sweep": run_sweep}


def run(config: ExperimentConfig, manifest: Optional[DatasetManifest] = None) -> EvalReport:
    return RUNNERS[config.kind](config, manifest)
