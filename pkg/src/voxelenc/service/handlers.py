"""Handler functions behind the HTTP endpoints.

The CLI calls these directly in-process; the FastAPI app is a thin
binding on top. Everything returns plain dicts so responses serialize
the same way through either path.
"""

from __future__ import annotations

import json
from pathlib import Path

from .. import __version__
from ..errors import ValidationError
from ..matio import read_manifest, read_matrix, read_matrix_header, write_matrix
from ..metrics import evaluate
from ..ridge import fit, load_model, predict, save_model, tune_lambda
from ..runner import KINDS, EvalReport, ExperimentConfig, run
from ..stats import significance_table
from ..synth import SynthSpec, write_fixture
from . import schemas

TTEST_METRICS = ("pearson", "two_v_two", "mae_mean")


def do_health() -> dict:
    return {"status": "ok", "version": __version__}


def do_inspect(req: schemas.InspectRequest) -> dict:
    path = Path(req.path)
    if path.suffix == ".json":
        man = read_manifest(path)
        return {
            "kind": "manifest",
            "path": str(path),
            "subjects": [s.name for s in man.subjects],
            "summary": man.summary(),
        }
    rows, cols, dtype = read_matrix_header(path)
    return {"kind": "matrix", "path": str(path), "rows": rows, "cols": cols, "dtype": dtype}


def do_fit(req: schemas.FitRequest) -> dict:
    x = read_matrix(req.x_path)
    y = read_matrix(req.y_path)
    if req.tune:
        model = tune_lambda(
            x, y, req.lambda_grid, normalization_mode=req.normalization
        ).model
    else:
        model = fit(x, y, req.lambda_, normalization_mode=req.normalization)
    weights_path, meta_path = save_model(model, req.out_prefix)
    return {
        "weights_path": str(weights_path),
        "meta_path": str(meta_path),
        "lambda": model.lambda_,
        "n_features": model.n_features,
        "n_targets": model.n_targets,
    }


def do_predict(req: schemas.PredictRequest) -> dict:
    model = load_model(req.model_prefix)
    x = read_matrix(req.x_path)
    yhat = predict(model, x)
    out = Path(req.out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_matrix(yhat, out)
    return {"out_path": str(out), "rows": yhat.shape[0], "cols": yhat.shape[1]}


def do_eval(req: schemas.EvalRequest) -> dict:
    y_true = read_matrix(req.y_true_path)
    y_pred = read_matrix(req.y_pred_path)
    return evaluate(y_true, y_pred, permissive=req.permissive).to_dict()


def do_experiment(kind: str, req: schemas.ExperimentRequest) -> dict:
    if kind not in KINDS:
        raise ValidationError(f"unknown experiment kind {kind!r}; expected one of {KINDS}")
    config = ExperimentConfig(kind=kind, **req.model_dump(by_alias=True))
    report = run(config)
    out = report.to_dict()
    out["timing"] = report.timing
    if config.out_dir is not None:
        out["report_path"] = str(Path(config.out_dir) / "report.json")
    return out


def _report_model_name(data: dict, fallback: str) -> str:
    extras = data.get("extras", {})
    return (
        extras.get("resolved_model")
        or extras.get("model")
        or data.get("config", {}).get("model")
        or fallback
    )


def _report_scores(data: dict, metric: str, group, layer) -> dict:
    per_subject = data.get("aggregates", {}).get("per_subject", [])
    out: dict = {}
    for e in per_subject:
        if group is not None and e["group"] != group:
            continue
        if layer is not None and e["layer"] != layer:
            continue
        roi_scores = out.setdefault(e["subject"], {})
        if e["roi"] in roi_scores:
            raise ValidationError(
                f"report has several rows for subject {e['subject']!r} roi {e['roi']!r}; "
                "narrow the selection with group= or layer="
            )
        roi_scores[e["roi"]] = e[f"{metric}_mean"]
    if not out:
        raise ValidationError("no score rows matched the requested group/layer")
    return out


def do_ttest(req: schemas.TTestRequest) -> dict:
    if req.metric not in TTEST_METRICS:
        raise ValidationError(f"metric must be one of {TTEST_METRICS}, got {req.metric!r}")
    scores: dict = {}
    for spec in req.reports:
        name = None
        path = spec
        if "=" in spec:
            name, _, path = spec.partition("=")
            name = name.strip()
        p = Path(path)
        if p.is_dir():
            p = p / "report.json"
        data = EvalReport.load(p)
        name = name or _report_model_name(data, p.parent.name)
        if name in scores:
            raise ValidationError(f"two reports map to the same name {name!r}; use name=path")
        scores[name] = _report_scores(data, req.metric, req.group, req.layer)

    pairs = []
    for raw in req.pairs:
        a, sep, b = raw.partition(":")
        if not sep or not a.strip() or not b.strip():
            raise ValidationError(f"pair must look like modelA:modelB, got {raw!r}")
        pairs.append((a.strip(), b.strip()))

    table = significance_table(scores, pairs, metric=req.metric, paired=req.paired)
    rows = []
    for row in table.rows:
        for cell in row.cells:
            rows.append(
                {"model_a": row.model_a, "model_b": row.model_b, "roi": cell.roi}
                | cell.result.to_dict()
            )
    metadata = {
        "metric": req.metric,
        "paired": req.paired,
        "aggregation": "per-subject fold mean",
    }
    if req.out_dir is not None:
        out = Path(req.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "significance.csv").write_text(table.to_csv())
        (out / "significance.txt").write_text(table.to_text())
        (out / "significance_meta.json").write_text(json.dumps(metadata, indent=2, sort_keys=True))
    return {"text": table.to_text(), "csv": table.to_csv(), "rows": rows, "metadata": metadata}


def do_synth(req: schemas.SynthRequest) -> dict:
    sub_datasets = None
    if req.sub_datasets:
        sub_datasets = []
        for raw in req.sub_datasets:
            name, sep, count = raw.partition(":")
            if not sep:
                raise ValidationError(f"sub-dataset must look like name:count, got {raw!r}")
            try:
                sub_datasets.append((name.strip(), int(count)))
            except ValueError:
                raise ValidationError(f"bad sub-dataset count in {raw!r}") from None
    spec = SynthSpec(n=req.n, d=req.d, v=req.v, noise_sigma=req.noise_sigma, seed=req.seed)
    manifest_path = write_fixture(
        spec,
        req.out_dir,
        subject=req.subject,
        model=req.feature_model,
        n_rois=req.n_rois,
        n_layers=req.n_layers,
        true_layer=req.true_layer,
        sub_datasets=sub_datasets,
        group_size=req.group_size,
        n_subjects=req.n_subjects,
    )
    files = sorted(p.name for p in Path(req.out_dir).iterdir() if p.is_file())
    return {"manifest_path": str(manifest_path), "files": files}
