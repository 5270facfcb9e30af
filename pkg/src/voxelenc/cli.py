"""Command line interface.

Every subcommand runs in-process by default; with --server URL the same
request is POSTed to a running service instead and the response printed
unchanged, so scripts behave identically either way.

Exit codes: 0 success, 1 validation error, 2 I/O or format error.
Results go to stdout, logs and errors to stderr. Argument errors exit
with usage text via argparse.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from pydantic import ValidationError as PydanticValidationError

from . import __version__
from .errors import IoError, ValidationError, VoxelencError
from .runner import KINDS, ExperimentConfig
from .service import handlers, schemas

log = logging.getLogger(__name__)

_EXPERIMENT_KINDS = tuple(KINDS)


def _comma_list(raw: str) -> list[str]:
    parts = [p.strip() for p in raw.split(",")]
    return [p for p in parts if p]


def _comma_floats(raw: str) -> list[float]:
    try:
        return [float(p) for p in _comma_list(raw)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {raw!r}")


def _remote(server: str, endpoint: str, payload=None, method: str = "post") -> dict:
    import httpx

    url = server.rstrip("/") + endpoint
    body = None if payload is None else payload.model_dump(by_alias=True, mode="json")
    try:
        if method == "get":
            resp = httpx.get(url, timeout=None)
        else:
            resp = httpx.post(url, json=body, timeout=None)
    except httpx.HTTPError as e:
        raise IoError(f"cannot reach service at {server}: {e}") from None
    if resp.status_code >= 400:
        try:
            detail = resp.json().get("detail", {})
        except ValueError:
            detail = {}
        msg = detail.get("error", f"service returned HTTP {resp.status_code}")
        code = detail.get("exit_code", 1)
        raise (ValidationError if code == 1 else IoError)(msg)
    return resp.json()


def _print_json(result: dict) -> None:
    print(json.dumps(result, indent=2, sort_keys=True))


# ---------------------------------------------------------------- commands


def cmd_inspect(args) -> int:
    req = schemas.InspectRequest(path=args.path)
    result = _remote(args.server, "/inspect", req) if args.server else handlers.do_inspect(req)
    if result["kind"] == "matrix":
        print(f"rows: {result['rows']}")
        print(f"cols: {result['cols']}")
        print(f"dtype: {result['dtype']}")
    else:
        print(result["summary"])
    return 0


def cmd_fit(args) -> int:
    req = schemas.FitRequest(
        x_path=args.x,
        y_path=args.y,
        out_prefix=args.out,
        lambda_=args.lambda_,
        tune=args.tune,
        lambda_grid=args.grid if args.grid is not None else list(schemas.DEFAULT_LAMBDA_GRID),
        normalization=args.normalization,
    )
    result = _remote(args.server, "/fit", req) if args.server else handlers.do_fit(req)
    _print_json(result)
    return 0


def cmd_predict(args) -> int:
    req = schemas.PredictRequest(model_prefix=args.model, x_path=args.x, out_path=args.out)
    result = _remote(args.server, "/predict", req) if args.server else handlers.do_predict(req)
    _print_json(result)
    return 0


def cmd_eval(args) -> int:
    req = schemas.EvalRequest(
        y_true_path=args.y_true, y_pred_path=args.y_pred, permissive=args.permissive
    )
    result = _remote(args.server, "/eval", req) if args.server else handlers.do_eval(req)
    _print_json(result)
    return 0


def cmd_experiment(args) -> int:
    fields = {}
    if args.config:
        try:
            fields.update(json.loads(open(args.config).read()))
        except json.JSONDecodeError as e:
            raise ValidationError(f"{args.config}: not valid JSON: {e}") from None
    overrides = {
        "manifest": args.manifest,
        "k": args.k,
        "seed": args.seed,
        "lambda": args.lambda_,
        "tune": args.tune,
        "lambda_grid": args.grid,
        "normalization": args.normalization,
        "model": args.model,
        "layer": getattr(args, "layer", None),
        "subjects": args.subjects,
        "rois": args.rois,
        "cells": getattr(args, "cells", None),
        "group_by_concept": args.group_by_concept,
        "threads": args.threads,
        "block_size": args.block_size,
        "out_dir": args.out,
    }
    fields.update({k: v for k, v in overrides.items() if v is not None})
    fields["kind"] = args.kind
    try:
        config = ExperimentConfig(**fields)
    except PydanticValidationError as e:
        raise ValidationError(str(e)) from None
    req = schemas.ExperimentRequest(**config.model_dump(by_alias=True, exclude={"kind"}))
    if args.server:
        result = _remote(args.server, f"/experiments/{args.kind}", req)
    else:
        result = handlers.do_experiment(args.kind, req)
    summary = {
        "kind": result["kind"],
        "rows": len(result["rows"]),
        "across_subjects": result["aggregates"]["across_subjects"],
        "extras": result["extras"],
    }
    if "report_path" in result:
        summary["report_path"] = result["report_path"]
    _print_json(summary)
    return 0


def cmd_ttest(args) -> int:
    pairs = []
    for raw in args.pair:
        pairs.append(raw)
    req = schemas.TTestRequest(
        reports=args.reports,
        pairs=pairs,
        metric=args.metric,
        paired=not args.unpaired,
        group=args.group,
        layer=args.layer,
        out_dir=args.out,
    )
    result = _remote(args.server, "/ttest", req) if args.server else handlers.do_ttest(req)
    sys.stdout.write(result["text"])
    return 0


def cmd_synth(args) -> int:
    req = schemas.SynthRequest(
        n=args.n,
        d=args.d,
        v=args.v,
        noise_sigma=args.sigma,
        seed=args.seed,
        out_dir=args.out,
        subject=args.subject,
        feature_model=args.feature_model,
        n_rois=args.rois,
        n_layers=args.layers,
        true_layer=args.true_layer,
        sub_datasets=args.sub_datasets,
        group_size=args.group_size,
        n_subjects=args.subjects,
    )
    result = _remote(args.server, "/synth", req) if args.server else handlers.do_synth(req)
    _print_json(result)
    return 0


# ---------------------------------------------------------------- parser


def _add_experiment_flags(p: argparse.ArgumentParser, kind: str) -> None:
    p.add_argument("--manifest", help="dataset manifest JSON")
    p.add_argument("--config", help="JSON file with config fields; flags override it")
    p.add_argument("--k", type=int, help="number of folds (default 10)")
    p.add_argument("--seed", type=int, help="base seed for fold assignment (default 42)")
    p.add_argument("--lambda", dest="lambda_", type=float, help="ridge penalty (default 1.0)")
    p.add_argument("--tune", action="store_true", default=None,
                   help="pick lambda on a held-out slice of the training rows")
    p.add_argument("--grid", type=_comma_floats, default=None,
                   help="lambda grid for --tune, e.g. 0.01,0.1,1,10,100")
    p.add_argument("--normalization", choices=["zscore", "none"],
                   help="feature/response normalization (default zscore)")
    p.add_argument("--model", help="feature model name when the manifest lists several")
    if kind != "sweep":
        p.add_argument("--layer", help="feature layer name when the model has several")
    if kind == "cross":
        p.add_argument("--cells", type=_comma_list,
                       help="subset of transfer cells, e.g. CC,CI or coco->scenes")
    p.add_argument("--subjects", type=_comma_list, help="subset of subjects")
    p.add_argument("--rois", type=_comma_list, help="subset of ROIs")
    p.add_argument("--no-group-by-concept", dest="group_by_concept", action="store_const",
                   const=False, default=None,
                   help="ignore stimulus group labels when forming folds")
    p.add_argument("--threads", type=int,
                   help="worker pool size (default: VOXELENC_THREADS, then logical cores)")
    p.add_argument("--block-size", dest="block_size", type=int,
                   help="voxel columns solved per block (default 1024)")
    p.add_argument("--out", help="output directory for report.json and CSVs")
    p.set_defaults(func=cmd_experiment, kind=kind)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="voxelenc",
        description="Fit and evaluate voxel-wise linear encoding models.",
        # exact flag names only, so subcommand flags like synth --v are not
        # swallowed by prefix matching against --version/--verbose
        allow_abbrev=False,
    )
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("--server", default=os.environ.get("VOXELENC_SERVER"),
                    help="base URL of a running service; requests are sent there "
                         "instead of executing in-process")
    ap.add_argument("-v", "--verbose", action="count", default=0,
                    help="-v for info logging, -vv for debug")
    sub = ap.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("fit", help="fit one ridge model from feature and response matrices")
    p.add_argument("--x", required=True, help="feature matrix (VEMF or CSV)")
    p.add_argument("--y", required=True, help="response matrix (VEMF or CSV)")
    p.add_argument("--out", required=True, help="output prefix for .weights.vemf and .model.json")
    p.add_argument("--lambda", dest="lambda_", type=float, default=1.0, help="ridge penalty")
    p.add_argument("--tune", action="store_true", help="pick lambda from --grid on held-out rows")
    p.add_argument("--grid", type=_comma_floats, default=None, help="lambda grid for --tune")
    p.add_argument("--normalization", choices=["zscore", "none"], default="zscore")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="apply a fitted model to new feature rows")
    p.add_argument("--model", required=True, help="model prefix from fit")
    p.add_argument("--x", required=True, help="feature matrix")
    p.add_argument("--out", required=True, help="output path for the predicted matrix")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="score a predicted matrix against the true one")
    p.add_argument("--y-true", dest="y_true", required=True)
    p.add_argument("--y-pred", dest="y_pred", required=True)
    p.add_argument("--permissive", action="store_true",
                   help="treat all-zero rows as maximally distant instead of failing")
    p.set_defaults(func=cmd_eval)

    for kind, blurb in (
        ("cv", "k-fold cross-validated encoding per subject and ROI"),
        ("cross", "train/test transfer matrix over sub-datasets"),
        ("concept", "concrete/abstract directional transfer"),
        ("sweep", "cv per feature layer with best-layer summary"),
    ):
        _add_experiment_flags(sub.add_parser(kind, help=blurb), kind)

    p = sub.add_parser("ttest", help="paired significance table from saved reports")
    p.add_argument("--reports", type=_comma_list, required=True,
                   help="comma-separated report dirs or report.json paths; name=path to rename")
    p.add_argument("--pair", action="append", required=True,
                   help="modelA:modelB, repeatable")
    p.add_argument("--metric", default="pearson", choices=list(handlers.TTEST_METRICS))
    p.add_argument("--unpaired", action="store_true", help="Welch test instead of paired")
    p.add_argument("--group", help="restrict to one report group (cell, direction)")
    p.add_argument("--layer", help="restrict to one layer")
    p.add_argument("--out", help="directory for significance.csv / significance.txt")
    p.set_defaults(func=cmd_ttest)

    p = sub.add_parser("synth", help="write a synthetic dataset with known ground truth")
    p.add_argument("--n", type=int, required=True, help="stimulus count")
    p.add_argument("--d", type=int, required=True, help="feature dimension")
    p.add_argument("--v", type=int, required=True, help="voxel count")
    p.add_argument("--sigma", type=float, default=0.0, help="response noise sd")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--subject", default="synth", help="subject name in the manifest")
    p.add_argument("--feature-model", dest="feature_model", default="feat",
                   help="feature model name in the manifest")
    p.add_argument("--rois", type=int, default=1, help="split voxels into this many ROIs")
    p.add_argument("--layers", type=int, default=1, help="number of feature layers")
    p.add_argument("--true-layer", dest="true_layer", type=int, default=1,
                   help="which layer holds the generating features; others are noise")
    p.add_argument("--sub-datasets", dest="sub_datasets", type=_comma_list, default=None,
                   help="contiguous stimulus blocks as name:count,name:count")
    p.add_argument("--group-size", dest="group_size", type=int, default=0,
                   help="tag stimuli into consecutive groups of this size")
    p.add_argument("--subjects", type=int, default=1, help="number of subjects to generate")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("inspect", help="print matrix header or manifest summary")
    p.add_argument("path", help="VEMF/CSV matrix or manifest JSON")
    p.set_defaults(func=cmd_inspect)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING
    if args.verbose == 1:
        level = logging.INFO
    elif args.verbose >= 2:
        level = logging.DEBUG
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except VoxelencError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except PydanticValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
