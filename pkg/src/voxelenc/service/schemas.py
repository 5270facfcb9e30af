"""Request and response models for the HTTP service.

Paths in requests are interpreted on the host running the service; the
service is a local orchestration front end, not a file upload API.
"""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field

from ..ridge import DEFAULT_LAMBDA, DEFAULT_LAMBDA_GRID


class HealthResponse(BaseModel):
    status: str
    version: str


class InspectRequest(BaseModel):
    path: str


class InspectResponse(BaseModel):
    kind: Literal["matrix", "manifest"]
    path: str
    rows: Optional[int] = None
    cols: Optional[int] = None
    dtype: Optional[str] = None
    subjects: Optional[list[str]] = None
    summary: Optional[str] = None


class FitRequest(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    x_path: str
    y_path: str
    out_prefix: str
    lambda_: float = Field(DEFAULT_LAMBDA, alias="lambda", ge=0.0)
    tune: bool = False
    lambda_grid: list[float] = Field(default_factory=lambda: list(DEFAULT_LAMBDA_GRID))
    normalization: Literal["zscore", "none"] = "zscore"


class FitResponse(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    weights_path: str
    meta_path: str
    lambda_: float = Field(alias="lambda")
    n_features: int
    n_targets: int


class PredictRequest(BaseModel):
    model_prefix: str
    x_path: str
    out_path: str


class PredictResponse(BaseModel):
    out_path: str
    rows: int
    cols: int


class EvalRequest(BaseModel):
    y_true_path: str
    y_pred_path: str
    permissive: bool = False


class EvalResponse(BaseModel):
    two_v_two: float
    pearson: float
    pearson_degenerate: int
    mae_mean: float
    n_samples: int
    n_voxels: int
    n_pairs: int


class ExperimentRequest(BaseModel):
    """ExperimentConfig without `kind`; the endpoint path carries it."""

    model_config = ConfigDict(populate_by_name=True)

    manifest: str
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
    threads: int = Field(0, ge=0)
    block_size: int = Field(1024, ge=1)
    out_dir: Optional[str] = None


class TTestRequest(BaseModel):
    reports: list[str]  # report dirs/files, or name=path to override names
    pairs: list[str]  # "modelA:modelB"
    metric: str = "pearson"
    paired: bool = True
    group: Optional[str] = None
    layer: Optional[str] = None
    out_dir: Optional[str] = None


class TTestResponse(BaseModel):
    text: str
    csv: str
    rows: list[dict]
    metadata: dict


class SynthRequest(BaseModel):
    n: int = Field(ge=1)
    d: int = Field(ge=1)
    v: int = Field(ge=1)
    noise_sigma: float = Field(0.0, ge=0.0)
    seed: int = Field(0, ge=0)
    out_dir: str
    subject: str = "synth"
    feature_model: str = "feat"
    n_rois: int = Field(1, ge=1)
    n_layers: int = Field(1, ge=1)
    true_layer: int = Field(1, ge=1)
    sub_datasets: Optional[list[str]] = None  # "name:count"
    group_size: int = Field(0, ge=0)
    n_subjects: int = Field(1, ge=1)


class SynthResponse(BaseModel):
    manifest_path: str
    files: list[str]
