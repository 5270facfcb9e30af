"""Multi-target ridge regression with one shared Gram factorization.

The closed form W = (Xc' Xc + lam I)^-1 Xc' Yc is solved through a
single symmetric positive-definite factorization of the D x D Gram
matrix, reused across every response column. Voxel columns are solved
in fixed-size blocks so memory stays bounded and results are bitwise
reproducible for a given block size.

Inputs are standardized by default: per-column z-score of X and mean
centering of Y, both using training statistics only; centering absorbs
the intercept so no bias column is added. Constant feature columns get
scale 1 and contribute exactly zero weight.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg

from .errors import ValidationError
from .matio import read_matrix, write_matrix
from .metrics import pearson_mean
from .rng import PortableRng

log = logging.getLogger(__name__)

NORMALIZATION_MODES = ("zscore", "none")
DEFAULT_LAMBDA = 1.0
DEFAULT_LAMBDA_GRID = (0.01, 0.1, 1.0, 10.0, 100.0)
DEFAULT_BLOCK_SIZE = 1024


@dataclass
class EncoderModel:
    """Fitted weights plus the normalization frozen at fit time."""

    weights: np.ndarray  # D x V
    lambda_: float
    feature_means: np.ndarray  # length D
    feature_scales: np.ndarray  # length D, strictly positive
    response_means: np.ndarray  # length V
    normalization_mode: str

    @property
    def n_features(self) -> int:
        return self.weights.shape[0]

    @property
    def n_targets(self) -> int:
        return self.weights.shape[1]


class GramSolver:
    """Factorization of (G + lam I) with G = Xc' Xc, reused across targets.

    Cholesky by default; if the shifted Gram is numerically not SPD the
    solver falls back to an eigendecomposition and logs the condition
    number it saw.
    """

    def __init__(self, xc: np.ndarray, lambda_: float):
        d = xc.shape[1]
        gram = xc.T @ xc
        gram[np.diag_indices(d)] += lambda_
        try:
            self._cho = scipy.linalg.cho_factor(gram, lower=False, check_finite=False)
            self.method = "cholesky"
            self.condition_number = None
        except np.linalg.LinAlgError:
            evals, evecs = np.linalg.eigh(gram)
            tiny = np.finfo(np.float64).eps * max(abs(evals[-1]), 1.0) * d
            self.condition_number = float(abs(evals[-1]) / max(abs(evals[0]), tiny))
            log.warning(
                "Gram matrix not SPD at lambda=%g; eigendecomposition fallback, condition number %.3e",
                lambda_,
                self.condition_number,
            )
            inv = np.where(evals > tiny, 1.0 / np.where(evals > tiny, evals, 1.0), 0.0)
            self._eig = (evecs, inv)
            self._cho = None
            self.method = "eigh"

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        if self._cho is not None:
            return scipy.linalg.cho_solve(self._cho, rhs, check_finite=False)
        evecs, inv = self._eig
        return evecs @ (inv[:, None] * (evecs.T @ rhs))


class SharedDesign:
    """Normalized training design shared by every ROI of one fold.

    Factor once, then fit any number of response blocks against it.
    """

    def __init__(
        self,
        x_train: np.ndarray,
        lambda_: float,
        normalization_mode: str = "zscore",
        block_size: int = DEFAULT_BLOCK_SIZE,
        n_threads: int = 1,
    ):
        x_train = np.asarray(x_train, dtype=np.float64)
        if x_train.ndim != 2:
            raise ValidationError(f"X must be 2-D, got shape {x_train.shape}")
        if x_train.shape[0] < 2:
            raise ValidationError(f"need at least 2 training rows, got {x_train.shape[0]}")
        if lambda_ < 0:
            raise ValidationError(f"lambda must be nonnegative, got {lambda_}")
        if normalization_mode not in NORMALIZATION_MODES:
            raise ValidationError(f"unknown normalization mode {normalization_mode!r}")
        if block_size < 1:
            raise ValidationError(f"block_size must be positive, got {block_size}")

        self.lambda_ = float(lambda_)
        self.normalization_mode = normalization_mode
        self.block_size = int(block_size)
        self.n_threads = max(1, int(n_threads))
        self.n_train = x_train.shape[0]

        if normalization_mode == "zscore":
            self.feature_means = x_train.mean(axis=0)
            sd = x_train.std(axis=0)
            self.feature_scales = np.where(sd > 0.0, sd, 1.0)
            self._xc = (x_train - self.feature_means) / self.feature_scales
        else:
            self.feature_means = np.zeros(x_train.shape[1])
            self.feature_scales = np.ones(x_train.shape[1])
            self._xc = x_train
        self._solver = GramSolver(self._xc, self.lambda_)

    @property
    def solver_method(self) -> str:
        return self._solver.method

    def fit_block(self, y_train: np.ndarray) -> EncoderModel:
        """Fit all columns of one response block against this design."""
        y_train = np.asarray(y_train, dtype=np.float64)
        if y_train.ndim != 2 or y_train.shape[0] != self.n_train:
            raise ValidationError(
                f"Y shape {y_train.shape} does not match {self.n_train} training rows"
            )
        if self.normalization_mode == "zscore":
            response_means = y_train.mean(axis=0)
            yc = y_train - response_means
        else:
            response_means = np.zeros(y_train.shape[1])
            yc = y_train

        d, v = self._xc.shape[1], yc.shape[1]
        weights = np.empty((d, v))
        blocks = range(0, v, self.block_size)

        def solve_block(start: int):
            stop = min(start + self.block_size, v)
            weights[:, start:stop] = self._solver.solve(self._xc.T @ yc[:, start:stop])

        if self.n_threads > 1 and v > self.block_size:
            with ThreadPoolExecutor(max_workers=self.n_threads) as pool:
                list(pool.map(solve_block, blocks))
        else:
            for start in blocks:
                solve_block(start)

        if not np.isfinite(weights).all():
            raise ValidationError("fit produced non-finite weights; check inputs and lambda")
        return EncoderModel(
            weights=weights,
            lambda_=self.lambda_,
            feature_means=self.feature_means,
            feature_scales=self.feature_scales,
            response_means=response_means,
            normalization_mode=self.normalization_mode,
        )


def fit(
    x: np.ndarray,
    y: np.ndarray,
    lambda_: float = DEFAULT_LAMBDA,
    normalization_mode: str = "zscore",
    block_size: int = DEFAULT_BLOCK_SIZE,
    n_threads: int = 1,
) -> EncoderModel:
    """Fit one ridge model for all columns of y jointly."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 2:
        raise ValidationError(f"Y must be 2-D, got shape {y.shape}")
    if x.shape[0] != y.shape[0]:
        raise ValidationError(f"X has {x.shape[0]} rows but Y has {y.shape[0]}")
    design = SharedDesign(x, lambda_, normalization_mode, block_size, n_threads)
    return design.fit_block(y)


def predict(model: EncoderModel, x: np.ndarray) -> np.ndarray:
    """Apply a fitted model to new rows; returns an M x V matrix."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValidationError(f"X must be 2-D, got shape {x.shape}")
    if x.shape[1] != model.n_features:
        raise ValidationError(f"X has {x.shape[1]} columns, model expects {model.n_features}")
    if x.shape[0] == 0:
        return np.empty((0, model.n_targets))
    xc = (x - model.feature_means) / model.feature_scales
    return xc @ model.weights + model.response_means


@dataclass
class TuneResult:
    lambda_: float
    table: list[tuple[float, float]]  # (lambda, mean validation PC)
    model: EncoderModel


def tune_lambda(
    x: np.ndarray,
    y: np.ndarray,
    grid=DEFAULT_LAMBDA_GRID,
    val_fraction: float = 0.2,
    seed: int = 42,
    normalization_mode: str = "zscore",
    block_size: int = DEFAULT_BLOCK_SIZE,
) -> TuneResult:
    """Pick lambda on a held-out slice of the training rows, then refit on all.

    The winner maximizes mean validation PC; ties go to the smaller
    lambda. A singleton grid skips the search entirely.
    """
    grid = [float(g) for g in grid]
    if not grid:
        raise ValidationError("lambda grid is empty")
    if any(g < 0 for g in grid):
        raise ValidationError("lambda grid values must be nonnegative")
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape[0] != y.shape[0]:
        raise ValidationError(f"X has {x.shape[0]} rows but Y has {y.shape[0]}")

    if len(set(grid)) == 1:
        best = grid[0]
        return TuneResult(best, [(best, math.nan)], fit(x, y, best, normalization_mode, block_size))

    if not 0.0 < val_fraction < 0.5:
        raise ValidationError(f"val_fraction must be in (0, 0.5), got {val_fraction}")
    n = x.shape[0]
    n_val = math.ceil(val_fraction * n)
    if n_val < 2 or n - n_val < 2:
        raise ValidationError(f"n={n} is too small to hold out at least 2 validation rows")
    perm = PortableRng(seed).permutation(n)
    val_idx = np.sort(perm[:n_val])
    tr_idx = np.sort(perm[n_val:])

    table = []
    for lam in grid:
        model = fit(x[tr_idx], y[tr_idx], lam, normalization_mode, block_size)
        pc, _ = pearson_mean(y[val_idx], predict(model, x[val_idx]))
        table.append((lam, pc))
    best = min(table, key=lambda row: (-row[1], row[0]))[0]
    return TuneResult(best, table, fit(x, y, best, normalization_mode, block_size))


def save_model(model: EncoderModel, prefix) -> tuple[Path, Path]:
    """Write a model as <prefix>.weights.vemf plus a JSON sidecar."""
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    weights_path = prefix.parent / (prefix.name + ".weights.vemf")
    meta_path = prefix.parent / (prefix.name + ".model.json")
    write_matrix(model.weights, weights_path)
    meta = {
        "lambda": model.lambda_,
        "normalization_mode": model.normalization_mode,
        "feature_means": model.feature_means.tolist(),
        "feature_scales": model.feature_scales.tolist(),
        "response_means": model.response_means.tolist(),
    }
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True))
    return weights_path, meta_path


def load_model(prefix) -> EncoderModel:
    prefix = Path(prefix)
    weights = read_matrix(prefix.parent / (prefix.name + ".weights.vemf"))
    meta = json.loads((prefix.parent / (prefix.name + ".model.json")).read_text())
    model = EncoderModel(
        weights=weights,
        lambda_=float(meta["lambda"]),
        feature_means=np.asarray(meta["feature_means"], dtype=np.float64),
        feature_scales=np.asarray(meta["feature_scales"], dtype=np.float64),
        response_means=np.asarray(meta["response_means"], dtype=np.float64),
        normalization_mode=str(meta["normalization_mode"]),
    )
    if model.feature_means.shape[0] != model.n_features or model.response_means.shape[0] != model.n_targets:
        raise ValidationError(f"{prefix}: sidecar vector lengths do not match weight matrix shape")
    return model
