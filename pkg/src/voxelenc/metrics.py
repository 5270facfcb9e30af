"""Evaluation metrics for predicted response matrices.

All functions take y_true and y_pred as N x V matrices with matching
shape. The pairwise 2v2 accuracy is computed on cosine distances with
a strict inequality, so exact ties count as failures. The Pearson
score is a per-sample correlation across voxels averaged over all N
samples; samples where either row is constant contribute zero rather
than shrinking the denominator.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

TWO_V_TWO_BLOCK = 512


def _check_pair(y_true: np.ndarray, y_pred: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    y_true = np.asarray(y_true, dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    if y_true.ndim != 2 or y_pred.ndim != 2:
        raise ValidationError("y_true and y_pred must be 2-D matrices")
    if y_true.shape != y_pred.shape:
        raise ValidationError(f"shape mismatch: y_true {y_true.shape} vs y_pred {y_pred.shape}")
    if not (np.isfinite(y_true).all() and np.isfinite(y_pred).all()):
        raise ValidationError("metrics require finite inputs")
    return y_true, y_pred


def _unit_rows(m: np.ndarray, what: str, permissive: bool) -> np.ndarray:
    norms = np.linalg.norm(m, axis=1)
    zero = norms == 0.0
    if zero.any():
        if not permissive:
            raise ValidationError(
                f"{what} has {int(zero.sum())} all-zero rows; cosine distance is undefined"
            )
        norms = np.where(zero, 1.0, norms)
    return m / norms[:, None]


def two_v_two(
    y_true: np.ndarray,
    y_pred: np.ndarray,
    permissive: bool = False,
    return_counts: bool = False,
):
    """Fraction of sample pairs whose matched cosine distances beat the swap.

    A pair (i, j) counts as correct when
        cosd(t_i, p_i) + cosd(t_j, p_j) < cosd(t_i, p_j) + cosd(t_j, p_i)
    with strict less-than. Needs at least 2 samples. In permissive mode
    all-zero rows get distance 1 to everything instead of raising.
    """
    y_true, y_pred = _check_pair(y_true, y_pred)
    n = y_true.shape[0]
    if n < 2:
        raise ValidationError(f"2v2 needs at least 2 samples, got {n}")

    u = _unit_rows(y_true, "y_true", permissive)
    v = _unit_rows(y_pred, "y_pred", permissive)
    # dist[i, j] = cosd(t_i, p_j); the full matrix is the cost of doing
    # all pairs in one gemm instead of C(n, 2) dot products.
    dist = 1.0 - u @ v.T
    matched = dist.diagonal()

    correct = 0
    for i0 in range(0, n - 1, TWO_V_TWO_BLOCK):
        i1 = min(i0 + TWO_V_TWO_BLOCK, n - 1)
        lhs = matched[i0:i1, None] + matched[None, :]
        rhs = dist[i0:i1, :] + dist[:, i0:i1].T
        wins = lhs < rhs
        # keep only j > i within this row block
        cols = np.arange(n)[None, :]
        rows = np.arange(i0, i1)[:, None]
        correct += int(np.count_nonzero(wins & (cols > rows)))

    n_pairs = n * (n - 1) // 2
    acc = correct / n_pairs
    if return_counts:
        return acc, correct, n_pairs
    return acc


def pearson_mean(y_true: np.ndarray, y_pred: np.ndarray) -> tuple[float, int]:
    """Mean per-sample correlation across voxels, and the degenerate count.

    Each sample contributes corr(y_true[i], y_pred[i]); rows where
    either side is constant across voxels are degenerate and contribute
    0 while the denominator stays N.
    """
    y_true, y_pred = _check_pair(y_true, y_pred)
    tc = y_true - y_true.mean(axis=1, keepdims=True)
    pc = y_pred - y_pred.mean(axis=1, keepdims=True)
    num = (tc * pc).sum(axis=1)
    sst = (tc * tc).sum(axis=1)
    ssp = (pc * pc).sum(axis=1)
    ok = (sst > 0.0) & (ssp > 0.0)
    den = np.sqrt(sst * ssp)
    r = np.zeros(y_true.shape[0])
    np.divide(num, den, out=r, where=ok)
    np.clip(r, -1.0, 1.0, out=r)
    n_degenerate = int(np.count_nonzero(~ok))
    return float(r.sum() / y_true.shape[0]), n_degenerate


def pearson_voxelwise(y_true: np.ndarray, y_pred: np.ndarray) -> np.ndarray:
    """Per-voxel correlation across samples.

    Supplementary diagnostic view; the headline score is the per-sample
    mean from pearson_mean. Constant columns yield 0.
    """
    y_true, y_pred = _check_pair(y_true, y_pred)
    if y_true.shape[0] < 2:
        raise ValidationError("voxelwise correlation needs at least 2 samples")
    tc = y_true - y_true.mean(axis=0)
    pc = y_pred - y_pred.mean(axis=0)
    num = (tc * pc).sum(axis=0)
    den = np.sqrt((tc * tc).sum(axis=0) * (pc * pc).sum(axis=0))
    r = np.zeros(y_true.shape[1])
    np.divide(num, den, out=r, where=den > 0.0)
    return np.clip(r, -1.0, 1.0, out=r)


def mae(y_true: np.ndarray, y_pred: np.ndarray) -> np.ndarray:
    """Mean absolute error per voxel, averaged over samples."""
    y_true, y_pred = _check_pair(y_true, y_pred)
    return np.abs(y_true - y_pred).mean(axis=0)


@dataclass
class EvalResult:
    """Bundle of all metrics for one (true, predicted) matrix pair."""

    two_v_two: float
    pearson: float
    pearson_degenerate: int
    mae_per_voxel: np.ndarray = field(repr=False)
    mae_mean: float
    n_samples: int
    n_voxels: int
    n_pairs: int

    def to_dict(self) -> dict:
        """JSON-ready scalars; the per-voxel MAE vector is exported separately."""
        return {
            "two_v_two": self.two_v_two,
            "pearson": self.pearson,
            "pearson_degenerate": self.pearson_degenerate,
            "mae_mean": self.mae_mean,
            "n_samples": self.n_samples,
            "n_voxels": self.n_voxels,
            "n_pairs": self.n_pairs,
        }


def evaluate(y_true: np.ndarray, y_pred: np.ndarray, permissive: bool = False) -> EvalResult:
    y_true, y_pred = _check_pair(y_true, y_pred)
    acc, _, n_pairs = two_v_two(y_true, y_pred, permissive=permissive, return_counts=True)
    pc, n_deg = pearson_mean(y_true, y_pred)
    mv = mae(y_true, y_pred)
    return EvalResult(
        two_v_two=acc,
        pearson=pc,
        pearson_degenerate=n_deg,
        mae_per_voxel=mv,
        mae_mean=float(mv.mean()),
        n_samples=y_true.shape[0],
        n_voxels=y_true.shape[1],
        n_pairs=n_pairs,
    )
