"""Synthetic ground-truth data and brute-force reference implementations.

generate() draws everything from one portable stream in a fixed order
(X, then W_true, then noise), so a (n, d, v, sigma, seed) tuple pins
the output bytes across platforms and across reimplementations of the
generator. The naive_* functions are deliberately slow, literal
transcriptions used as oracles against the vectorized code paths.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .matio import write_matrix
from .rng import PortableRng, derive_seed

NAIVE_2V2_MAX_N = 4096
NAIVE_RIDGE_MAX_D = 64


@dataclass(frozen=True)
class SynthSpec:
    n: int
    d: int
    v: int
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("n", "d", "v"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.noise_sigma < 0.0:
            raise ValidationError(f"noise_sigma must be nonnegative, got {self.noise_sigma}")


def generate(spec: SynthSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (X, Y, W_true) with Y = X @ W_true + sigma * noise.

    X is iid standard normal, W_true is iid standard normal scaled by
    1/sqrt(d) so response variance stays O(1). The noise draw is skipped
    entirely when sigma is 0; X and W_true are drawn first so they are
    identical across sigma values for a fixed seed.
    """
    rng = PortableRng(spec.seed)
    x = rng.gaussians(spec.n * spec.d).reshape(spec.n, spec.d)
    w = rng.gaussians(spec.d * spec.v).reshape(spec.d, spec.v) / math.sqrt(spec.d)
    y = x @ w
    if spec.noise_sigma > 0.0:
        y = y + spec.noise_sigma * rng.gaussians(spec.n * spec.v).reshape(spec.n, spec.v)
    return x, y, w


def naive_two_v_two(y: np.ndarray, yhat: np.ndarray) -> float:
    """Triple-loop 2v2 accuracy over all sample pairs; oracle only.

    Guarded to N <= 4096 because it does C(N, 2) explicit pair checks.
    """
    y = np.asarray(y, dtype=np.float64)
    yhat = np.asarray(yhat, dtype=np.float64)
    if y.shape != yhat.shape or y.ndim != 2:
        raise ValidationError(f"shape mismatch: {y.shape} vs {yhat.shape}")
    n = y.shape[0]
    if n < 2:
        raise ValidationError(f"2v2 needs at least 2 samples, got {n}")
    if n > NAIVE_2V2_MAX_N:
        raise ValidationError(f"naive 2v2 is guarded to N <= {NAIVE_2V2_MAX_N}, got {n}")

    def cosd(a, b):
        na = np.linalg.norm(a)
        nb = np.linalg.norm(b)
        if na == 0.0 or nb == 0.0:
            raise ValidationError("cosine distance undefined for all-zero rows")
        return 1.0 - np.dot(a / na, b / nb)

    correct = 0
    for i in range(n):
        for j in range(i + 1, n):
            lhs = cosd(y[i], yhat[i]) + cosd(y[j], yhat[j])
            rhs = cosd(y[i], yhat[j]) + cosd(y[j], yhat[i])
            if lhs < rhs:
                correct += 1
    return correct / (n * (n - 1) // 2)


def naive_ridge(x: np.ndarray, y: np.ndarray, lambda_: float) -> np.ndarray:
    """Explicit-inverse normal equations, no normalization; oracle only."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ValidationError(f"incompatible shapes {x.shape} and {y.shape}")
    d = x.shape[1]
    if d > NAIVE_RIDGE_MAX_D:
        raise ValidationError(f"naive ridge is guarded to D <= {NAIVE_RIDGE_MAX_D}, got {d}")
    g = x.T @ x + lambda_ * np.eye(d)
    try:
        inv = np.linalg.inv(g)
    except np.linalg.LinAlgError:
        raise ValidationError(f"Gram matrix singular at lambda={lambda_}") from None
    return inv @ (x.T @ y)


def write_fixture(
    spec: SynthSpec,
    out_dir,
    subject: str = "synth",
    model: str = "feat",
    n_rois: int = 1,
    n_layers: int = 1,
    true_layer: int = 1,
    sub_datasets=None,
    group_size: int = 0,
    n_subjects: int = 1,
) -> Path:
    """Write a synthetic dataset as VEMF files plus a manifest; returns its path.

    Layer `true_layer` holds the X that actually generated Y; any other
    layers are fresh noise of the same shape, drawn from seeds derived
    per layer index. Voxels are split into n_rois near-equal contiguous
    ROIs. Optional sub_datasets is a list of (name, count) contiguous
    stimulus blocks; optional group_size tags stimuli into consecutive
    groups of that size via a groups file. With n_subjects > 1, extra
    subjects get seeds derived from the base seed and numbered names.
    """
    if not 1 <= true_layer <= n_layers:
        raise ValidationError(f"true_layer {true_layer} outside 1..{n_layers}")
    if not 1 <= n_rois <= spec.v:
        raise ValidationError(f"n_rois must be in 1..{spec.v}, got {n_rois}")
    if n_subjects < 1:
        raise ValidationError(f"n_subjects must be >= 1, got {n_subjects}")
    if sub_datasets:
        total = sum(c for _, c in sub_datasets)
        if total != spec.n:
            raise ValidationError(f"sub-dataset counts sum to {total}, expected {spec.n}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    base, extra = divmod(spec.v, n_rois)
    rois = []
    start = 0
    for i in range(n_rois):
        count = base + (1 if i < extra else 0)
        rois.append({"name": f"roi{i + 1}", "start": start, "count": count})
        start += count

    entries = []
    for si in range(n_subjects):
        if n_subjects == 1:
            name, prefix, sspec = subject, "", spec
        else:
            name = f"{subject}{si + 1:02d}"
            prefix = f"{name}_"
            seed = spec.seed if si == 0 else derive_seed(spec.seed, "subject", str(si))
            sspec = SynthSpec(spec.n, spec.d, spec.v, spec.noise_sigma, seed)

        x, y, w = generate(sspec)
        write_matrix(y, out_dir / f"{prefix}response.vemf")
        write_matrix(w, out_dir / f"{prefix}w_true.vemf")

        features = []
        for j in range(1, n_layers + 1):
            if j == true_layer:
                mat = x
            else:
                noise_rng = PortableRng(derive_seed(sspec.seed, "layer", str(j)))
                mat = noise_rng.gaussians(sspec.n * sspec.d).reshape(sspec.n, sspec.d)
            fname = f"{prefix}{model}_L{j}.vemf"
            write_matrix(mat, out_dir / fname)
            features.append({"model": model, "layer": f"L{j}", "path": fname})

        entry = {
            "name": name,
            "n_stimuli": sspec.n,
            "response_path": f"{prefix}response.vemf",
            "rois": rois,
            "features": features,
        }

        if sub_datasets:
            blocks = []
            start = 0
            for sd_name, count in sub_datasets:
                blocks.append({"name": sd_name, "start": start, "count": count})
                start += count
            entry["sub_datasets"] = blocks

        if group_size > 0:
            groups = [f"g{i // group_size}" for i in range(sspec.n)]
            (out_dir / "groups.json").write_text(json.dumps(groups))
            entry["groups_path"] = "groups.json"

        entries.append(entry)

    manifest = {
        "subjects": entries,
        "generator": {
            "n": spec.n,
            "d": spec.d,
            "v": spec.v,
            "noise_sigma": spec.noise_sigma,
            "seed": spec.seed,
            "true_layer": f"L{true_layer}",
        },
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path
