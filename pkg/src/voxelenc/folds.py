"""Fold planning and train/test split construction.

All assignments are pure functions of (n, k, seed) via the portable
RNG, so identical plans come out on any host, in any run, regardless of
manifest ordering.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .matio import DatasetManifest
from .rng import PortableRng, derive_seed

CONCRETE = "concrete"
ABSTRACT = "abstract"


@dataclass(frozen=True)
class FoldPlan:
    """Assignment of n stimuli to k folds; sizes differ by at most 1.

    Grouped plans balance group counts instead, so that stimuli sharing
    a group label (all images of one concept) never straddle folds.
    """

    n: int
    k: int
    seed: int
    assignment: np.ndarray
    grouped: bool = False

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignment != fold)


@dataclass(frozen=True)
class SplitSpec:
    """One train/test split; indices are stimulus row numbers."""

    label: str
    train_indices: np.ndarray
    test_indices: np.ndarray
    fold: int | None = None

    def __post_init__(self):
        if len(self.train_indices) == 0 or len(self.test_indices) == 0:
            raise ValidationError(f"split {self.label!r}: train and test must both be non-empty")
        if np.intersect1d(self.train_indices, self.test_indices).size:
            raise ValidationError(f"split {self.label!r}: train and test overlap")

    def to_dict(self) -> dict:
        d = {
            "label": self.label,
            "train_indices": [int(i) for i in self.train_indices],
            "test_indices": [int(i) for i in self.test_indices],
        }
        if self.fold is not None:
            d["fold"] = self.fold
        return d


def _chunk_sizes(n: int, k: int) -> list[int]:
    base, extra = divmod(n, k)
    return [base + 1 if i < extra else base for i in range(k)]


def make_folds(n: int, k: int, seed: int) -> FoldPlan:
    """Assign n stimuli to k near-equal folds by seeded shuffle."""
    if k < 2:
        raise ValidationError(f"k must be at least 2, got {k}")
    if k > n:
        raise ValidationError(f"k={k} exceeds stimulus count n={n}")
    perm = PortableRng(seed).permutation(n)
    assignment = np.empty(n, dtype=np.int64)
    pos = 0
    for fold, size in enumerate(_chunk_sizes(n, k)):
        assignment[perm[pos : pos + size]] = fold
        pos += size
    return FoldPlan(n=n, k=k, seed=seed, assignment=assignment)


def make_grouped_folds(groups, k: int, seed: int) -> FoldPlan:
    """Fold plan where every stimulus of a group lands in the same fold.

    Groups (in order of first appearance) are shuffled and chunked into
    k near-equal sets; the stimulus-level fold sizes then depend on the
    group sizes.
    """
    groups = list(groups)
    n = len(groups)
    uniq: list = []
    seen = set()
    for g in groups:
        if g not in seen:
            seen.add(g)
            uniq.append(g)
    if k < 2:
        raise ValidationError(f"k must be at least 2, got {k}")
    if k > len(uniq):
        raise ValidationError(f"k={k} exceeds group count {len(uniq)}")
    perm = PortableRng(seed).permutation(len(uniq))
    group_fold: dict = {}
    pos = 0
    for fold, size in enumerate(_chunk_sizes(len(uniq), k)):
        for gi in perm[pos : pos + size]:
            group_fold[uniq[gi]] = fold
        pos += size
    assignment = np.asarray([group_fold[g] for g in groups], dtype=np.int64)
    return FoldPlan(n=n, k=k, seed=seed, assignment=assignment, grouped=True)


def _cell_label(sub_names: list[str], train: str, test: str) -> str:
    initials = [s[:1].upper() for s in sub_names]
    if len(set(initials)) == len(sub_names):
        return f"{train[:1].upper()}{test[:1].upper()}"
    return f"{train}→{test}"


def cross_split(
    manifest: DatasetManifest,
    subject: str,
    train_sub: str,
    test_sub: str,
    k: int = 10,
    seed: int = 42,
    groups=None,
) -> list[SplitSpec]:
    """Splits for one transfer cell.

    Distinct sub-datasets give a single train-on-A/test-on-B split; a
    same-sub-dataset cell degenerates to k-fold CV inside it (one
    SplitSpec per fold). Fold seeds derive from (seed, subject,
    sub-dataset), so other cells never reshuffle this one.
    """
    entry = manifest.subject(subject)
    tr = entry.sub_dataset(train_sub)
    te = entry.sub_dataset(test_sub)
    label = _cell_label([s.name for s in entry.sub_datasets], train_sub, test_sub)
    if train_sub == test_sub:
        fold_seed = derive_seed(seed, subject, train_sub)
        if groups is not None:
            local = make_grouped_folds([groups[i] for i in tr.indices], k, fold_seed)
        else:
            local = make_folds(len(tr.indices), k, fold_seed)
        return [
            SplitSpec(
                label=label,
                train_indices=tr.indices[local.train_indices(f)],
                test_indices=tr.indices[local.test_indices(f)],
                fold=f,
            )
            for f in range(k)
        ]
    if np.intersect1d(tr.indices, te.indices).size:
        raise ValidationError(f"sub-datasets {train_sub!r} and {test_sub!r} share stimuli; cannot form a split")
    return [SplitSpec(label=label, train_indices=tr.indices, test_indices=te.indices)]


def concept_split(manifest: DatasetManifest, subject: str, direction: str) -> SplitSpec:
    """Train on one concept class, test on the other.

    Requires the subject to carry sub-datasets named 'concrete' and
    'abstract' (case-insensitive); direction is 'concrete->abstract' or
    'abstract->concrete' (unicode arrow accepted).
    """
    entry = manifest.subject(subject)
    by_lower = {s.name.lower(): s for s in entry.sub_datasets}
    if CONCRETE not in by_lower or ABSTRACT not in by_lower:
        raise ValidationError(
            f"subject {subject}: stimuli are not tagged with concept classes "
            "(need sub-datasets named 'concrete' and 'abstract')"
        )
    norm = direction.replace("->", "→").strip().lower()
    if norm == f"{CONCRETE}→{ABSTRACT}":
        train, test = by_lower[CONCRETE], by_lower[ABSTRACT]
    elif norm == f"{ABSTRACT}→{CONCRETE}":
        train, test = by_lower[ABSTRACT], by_lower[CONCRETE]
    else:
        raise ValidationError(f"unknown direction {direction!r}")
    return SplitSpec(
        label=f"{train.name.lower()}→{test.name.lower()}",
        train_indices=train.indices,
        test_indices=test.indices,
    )
