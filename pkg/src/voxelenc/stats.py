"""Paired significance tests over per-subject scores.

The p-value machinery is self-contained: a regularized incomplete beta
function evaluated by continued fraction gives the two-tailed Student t
tail mass. Tables are emitted as CSV and as aligned text where cells
below 0.05 carry a trailing star.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ValidationError

_BETA_EPS = 1e-12
_BETA_MAX_ITER = 300
_FPMIN = 1e-300

STAR_THRESHOLD = 0.05


def _betacf(a: float, b: float, x: float) -> float:
    # modified Lentz evaluation of the incomplete beta continued fraction
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _FPMIN:
        d = _FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, _BETA_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETA_EPS:
            return h
    raise ValidationError(f"incomplete beta did not converge for a={a}, b={b}, x={x}")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if a <= 0.0 or b <= 0.0:
        raise ValidationError(f"betainc requires positive shape parameters, got a={a}, b={b}")
    if not 0.0 <= x <= 1.0:
        raise ValidationError(f"betainc requires x in [0, 1], got {x}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    ln_bt = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    bt = math.exp(ln_bt)
    if x < (a + 1.0) / (a + b + 2.0):
        return bt * _betacf(a, b, x) / a
    return 1.0 - bt * _betacf(b, a, 1.0 - x) / b


def student_t_two_tailed_p(t: float, df: int) -> float:
    """P(|T| >= |t|) for T Student-t with df degrees of freedom.

    Computed as I_x(df/2, 1/2) with x = df/(df + t^2), which is exactly
    1.0 at t = 0.
    """
    if df < 1:
        raise ValidationError(f"degrees of freedom must be >= 1, got {df}")
    if math.isnan(t):
        raise ValidationError("t statistic is NaN")
    if math.isinf(t):
        return 0.0
    if t == 0.0:
        return 1.0
    x = df / (df + t * t)
    return min(1.0, betainc(df / 2.0, 0.5, x))


@dataclass
class PairedScores:
    """Per-subject scalar scores for two models on one ROI, aligned by index."""

    model_a: str
    model_b: str
    roi: str
    scores_a: Sequence[float]
    scores_b: Sequence[float]

    def __post_init__(self):
        if len(self.scores_a) != len(self.scores_b):
            raise ValidationError(
                f"paired scores must align: {len(self.scores_a)} vs {len(self.scores_b)}"
            )
        if len(self.scores_a) < 2:
            raise ValidationError(f"need at least 2 paired subjects, got {len(self.scores_a)}")


@dataclass
class TTestResult:
    t: float
    df: int
    p_value: float
    mean_diff: float
    n: int
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "df": self.df,
            "p_value": self.p_value,
            "mean_diff": self.mean_diff,
            "n": self.n,
            "degenerate": self.degenerate,
        }


def _ttest_from_diffs(d: np.ndarray) -> TTestResult:
    n = d.shape[0]
    md = float(d.mean())
    sd = float(d.std(ddof=1))
    df = n - 1
    if sd == 0.0:
        # no spread at all: the tail mass is degenerate, flag it
        if md == 0.0:
            return TTestResult(t=0.0, df=df, p_value=1.0, mean_diff=md, n=n, degenerate=True)
        return TTestResult(
            t=math.copysign(math.inf, md), df=df, p_value=0.0, mean_diff=md, n=n, degenerate=True
        )
    t = md / (sd / math.sqrt(n))
    return TTestResult(t=t, df=df, p_value=student_t_two_tailed_p(t, df), mean_diff=md, n=n)


def paired_ttest(pair: PairedScores) -> TTestResult:
    """Two-tailed paired t-test on per-subject score differences."""
    a = np.asarray(pair.scores_a, dtype=np.float64)
    b = np.asarray(pair.scores_b, dtype=np.float64)
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise ValidationError(f"scores for {pair.model_a} vs {pair.model_b} contain non-finite values")
    return _ttest_from_diffs(a - b)


def unpaired_ttest(pair: PairedScores) -> TTestResult:
    """Welch two-sample variant, kept for completeness; paired is the default."""
    a = np.asarray(pair.scores_a, dtype=np.float64)
    b = np.asarray(pair.scores_b, dtype=np.float64)
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise ValidationError(f"scores for {pair.model_a} vs {pair.model_b} contain non-finite values")
    na, nb = a.shape[0], b.shape[0]
    va, vb = float(a.var(ddof=1)), float(b.var(ddof=1))
    md = float(a.mean() - b.mean())
    se2 = va / na + vb / nb
    if se2 == 0.0:
        if md == 0.0:
            return TTestResult(t=0.0, df=na + nb - 2, p_value=1.0, mean_diff=md, n=na, degenerate=True)
        return TTestResult(
            t=math.copysign(math.inf, md),
            df=na + nb - 2,
            p_value=0.0,
            mean_diff=md,
            n=na,
            degenerate=True,
        )
    t = md / math.sqrt(se2)
    # Welch-Satterthwaite df, floored at 1
    df_num = se2 * se2
    df_den = (va / na) ** 2 / (na - 1) + (vb / nb) ** 2 / (nb - 1)
    df = max(1, int(math.floor(df_num / df_den)))
    return TTestResult(t=t, df=df, p_value=student_t_two_tailed_p(t, df), mean_diff=md, n=na)


@dataclass
class SignificanceCell:
    roi: str
    result: TTestResult


@dataclass
class SignificanceRow:
    model_a: str
    model_b: str
    cells: list


@dataclass
class SignificanceTable:
    rois: list
    rows: list
    metric: str
    paired: bool

    def to_csv(self) -> str:
        lines = ["model_a,model_b,roi,t,df,p_value,mean_diff,n,significant,degenerate"]
        for row in self.rows:
            for cell in row.cells:
                r = cell.result
                lines.append(
                    f"{row.model_a},{row.model_b},{cell.roi},{r.t:.10g},{r.df},"
                    f"{r.p_value:.10g},{r.mean_diff:.10g},{r.n},"
                    f"{r.p_value < STAR_THRESHOLD},{r.degenerate}"
                )
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        header = ["pair"] + list(self.rois)
        body = []
        for row in self.rows:
            cells = [f"{row.model_a} vs {row.model_b}"]
            for cell in row.cells:
                p = cell.result.p_value
                mark = "*" if p < STAR_THRESHOLD else ""
                cells.append(f"{p:.3f}{mark}")
            body.append(cells)
        widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]
        out = []
        for r in [header] + body:
            out.append("  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip())
        return "\n".join(out) + "\n"


def significance_table(
    scores: dict,
    pairs: Sequence[tuple],
    rois: Optional[Sequence[str]] = None,
    metric: str = "pearson",
    paired: bool = True,
) -> SignificanceTable:
    """Build a model-pair by ROI table of two-tailed p-values.

    `scores` maps model name -> subject name -> ROI name -> scalar. All
    subjects of a pair must carry both models and every requested ROI.
    """
    if not pairs:
        raise ValidationError("at least one model pair is required")
    test = paired_ttest if paired else unpaired_ttest
    rows = []
    roi_list = None
    for model_a, model_b in pairs:
        for m in (model_a, model_b):
            if m not in scores:
                raise ValidationError(f"no scores for model {m!r}")
        subjects = sorted(scores[model_a])
        if sorted(scores[model_b]) != subjects:
            raise ValidationError(f"models {model_a!r} and {model_b!r} cover different subjects")
        if rois is None:
            common = sorted(set.intersection(*(set(scores[model_a][s]) for s in subjects)))
        else:
            common = list(rois)
        if not common:
            raise ValidationError("no common ROIs across subjects")
        if roi_list is None:
            roi_list = common
        elif common != roi_list:
            raise ValidationError("model pairs disagree on the ROI set; pass rois explicitly")
        cells = []
        for roi in roi_list:
            try:
                a = [scores[model_a][s][roi] for s in subjects]
                b = [scores[model_b][s][roi] for s in subjects]
            except KeyError as e:
                raise ValidationError(f"missing ROI {roi!r} for a subject: {e}") from None
            cells.append(
                SignificanceCell(roi, test(PairedScores(model_a, model_b, roi, a, b)))
            )
        rows.append(SignificanceRow(model_a, model_b, cells))
    return SignificanceTable(rois=roi_list, rows=rows, metric=metric, paired=paired)
