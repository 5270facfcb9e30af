"""t-distribution tail probabilities and significance tables."""

import math

import pytest

from voxelenc.errors import ValidationError
from voxelenc.stats import (
    PairedScores,
    betainc,
    paired_ttest,
    significance_table,
    student_t_two_tailed_p,
    unpaired_ttest,
)


def test_pinned_p_values():
    assert student_t_two_tailed_p(5.0, 3) == pytest.approx(0.015392, abs=1e-5)
    assert student_t_two_tailed_p(2.145, 14) == pytest.approx(0.0500, abs=1e-3)


def test_zero_t_is_exactly_one():
    for df in (1, 2, 5, 30, 1000):
        assert student_t_two_tailed_p(0.0, df) == 1.0


def test_antisymmetry_is_exact():
    for t in (0.3, 1.7, 4.2):
        for df in (2, 9, 25):
            assert student_t_two_tailed_p(t, df) == student_t_two_tailed_p(-t, df)


def test_monotone_decreasing_in_t():
    df = 7
    ps = [student_t_two_tailed_p(t, df) for t in (0.0, 0.5, 1.0, 2.0, 4.0, 8.0)]
    assert all(a > b for a, b in zip(ps, ps[1:]))


def test_infinite_t():
    assert student_t_two_tailed_p(math.inf, 5) == 0.0
    assert student_t_two_tailed_p(-math.inf, 5) == 0.0


def test_df_validation():
    with pytest.raises(ValidationError):
        student_t_two_tailed_p(1.0, 0)


def test_betainc_edges_and_symmetry():
    assert betainc(2.0, 3.0, 0.0) == 0.0
    assert betainc(2.0, 3.0, 1.0) == 1.0
    # I_x(a,b) = 1 - I_{1-x}(b,a)
    for a, b, x in ((1.5, 0.5, 0.3), (4.0, 2.0, 0.7)):
        assert betainc(a, b, x) == pytest.approx(1.0 - betainc(b, a, 1.0 - x), abs=1e-14)
    # I_x(1,1) = x for the uniform case
    assert betainc(1.0, 1.0, 0.25) == pytest.approx(0.25, abs=1e-14)


def test_paired_ttest_hand_case():
    # diffs [1,1,1,2]: mean 1.25, sd 0.5, t = 1.25/(0.5/2) = 5, df = 3
    scores = PairedScores(
        model_a="a",
        model_b="b",
        roi="r",
        scores_a=[2.0, 3.0, 4.0, 6.0],
        scores_b=[1.0, 2.0, 3.0, 4.0],
    )
    res = paired_ttest(scores)
    assert res.t == pytest.approx(5.0, rel=1e-12)
    assert res.df == 3
    assert res.p_value == pytest.approx(0.015392, abs=1e-5)
    assert res.mean_diff == pytest.approx(1.25)
    assert not res.degenerate


def test_paired_ttest_degenerate_identical():
    scores = PairedScores("a", "b", "r", [1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
    res = paired_ttest(scores)
    assert res.degenerate
    assert res.t == 0.0
    assert res.p_value == 1.0


def test_paired_ttest_degenerate_constant_shift():
    scores = PairedScores("a", "b", "r", [2.0, 3.0, 4.0], [1.0, 2.0, 3.0])
    res = paired_ttest(scores)
    assert res.degenerate
    assert res.p_value == 0.0
    assert math.isinf(res.t) and res.t > 0


def test_paired_scores_validation():
    with pytest.raises(ValidationError):
        PairedScores("a", "b", "r", [1.0], [2.0])
    with pytest.raises(ValidationError):
        PairedScores("a", "b", "r", [1.0, 2.0], [2.0])


def test_unpaired_welch_matches_known_case():
    # equal-variance balanced case reduces to the classic pooled t
    a = [5.1, 4.9, 5.3, 5.0]
    b = [4.1, 4.0, 4.3, 3.9]
    res = unpaired_ttest(PairedScores("a", "b", "r", a, b))
    assert res.mean_diff == pytest.approx(1.0, abs=1e-12)
    assert res.t > 5.0
    assert res.p_value < 0.01
    assert res.df >= 1


def _scores(vals_a, vals_b):
    subs = [f"s{i}" for i in range(len(vals_a))]
    return {
        "m1": {s: {"roi": v} for s, v in zip(subs, vals_a)},
        "m2": {s: {"roi": v} for s, v in zip(subs, vals_b)},
    }


def test_significance_table_stars_and_csv():
    table = significance_table(
        _scores([2.0, 3.0, 4.0, 6.0], [1.0, 2.0, 3.0, 4.0]),
        pairs=[("m1", "m2")],
        metric="pearson",
    )
    text = table.to_text()
    assert "m1 vs m2" in text
    assert "0.015*" in text
    csv_text = table.to_csv()
    header = csv_text.splitlines()[0]
    for field in ("model_a", "model_b", "roi", "t", "df", "p_value", "significant"):
        assert field in header
    assert csv_text.splitlines()[1].startswith("m1,m2,roi,")


def test_significance_table_borderline_star_convention():
    # p just under 0.05 earns a star; identical scores give p = 1, no star
    n = 15
    # diffs with mean 1 and sd sqrt(n)/2.145 give t = 2.145 at df = 14,
    # where p ~ 0.04998
    c = math.sqrt(n) / (2.145 * math.sqrt(20.0))
    base = [float(i) for i in range(n)]
    shifted = [b + 1.0 + c * (b - 7.0) for b in base]
    table = significance_table(
        _scores(shifted, base), pairs=[("m1", "m2")], metric="pearson"
    )
    cell = table.rows[0].cells[0]
    assert cell.result.df == 14
    assert cell.result.p_value == pytest.approx(0.05, abs=2e-3)
    same = significance_table(
        _scores(base, base), pairs=[("m1", "m2")], metric="pearson"
    )
    assert same.rows[0].cells[0].result.p_value == 1.0
    assert "*" not in same.to_text().replace("model", "")


def test_significance_table_subject_alignment_enforced():
    scores = _scores([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
    del scores["m2"]["s1"]
    with pytest.raises(ValidationError, match="subject"):
        significance_table(scores, pairs=[("m1", "m2")], metric="pearson")


def test_significance_table_unknown_model():
    scores = _scores([1.0, 2.0], [1.0, 2.0])
    with pytest.raises(ValidationError):
        significance_table(scores, pairs=[("m1", "nope")], metric="pearson")
