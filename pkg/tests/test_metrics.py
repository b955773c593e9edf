import math

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings as hypothesis_settings, strategies as st

from errors import (
    DegenerateStatistic,
    EmptyTable,
    InvalidParameter,
    LengthMismatch,
    NonBinaryValue,
    SchemaMismatch,
)
from metrics import (
    CIMethod,
    ConfusionCounts,
    Flag,
    Statistic,
    agreement_report,
    bootstrap_ci,
    confusion,
    imbalance_frame,
    imbalance_report,
    macro_average,
    read_agreement_csv,
    render_imbalance,
    render_table,
    summarize,
    wald_interval,
    write_agreement_csv,
)


def labels_frame(columns: dict, ids=None) -> pd.DataFrame:
    n = len(next(iter(columns.values())))
    index = pd.Index(ids or [f"r{i}" for i in range(n)], name="response_id")
    return pd.DataFrame(columns, index=index)


def test_confusion_examples():
    assert confusion([1, 1, 0, 0], [1, 0, 0, 0]) == ConfusionCounts(tp=1, fp=0, fn=1, tn=2)
    assert confusion([1, 0], [0, 1]) == ConfusionCounts(tp=0, fp=1, fn=1, tn=0)

    same = confusion([1, 0, 1, 1, 0], [1, 0, 1, 1, 0])
    assert same.fp == same.fn == 0


def test_confusion_errors():
    with pytest.raises(LengthMismatch):
        confusion([1, 0], [1])
    with pytest.raises(NonBinaryValue):
        confusion([1, 2], [1, 0])
    with pytest.raises(InvalidParameter):
        confusion([], [])


def test_summarize_derived_fixture():
    row = summarize(ConfusionCounts(tp=3, fp=1, fn=2, tn=4))

    assert row.precision == pytest.approx(0.75, abs=1e-12)
    assert row.recall == pytest.approx(0.60, abs=1e-12)
    assert row.f1 == pytest.approx(2 / 3, abs=1e-12)
    assert row.accuracy == pytest.approx(0.70, abs=1e-12)
    assert row.flags == ()


def test_summarize_without_positives():
    row = summarize(ConfusionCounts(tp=0, fp=0, fn=0, tn=10))

    assert row.accuracy == 1.0
    assert row.precision == 0.0
    assert Flag.UNDEFINED_PRECISION.value in row.flags
    assert Flag.UNDEFINED_RECALL.value in row.flags
    assert Flag.UNDEFINED_F1.value in row.flags


def test_summarize_rejects_empty_counts():
    with pytest.raises(InvalidParameter):
        summarize(ConfusionCounts(tp=0, fp=0, fn=0, tn=0))


def test_wald_is_not_clipped():
    low, high = wald_interval(0.97, 60)

    assert high > 1.0
    assert high == pytest.approx(0.97 + 1.959964 * math.sqrt(0.97 * 0.03 / 60), abs=1e-6)
    assert low < 0.97


def test_wald_at_95_uses_1_96():
    row = summarize(ConfusionCounts(tp=30, fp=5, fn=5, tn=60))
    half = (row.ci_high - row.ci_low) / 2
    assert half == pytest.approx(1.959964 * math.sqrt(0.9 * 0.1 / 100), rel=1e-6)


counts_strategy = st.builds(
    ConfusionCounts,
    tp=st.integers(0, 500),
    fp=st.integers(0, 500),
    fn=st.integers(0, 500),
    tn=st.integers(0, 500),
).filter(lambda c: c.n >= 1)


@hypothesis_settings(max_examples=10_000, deadline=None)
@given(counts_strategy)
def test_random_confusion_properties(c):
    row = summarize(c)

    if Flag.UNDEFINED_F1.value not in row.flags:
        assert min(row.precision, row.recall) - 1e-12 <= row.f1 <= max(row.precision, row.recall) + 1e-12

    swapped = summarize(ConfusionCounts(tp=c.tp, fp=c.fn, fn=c.fp, tn=c.tn))
    assert swapped.accuracy == pytest.approx(row.accuracy, abs=1e-12)
    assert swapped.recall == pytest.approx(row.precision, abs=1e-12)

    doubled = summarize(c.scaled(2))
    half = (row.ci_high - row.ci_low) / 2
    doubled_half = (doubled.ci_high - doubled.ci_low) / 2
    assert doubled_half == pytest.approx(half / math.sqrt(2), abs=1e-12)


def test_role_swap_on_sequences():
    rng = np.random.default_rng(3)
    h = rng.integers(0, 2, 200)
    m = rng.integers(0, 2, 200)

    forward = summarize(confusion(h, m))
    backward = summarize(confusion(m, h))
    assert forward.accuracy == backward.accuracy
    assert forward.precision == pytest.approx(backward.recall, abs=1e-12)


def test_bootstrap_perfect_agreement():
    h = [1, 0, 1, 1, 0, 0, 1, 0]
    assert bootstrap_ci(h, h, Statistic.ACCURACY, seed=5) == (1.0, 1.0)


def test_bootstrap_contains_point_estimate():
    h = np.array([1, 0] * 50)
    m = h.copy()
    m[:10] = 1 - m[:10]

    low, high = bootstrap_ci(h, m, Statistic.ACCURACY, resamples=2000, seed=11)
    assert low <= 0.9 <= high


def test_bootstrap_is_deterministic():
    rng = np.random.default_rng(0)
    h = rng.integers(0, 2, 80)
    m = rng.integers(0, 2, 80)

    for statistic in Statistic:
        assert bootstrap_ci(h, m, statistic, seed=42) == bootstrap_ci(h, m, statistic, seed=42)


def test_bootstrap_preconditions():
    with pytest.raises(InvalidParameter):
        bootstrap_ci([1, 0], [1, 0], resamples=0)
    with pytest.raises(InvalidParameter):
        bootstrap_ci([1], [1])
    with pytest.raises(LengthMismatch):
        bootstrap_ci([1, 0, 1], [1, 0])


def test_bootstrap_degenerate_precision():
    h = [0] * 20
    m = [0] * 19 + [1]
    with pytest.raises(DegenerateStatistic):
        bootstrap_ci(h, m, Statistic.RECALL, seed=1)


def test_summarize_with_bootstrap():
    row = summarize(ConfusionCounts(tp=30, fp=5, fn=5, tn=60), CIMethod.BOOTSTRAP, seed=7, resamples=500)
    again = summarize(ConfusionCounts(tp=30, fp=5, fn=5, tn=60), CIMethod.BOOTSTRAP, seed=7, resamples=500)

    assert row.ci_low <= row.accuracy <= row.ci_high
    assert row == again


def test_agreement_identical_tables():
    rng = np.random.default_rng(1)
    human = labels_frame({i: rng.integers(0, 2, 30) for i in range(1, 14)})
    report = agreement_report(human, human.copy())

    assert [row.category_id for row in report.rows] == list(range(1, 14))
    for row in report.rows:
        assert row.accuracy == 1.0
        if row.flags == ():
            assert row.f1 == 1.0


def test_agreement_single_category_matches_summarize():
    human = labels_frame({14: [1, 1, 1, 1, 1, 0, 0, 0, 0, 0]})
    machine = labels_frame({14: [1, 1, 1, 0, 0, 1, 0, 0, 0, 0]})
    row = agreement_report(human, machine).rows[0]

    expected = summarize(ConfusionCounts(tp=3, fp=1, fn=2, tn=4), category_id=14)
    assert row == expected


def test_agreement_aligns_rows_by_response_id():
    human = labels_frame({1: [1, 0, 1]}, ids=["a", "b", "c"])
    machine = labels_frame({1: [1, 0, 1]}, ids=["c", "b", "a"])
    assert agreement_report(human, machine).rows[0].accuracy == 1.0


def test_agreement_schema_mismatch():
    human = labels_frame({1: [1, 0], 2: [0, 1]})
    with pytest.raises(SchemaMismatch):
        agreement_report(human, human[[1]])
    with pytest.raises(SchemaMismatch):
        agreement_report(human, labels_frame({1: [1, 0], 2: [0, 1]}, ids=["x", "y"]))


def test_macro_row():
    rows = [
        summarize(ConfusionCounts(tp=3, fp=1, fn=2, tn=4), category_id=1),
        summarize(ConfusionCounts(tp=5, fp=0, fn=0, tn=5), category_id=2),
    ]
    macro = macro_average(rows)

    assert macro.category_id is None
    assert macro.label == "macro"
    assert macro.accuracy == pytest.approx(0.85)
    assert Flag.MACRO_AVERAGE.value in macro.flags


def test_csv_round_trip(tmp_path):
    rng = np.random.default_rng(9)
    human = labels_frame({i: rng.integers(0, 2, 37) for i in (14, 15, 16, 19)})
    machine = labels_frame({i: rng.integers(0, 2, 37) for i in (14, 15, 16, 19)})
    human[19] = 0
    machine[19] = 0
    report = agreement_report(human, machine, stage="testing", include_macro=True)

    path = str(tmp_path / "agreement.csv")
    write_agreement_csv(report, path)

    assert read_agreement_csv(path, stage="testing") == report


def test_render_table_layout():
    human = labels_frame({1: [1, 0, 1, 1], 2: [0, 0, 1, 1]})
    text = render_table(agreement_report(human, human, stage="cross-validation"))

    assert text.startswith("Human-machine agreement (cross-validation)")
    header = text.splitlines()[1].split()
    assert header == ["category", "accuracy", "ci_low", "ci_high", "precision", "recall", "f1", "flags"]


def test_imbalance_percentages():
    report = imbalance_report(labels_frame({1: [1, 1, 0, 0, 0, 0], 2: [1] * 6}))

    assert report.row(1).formatted == "33.33"
    assert report.row(2).formatted == "100.00"


def test_imbalance_reproduces_one_decimal_value():
    labels = [1] * 333 + [0] * 667
    report = imbalance_report(labels_frame({14: labels}))

    assert report.row(14).formatted == "33.30"
    assert f"{report.row(14).percent_positive:.1f}" == "33.3"
    assert "33.30" in render_imbalance(report)
    assert list(imbalance_frame(report).columns) == ["category", "percent_positive", "n"]


def test_imbalance_empty_table():
    with pytest.raises(EmptyTable):
        imbalance_report(pd.DataFrame())
