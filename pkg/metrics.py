"""
Human-machine agreement per category and class-imbalance reports.

The human label is always the reference standard, so "positive" means the human scored the category as present.
Metrics with a zero denominator are reported as 0.0 and flagged instead of being NaN.
"""

import math
from enum import Enum
from typing import Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field
from scipy.stats import norm
from sklearn.metrics import confusion_matrix

import settings
from errors import (
    DegenerateStatistic,
    EmptyTable,
    InvalidParameter,
    LengthMismatch,
    NonBinaryValue,
    SchemaMismatch,
)

REPORT_COLUMNS = ["category", "accuracy", "ci_low", "ci_high", "precision", "recall", "f1", "flags"]
MACRO_LABEL = "macro"


class CIMethod(str, Enum):
    WALD = "wald"
    BOOTSTRAP = "bootstrap"


class Statistic(str, Enum):
    ACCURACY = "accuracy"
    PRECISION = "precision"
    RECALL = "recall"
    F1 = "f1"


class Flag(str, Enum):
    UNDEFINED_PRECISION = "UndefinedPrecision"
    UNDEFINED_RECALL = "UndefinedRecall"
    UNDEFINED_F1 = "UndefinedF1"
    MACRO_AVERAGE = "MacroAverage"


class ConfusionCounts(BaseModel):
    model_config = ConfigDict(frozen=True)

    tp: int = Field(ge=0)
    fp: int = Field(ge=0)
    fn: int = Field(ge=0)
    tn: int = Field(ge=0)

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def scaled(self, factor: int) -> "ConfusionCounts":
        return ConfusionCounts(
            tp=self.tp * factor, fp=self.fp * factor, fn=self.fn * factor, tn=self.tn * factor
        )

    def sequences(self) -> tuple:
        """Paired (human, machine) label arrays that produce these counts"""
        human = np.array([1] * self.tp + [0] * self.fp + [1] * self.fn + [0] * self.tn, dtype=np.int8)
        machine = np.array([1] * self.tp + [1] * self.fp + [0] * self.fn + [0] * self.tn, dtype=np.int8)
        return human, machine


class CategoryMetrics(BaseModel):
    """
    One row of the agreement table. category_id is None for the macro-average row,
    which has no confidence interval.
    """

    model_config = ConfigDict(frozen=True)

    category_id: Optional[int]
    accuracy: float
    ci_low: Optional[float]
    ci_high: Optional[float]
    precision: float
    recall: float
    f1: float
    flags: tuple[str, ...] = ()

    @property
    def label(self) -> str:
        return MACRO_LABEL if self.category_id is None else str(self.category_id)


class AgreementReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    stage: str
    rows: tuple[CategoryMetrics, ...]


class ImbalanceRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    category_id: int
    positives: int = Field(ge=0)
    n: int = Field(ge=1)

    @property
    def percent_positive(self) -> float:
        return 100 * self.positives / self.n

    @property
    def formatted(self) -> str:
        return f"{self.percent_positive:.2f}"


class ImbalanceReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    rows: tuple[ImbalanceRow, ...]

    def row(self, category_id: int) -> ImbalanceRow:
        for row in self.rows:
            if row.category_id == category_id:
                return row
        raise KeyError(category_id)


def as_binary_array(values, name: str) -> np.ndarray:
    array = np.asarray(list(values))
    if array.size and not np.isin(array, (0, 1)).all():
        bad = [v for v in array.tolist() if v not in (0, 1)][0]
        raise NonBinaryValue(f"{name} labels must be 0 or 1, found {bad!r}")

    return array.astype(np.int8)


def confusion(human, machine) -> ConfusionCounts:
    h = as_binary_array(human, "human")
    m = as_binary_array(machine, "machine")
    if len(h) != len(m):
        raise LengthMismatch(f"{len(h)} human labels against {len(m)} machine labels")
    if len(h) == 0:
        raise InvalidParameter("at least one label pair is needed")

    tn, fp, fn, tp = confusion_matrix(h, m, labels=[0, 1]).ravel()
    return ConfusionCounts(tp=int(tp), fp=int(fp), fn=int(fn), tn=int(tn))


def z_value(confidence: float) -> float:
    if not 0 < confidence < 1:
        raise InvalidParameter(f"confidence must be in (0, 1), got {confidence}")
    return float(norm.ppf(1 - (1 - confidence) / 2))


def wald_interval(accuracy: float, n: int, confidence: float = settings.CONFIDENCE) -> tuple:
    # Not clipped to [0, 1]
    half_width = z_value(confidence) * math.sqrt(accuracy * (1 - accuracy) / n)
    return accuracy - half_width, accuracy + half_width


def statistic_values(h: np.ndarray, m: np.ndarray, statistic: Statistic) -> np.ndarray:
    """
    Statistic over the last axis, NaN where undefined.
    Works on a single pair of label vectors or on a (resamples, n) stack.
    """
    tp = np.sum((h == 1) & (m == 1), axis=-1)
    fp = np.sum((h == 0) & (m == 1), axis=-1)
    fn = np.sum((h == 1) & (m == 0), axis=-1)
    tn = np.sum((h == 0) & (m == 0), axis=-1)

    with np.errstate(divide="ignore", invalid="ignore"):
        if statistic == Statistic.ACCURACY:
            return (tp + tn) / (tp + fp + fn + tn)

        precision = np.where(tp + fp > 0, tp / (tp + fp), np.nan)
        recall = np.where(tp + fn > 0, tp / (tp + fn), np.nan)
        if statistic == Statistic.PRECISION:
            return precision
        if statistic == Statistic.RECALL:
            return recall

        total = precision + recall
        return np.where(total > 0, 2 * precision * recall / total, np.nan)


def bootstrap_ci(
    human,
    machine,
    statistic: Statistic = Statistic.ACCURACY,
    resamples: int = settings.BOOTSTRAP_RESAMPLES,
    confidence: float = settings.CONFIDENCE,
    seed: int = settings.DEFAULT_SEED,
) -> tuple:
    """Percentile bootstrap over paired resampling with replacement"""
    h = as_binary_array(human, "human")
    m = as_binary_array(machine, "machine")
    if len(h) != len(m):
        raise LengthMismatch(f"{len(h)} human labels against {len(m)} machine labels")
    if len(h) < 2:
        raise InvalidParameter(f"bootstrap needs at least 2 label pairs, got {len(h)}")
    if resamples < 1:
        raise InvalidParameter(f"resamples must be at least 1, got {resamples}")
    z_value(confidence)

    rng = np.random.default_rng(seed)
    idx = rng.integers(0, len(h), size=(resamples, len(h)))
    values = statistic_values(h[idx], m[idx], Statistic(statistic))

    undefined = np.isnan(values).mean()
    if undefined > 0.5:
        raise DegenerateStatistic(
            f"{Statistic(statistic).value} is undefined in {undefined:.0%} of bootstrap resamples"
        )

    tail = (1 - confidence) / 2 * 100
    low, high = np.nanpercentile(values, [tail, 100 - tail])
    return float(low), float(high)


def summarize(
    c: ConfusionCounts,
    ci_method: CIMethod = CIMethod.WALD,
    confidence: float = settings.CONFIDENCE,
    seed: int = settings.DEFAULT_SEED,
    resamples: int = settings.BOOTSTRAP_RESAMPLES,
    category_id: Optional[int] = None,
) -> CategoryMetrics:
    if c.n < 1:
        raise InvalidParameter("confusion counts are all zero")

    flags = []
    accuracy = (c.tp + c.tn) / c.n

    if c.tp + c.fp > 0:
        precision = c.tp / (c.tp + c.fp)
    else:
        precision = 0.0
        flags.append(Flag.UNDEFINED_PRECISION.value)

    if c.tp + c.fn > 0:
        recall = c.tp / (c.tp + c.fn)
    else:
        recall = 0.0
        flags.append(Flag.UNDEFINED_RECALL.value)

    if flags or precision + recall == 0:
        f1 = 0.0
        flags.append(Flag.UNDEFINED_F1.value)
    else:
        f1 = 2 * precision * recall / (precision + recall)

    if CIMethod(ci_method) == CIMethod.WALD:
        ci_low, ci_high = wald_interval(accuracy, c.n, confidence)
    else:
        human, machine = c.sequences()
        ci_low, ci_high = bootstrap_ci(
            human, machine, Statistic.ACCURACY, resamples, confidence, seed
        )

    return CategoryMetrics(
        category_id=category_id,
        accuracy=accuracy,
        ci_low=ci_low,
        ci_high=ci_high,
        precision=precision,
        recall=recall,
        f1=f1,
        flags=tuple(flags),
    )


def macro_average(rows) -> CategoryMetrics:
    """Unweighted mean over category rows. Not part of the per-category tables, shown as a summary line"""
    rows = [row for row in rows if row.category_id is not None]
    if not rows:
        raise EmptyTable("no category rows to average")

    return CategoryMetrics(
        category_id=None,
        accuracy=float(np.mean([row.accuracy for row in rows])),
        ci_low=None,
        ci_high=None,
        precision=float(np.mean([row.precision for row in rows])),
        recall=float(np.mean([row.recall for row in rows])),
        f1=float(np.mean([row.f1 for row in rows])),
        flags=(Flag.MACRO_AVERAGE.value,),
    )


def agreement_report(
    human: pd.DataFrame,
    machine: pd.DataFrame,
    ci_method: CIMethod = CIMethod.WALD,
    confidence: float = settings.CONFIDENCE,
    seed: int = settings.DEFAULT_SEED,
    resamples: int = settings.BOOTSTRAP_RESAMPLES,
    stage: str = "testing",
    include_macro: bool = False,
) -> AgreementReport:
    """
    Label frames are indexed by response id with one integer-named column per category.
    Rows come out ordered by category id.
    """
    human_ids, machine_ids = set(human.index), set(machine.index)
    if human_ids != machine_ids:
        only_human = sorted(human_ids - machine_ids)[:5]
        only_machine = sorted(machine_ids - human_ids)[:5]
        raise SchemaMismatch(
            f"response ids differ, human only: {only_human}, machine only: {only_machine}"
        )

    if set(human.columns) != set(machine.columns):
        raise SchemaMismatch(
            f"categories differ, human: {sorted(human.columns)}, machine: {sorted(machine.columns)}"
        )

    if human.empty:
        raise EmptyTable("label tables have no rows")

    machine = machine.loc[human.index]
    rows = []
    for category_id in sorted(human.columns):
        counts = confusion(human[category_id], machine[category_id])
        rows.append(
            summarize(counts, ci_method, confidence, seed, resamples, category_id=int(category_id))
        )

    if include_macro:
        rows.append(macro_average(rows))

    return AgreementReport(stage=stage, rows=tuple(rows))


def imbalance_report(labels: pd.DataFrame) -> ImbalanceReport:
    if labels.empty or len(labels.columns) == 0:
        raise EmptyTable("label table has no rows")

    rows = []
    for category_id in sorted(labels.columns):
        values = labels[category_id].dropna()
        if values.empty:
            raise EmptyTable(f"category {category_id} has no labels")
        rows.append(
            ImbalanceRow(category_id=int(category_id), positives=int(values.sum()), n=len(values))
        )

    return ImbalanceReport(rows=tuple(rows))


def imbalance_frame(report: ImbalanceReport) -> pd.DataFrame:
    return pd.DataFrame(
        [
            {"category": row.category_id, "percent_positive": row.formatted, "n": row.n}
            for row in report.rows
        ],
        columns=["category", "percent_positive", "n"],
    )


def report_frame(report: AgreementReport) -> pd.DataFrame:
    return pd.DataFrame(
        [
            {
                "category": row.label,
                "accuracy": row.accuracy,
                "ci_low": row.ci_low,
                "ci_high": row.ci_high,
                "precision": row.precision,
                "recall": row.recall,
                "f1": row.f1,
                "flags": ";".join(row.flags),
            }
            for row in report.rows
        ],
        columns=REPORT_COLUMNS,
    )


def write_agreement_csv(report: AgreementReport, path: str) -> None:
    # Default float formatting is repr, which reads back exactly with float_precision="round_trip"
    report_frame(report).to_csv(path, index=False, lineterminator="\n")


def read_agreement_csv(path: str, stage: str = "testing") -> AgreementReport:
    df = pd.read_csv(
        path,
        dtype={"category": str, "flags": str},
        keep_default_na=False,
        na_values={"ci_low": [""], "ci_high": [""]},
        float_precision="round_trip",
    )
    if list(df.columns) != REPORT_COLUMNS:
        raise SchemaMismatch(f"expected columns {REPORT_COLUMNS}, got {list(df.columns)}", source=path)

    rows = []
    for record in df.to_dict("records"):
        category = record["category"]
        rows.append(
            CategoryMetrics(
                category_id=None if category == MACRO_LABEL else int(category),
                accuracy=record["accuracy"],
                ci_low=None if pd.isna(record["ci_low"]) else record["ci_low"],
                ci_high=None if pd.isna(record["ci_high"]) else record["ci_high"],
                precision=record["precision"],
                recall=record["recall"],
                f1=record["f1"],
                flags=tuple(record["flags"].split(";")) if record["flags"] else (),
            )
        )

    return AgreementReport(stage=stage, rows=tuple(rows))


def render_table(report: AgreementReport) -> str:
    """Aligned plain-text version of the agreement table, two decimals like the published tables"""
    df = report_frame(report)
    body = df.to_string(index=False, float_format=lambda x: f"{x:.2f}", na_rep="")
    return f"Human-machine agreement ({report.stage})\n{body}\n"


def render_imbalance(report: ImbalanceReport) -> str:
    body = imbalance_frame(report).to_string(index=False)
    return f"Percent of positive cases (%)\n{body}\n"
