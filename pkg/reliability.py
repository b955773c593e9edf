"""
Inter-rater reliability per rubric category: Krippendorff's alpha for nominal data and the acceptance gate.

Units rated by fewer than two raters cannot be paired and are left out of alpha (and reported). When every pairable
value is identical the expected disagreement is zero and alpha is undefined, which fails the gate.
"""

import math
from typing import Optional

import krippendorff
import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

import settings
from errors import InvalidParameter, NonBinaryValue, NoPairableUnits, ScoringError

VALUE_DOMAIN = [0, 1]


class RatingsMatrix(BaseModel):
    model_config = ConfigDict(frozen=True)

    units: tuple[str, ...]
    raters: tuple[str, ...]
    values: dict[tuple[str, str], int]

    def to_reliability_data(self) -> np.ndarray:
        """Raters as rows, units as columns, missing ratings as NaN"""
        data = np.full((len(self.raters), len(self.units)), np.nan)
        rater_index = {rater: i for i, rater in enumerate(self.raters)}
        unit_index = {unit: j for j, unit in enumerate(self.units)}
        for (unit, rater), value in self.values.items():
            data[rater_index[rater], unit_index[unit]] = value

        return data

    def ratings_per_unit(self) -> dict:
        counts = {unit: 0 for unit in self.units}
        for unit, _ in self.values:
            counts[unit] += 1
        return counts


class AlphaRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    category_id: int
    alpha: Optional[float]
    n_pairable: int = Field(ge=0)
    passed: bool
    excluded_units: int = Field(ge=0)
    error: Optional[str] = None


class AlphaReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    threshold: float
    rows: tuple[AlphaRow, ...]


def build_matrix(values: dict) -> RatingsMatrix:
    """values maps (unit, rater) -> 0/1"""
    for key, value in values.items():
        if value not in (0, 1):
            raise NonBinaryValue(f"rating {key} has value {value!r}, expected 0 or 1")

    units = tuple(sorted({unit for unit, _ in values}))
    raters = tuple(sorted({rater for _, rater in values}))
    return RatingsMatrix(units=units, raters=raters, values=values)


def pairable_units(m: RatingsMatrix) -> list:
    return [unit for unit, count in m.ratings_per_unit().items() if count >= 2]


def krippendorff_alpha(m: RatingsMatrix) -> Optional[float]:
    """
    Nominal alpha = 1 - D_o / D_e from the coincidence matrix.
    Returns None when D_e is zero (all pairable values identical).
    """
    if not pairable_units(m):
        raise NoPairableUnits("no unit has ratings from two or more raters")

    data = m.to_reliability_data()
    with np.errstate(divide="ignore", invalid="ignore"):
        alpha = krippendorff.alpha(
            reliability_data=data,
            level_of_measurement="nominal",
            value_domain=VALUE_DOMAIN,
        )

    if alpha is None or math.isnan(alpha):
        return None

    return float(alpha)


def gate_categories(
    ratings: dict, threshold: float = settings.ALPHA_THRESHOLD
) -> AlphaReport:
    """
    Per-category alpha with a strict pass rule (alpha > threshold).
    Categories with no pairable units or undefined alpha fail rather than abort the report.
    """
    if not 0 < threshold <= 1:
        raise InvalidParameter(f"threshold must be in (0, 1], got {threshold}")

    rows = []
    for category_id in sorted(ratings):
        m = ratings[category_id]
        pairable = pairable_units(m)
        excluded = len(m.units) - len(pairable)

        error = None
        try:
            alpha = krippendorff_alpha(m)
        except ScoringError as e:
            alpha = None
            error = e.kind

        rows.append(
            AlphaRow(
                category_id=category_id,
                alpha=alpha,
                n_pairable=len(pairable),
                passed=alpha is not None and alpha > threshold,
                excluded_units=excluded,
                error=error,
            )
        )

    return AlphaReport(threshold=threshold, rows=tuple(rows))


def failing_categories(report: AlphaReport) -> list:
    """Categories to discuss and revise before scoring continues"""
    return [row.category_id for row in report.rows if not row.passed]


def ratings_from_frame(df: pd.DataFrame, category_ids: list = None) -> dict:
    """
    Long-format ratings (unit_id, rater_id, category_id, value) to one matrix per category.
    category_ids adds empty matrices for categories with no rows at all.
    """
    ratings = {}
    for category_id, group in df.groupby("category_id", sort=True):
        values = {
            (str(row.unit_id), str(row.rater_id)): int(row.value)
            for row in group.itertuples(index=False)
        }
        ratings[int(category_id)] = build_matrix(values)

    for category_id in category_ids or []:
        ratings.setdefault(category_id, RatingsMatrix(units=(), raters=(), values={}))

    return ratings


def report_frame(report: AlphaReport) -> pd.DataFrame:
    return pd.DataFrame(
        [
            {
                "category_id": row.category_id,
                "alpha": row.alpha,
                "n_pairable": row.n_pairable,
                "pass": row.passed,
            }
            for row in report.rows
        ],
        columns=["category_id", "alpha", "n_pairable", "pass"],
    )
