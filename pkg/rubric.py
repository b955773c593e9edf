"""
The declarative analytic rubric: categories, modalities, polarities and the LP level rules.

The rubric is loaded from a JSON file so that other items and learning progressions can reuse the engine. Category
descriptions are kept verbatim but never interpreted, only id, modality and polarity drive the scoring logic.
"""

from enum import Enum
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from errors import (
    DuplicateCategoryId,
    MissingPolarity,
    NonBinaryValue,
    RubricParseError,
    UnknownCategoryId,
)
from support import canonical_json, load_json, write_text


class Modality(str, Enum):
    MODEL = "model"
    EXPLANATION = "explanation"


class Polarity(str, Enum):
    ACCURATE = "accurate"
    INACCURATE = "inaccurate"


class Category(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: int = Field(ge=1)
    modality: Modality
    polarity: Polarity
    description: str


class MinCount(BaseModel):
    model_config = ConfigDict(frozen=True)

    ids: tuple[int, ...]
    threshold: int = Field(ge=0)


class LevelRule(BaseModel):
    """
    One row of the level table. Absent constraints mean "no constraint", so {level: 0} on its own matches everything
    """

    model_config = ConfigDict(frozen=True)

    level: int = Field(ge=0, le=3)
    min_count: Optional[MinCount] = None
    require_zero: Optional[tuple[int, ...]] = None
    require_any_one: Optional[tuple[int, ...]] = None

    def referenced_ids(self) -> set:
        ids = set()
        if self.min_count is not None:
            ids.update(self.min_count.ids)
        ids.update(self.require_zero or ())
        ids.update(self.require_any_one or ())
        return ids

    def is_catch_all(self) -> bool:
        return (
            self.min_count is None
            and self.require_zero is None
            and self.require_any_one is None
        )


class LevelRuleSet(BaseModel):
    model_config = ConfigDict(frozen=True)

    model: tuple[LevelRule, ...]
    explanation: tuple[LevelRule, ...]

    @model_validator(mode="after")
    def check_order(self) -> "LevelRuleSet":
        for modality in Modality:
            rules = self.for_modality(modality)
            if not rules:
                raise RubricParseError(f"no level rules for {modality.value}")

            levels = [rule.level for rule in rules]
            if any(a <= b for a, b in zip(levels, levels[1:])):
                raise RubricParseError(
                    f"{modality.value} level rules must be in strictly descending level order, got {levels}"
                )

            last = rules[-1]
            if last.level != 0 or not last.is_catch_all():
                raise RubricParseError(
                    f"{modality.value} level rules must end with the catch-all rule {{level: 0}}"
                )

        return self

    def for_modality(self, modality: Modality) -> tuple:
        if modality == Modality.MODEL:
            return self.model
        return self.explanation


class RubricSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    version: str
    categories: tuple[Category, ...]
    level_rules: LevelRuleSet
    level_descriptions: Optional[dict[int, str]] = None

    @model_validator(mode="after")
    def check_references(self) -> "RubricSpec":
        seen = set()
        for category in self.categories:
            if category.id in seen:
                raise DuplicateCategoryId(f"category id {category.id} appears twice")
            seen.add(category.id)

        for modality in Modality:
            for rule in self.level_rules.for_modality(modality):
                unknown = sorted(rule.referenced_ids() - seen)
                if unknown:
                    raise UnknownCategoryId(
                        f"{modality.value} level {rule.level} rule references unknown ids {unknown}"
                    )

        return self

    def category(self, category_id: int) -> Category:
        for category in self.categories:
            if category.id == category_id:
                return category
        raise UnknownCategoryId(f"category id {category_id} is not in the rubric")


class CategoryVector(BaseModel):
    """
    Binary scores for one response. Presence of an idea is 1, absence is 0.
    A modality with no scores at all is filled with zeros and flagged absent by validate_vector.
    """

    model_config = ConfigDict(frozen=True)

    scores: dict[int, int]
    model_absent: bool = False
    explanation_absent: bool = False

    def bit(self, category_id: int) -> int:
        return self.scores.get(category_id, 0)

    def ones(self, ids) -> list:
        return [i for i in ids if self.bit(i) == 1]

    def zeros(self, ids) -> list:
        return [i for i in ids if self.bit(i) == 0]


def category_ids(
    rubric: RubricSpec, modality: Modality = None, polarity: Polarity = None
) -> list:
    ids = []
    for category in rubric.categories:
        if modality is not None and category.modality != modality:
            continue
        if polarity is not None and category.polarity != polarity:
            continue
        ids.append(category.id)

    return ids


def parse_rubric(data: dict, source: str = None) -> RubricSpec:
    if not isinstance(data, dict):
        raise RubricParseError("rubric file must contain a JSON object", source=source)

    # Polarity gets its own error, it is the one field people forget when adding categories
    for raw in data.get("categories", []):
        if isinstance(raw, dict) and "polarity" not in raw:
            raise MissingPolarity(
                f"category {raw.get('id', '?')} has no polarity", source=source
            )

    try:
        return RubricSpec(**data)
    except ValidationError as e:
        raise RubricParseError(str(e), source=source)
    except (DuplicateCategoryId, UnknownCategoryId, RubricParseError) as e:
        raise e.at(source=source)


def load_rubric(path: str) -> RubricSpec:
    try:
        data = load_json(path)
    except ValueError as e:
        raise RubricParseError(f"not valid JSON: {e}", source=path)

    return parse_rubric(data, source=path)


def dump_rubric(rubric: RubricSpec) -> str:
    return canonical_json(rubric.model_dump(mode="json", exclude_none=True))


def save_rubric(rubric: RubricSpec, path: str) -> None:
    write_text(path, dump_rubric(rubric))


def validate_vector(rubric: RubricSpec, vector: CategoryVector) -> CategoryVector:
    known = {category.id: category for category in rubric.categories}

    for category_id, value in vector.scores.items():
        if category_id not in known:
            raise UnknownCategoryId(f"category id {category_id} is not in the rubric")
        if value not in (0, 1) or isinstance(value, bool):
            raise NonBinaryValue(
                f"category {category_id} has score {value!r}, expected 0 or 1"
            )

    # A modality with no scores at all is absent, not wrong
    absent = {
        Modality.MODEL: vector.model_absent,
        Modality.EXPLANATION: vector.explanation_absent,
    }
    for modality in Modality:
        ids = category_ids(rubric, modality)
        if not any(i in vector.scores for i in ids):
            absent[modality] = True

    scores = {category.id: vector.scores.get(category.id, 0) for category in rubric.categories}

    return CategoryVector(
        scores=scores,
        model_absent=absent[Modality.MODEL],
        explanation_absent=absent[Modality.EXPLANATION],
    )


def mark_explanation_absent(rubric: RubricSpec, vector: CategoryVector) -> CategoryVector:
    """An empty or whitespace-only explanation scores zero on every explanation category"""
    scores = dict(vector.scores)
    for category_id in category_ids(rubric, Modality.EXPLANATION):
        scores[category_id] = 0

    return CategoryVector(
        scores=scores, model_absent=vector.model_absent, explanation_absent=True
    )
