"""
LP-aligned formative feedback from a template pack.

Each rule in the pack is a predicate over (level, category bits) and a text fragment. Fragments of every matching
rule are joined in pack order, per modality. If nothing matches, the modality's default fragment is used.
"""

import itertools
import string
from enum import Enum
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, ValidationError

from errors import (
    InvalidParameter,
    NoMatchingRule,
    NonTotalPack,
    TemplateParseError,
    UnknownCategoryId,
    UnknownPlaceholder,
)
from lp_mapper import LevelAssignment, first_match
from rubric import CategoryVector, Modality, Polarity, RubricSpec, category_ids
from support import format_ids, load_json

PLACEHOLDERS = ("level", "missing_ids", "triggered_ids")


class FragmentClass(str, Enum):
    PRAISE = "praise"
    GUIDANCE = "guidance"


class Predicate(BaseModel):
    model_config = ConfigDict(frozen=True)

    level: Optional[int] = Field(default=None, ge=0)
    ids_one: Optional[tuple[int, ...]] = None
    ids_zero: Optional[tuple[int, ...]] = None

    def referenced_ids(self) -> set:
        return set(self.ids_one or ()) | set(self.ids_zero or ())

    def matches(self, level: int, scores: dict) -> bool:
        if self.level is not None and self.level != level:
            return False
        if any(scores.get(i, 0) != 1 for i in self.ids_one or ()):
            return False
        if any(scores.get(i, 0) != 0 for i in self.ids_zero or ()):
            return False
        return True


class FeedbackRule(BaseModel):
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    id: str
    modality: Modality
    fragment_class: FragmentClass = Field(alias="class")
    applies_when: Predicate = Predicate()
    fragment: str


class DefaultFragment(BaseModel):
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    fragment_class: FragmentClass = Field(default=FragmentClass.GUIDANCE, alias="class")
    fragment: str


class TemplatePack(BaseModel):
    model_config = ConfigDict(frozen=True)

    rules: tuple[FeedbackRule, ...] = ()
    defaults: dict[Modality, DefaultFragment] = {}

    # Filled in by validate_pack: modality -> (accurate ids, inaccurate ids)
    _polarity_ids: Optional[dict] = PrivateAttr(default=None)

    def rules_for(self, modality: Modality) -> list:
        return [rule for rule in self.rules if rule.modality == modality]

    def is_validated(self) -> bool:
        return self._polarity_ids is not None


class FeedbackStatement(BaseModel):
    model_config = ConfigDict(frozen=True)

    response_id: str
    model_text: str
    explanation_text: str
    matched_rule_ids: tuple[str, ...]


def load_pack(path: str) -> TemplatePack:
    try:
        data = load_json(path)
    except ValueError as e:
        raise TemplateParseError(f"not valid JSON: {e}", source=path)

    try:
        return TemplatePack(**data)
    except ValidationError as e:
        raise TemplateParseError(str(e), source=path)
    except TypeError as e:
        raise TemplateParseError(f"template pack must be a JSON object: {e}", source=path)


def placeholder_names(fragment: str) -> list:
    return [name for _, name, _, _ in string.Formatter().parse(fragment) if name is not None]


def check_placeholders(fragment: str, owner: str) -> None:
    for name in placeholder_names(fragment):
        if name not in PLACEHOLDERS:
            raise UnknownPlaceholder(
                f"{owner} uses {{{name}}}, expected one of {', '.join(PLACEHOLDERS)}"
            )


def validate_pack(pack: TemplatePack, rubric: RubricSpec) -> TemplatePack:
    modality_ids = {modality: set(category_ids(rubric, modality)) for modality in Modality}

    for rule in pack.rules:
        for category_id in sorted(rule.applies_when.referenced_ids()):
            if category_id not in modality_ids[rule.modality]:
                raise UnknownCategoryId(
                    f"rule {rule.id} references category {category_id}, which is not a {rule.modality.value} category"
                )
        check_placeholders(rule.fragment, f"rule {rule.id}")

    for modality, default in pack.defaults.items():
        check_placeholders(default.fragment, f"default {modality.value} fragment")

    # Every reachable (level, vector) pair must produce some text
    for modality in Modality:
        if modality in pack.defaults:
            continue

        ids = category_ids(rubric, modality)
        rules = pack.rules_for(modality)
        for bits in itertools.product((0, 1), repeat=len(ids)):
            scores = dict(zip(ids, bits))
            level = first_match(rubric.level_rules, modality, scores).level
            if not any(rule.applies_when.matches(level, scores) for rule in rules):
                raise NonTotalPack(
                    f"no {modality.value} rule matches level {level} with scores {scores}",
                    witness={"modality": modality.value, "level": level, "scores": scores},
                )

    validated = pack.model_copy()
    validated._polarity_ids = {
        modality: (
            tuple(category_ids(rubric, modality, Polarity.ACCURATE)),
            tuple(category_ids(rubric, modality, Polarity.INACCURATE)),
        )
        for modality in Modality
    }

    return validated


def render_modality(
    pack: TemplatePack, modality: Modality, level: int, v: CategoryVector
) -> tuple:
    accurate_ids, inaccurate_ids = pack._polarity_ids[modality]
    context = {
        "level": level,
        "missing_ids": format_ids(v.zeros(accurate_ids)),
        "triggered_ids": format_ids(v.ones(inaccurate_ids)),
    }

    matched = [
        rule for rule in pack.rules_for(modality) if rule.applies_when.matches(level, v.scores)
    ]
    if matched:
        fragments = [rule.fragment.format_map(context) for rule in matched]
        return " ".join(fragments), [rule.id for rule in matched]

    default = pack.defaults.get(modality)
    if default is None:
        raise NoMatchingRule(
            f"no {modality.value} rule matches level {level} and the pack has no default"
        )

    return default.fragment.format_map(context), [f"default:{modality.value}"]


def render_feedback(
    pack: TemplatePack,
    assignment: LevelAssignment,
    v: CategoryVector,
    response_id: str = "",
) -> FeedbackStatement:
    if not pack.is_validated():
        raise InvalidParameter("template pack must be validated against a rubric before rendering")

    texts = {}
    matched_ids = []
    for modality in Modality:
        text, ids = render_modality(
            pack, modality, assignment.level(modality).value, v
        )
        texts[modality] = text
        matched_ids.extend(ids)

    return FeedbackStatement(
        response_id=response_id,
        model_text=texts[Modality.MODEL],
        explanation_text=texts[Modality.EXPLANATION],
        matched_rule_ids=tuple(matched_ids),
    )


def classes_for(pack: TemplatePack, matched_rule_ids) -> dict:
    """Fragment class per matched rule id, defaults included"""
    lookup = {rule.id: rule.fragment_class for rule in pack.rules}
    for modality, default in pack.defaults.items():
        lookup[f"default:{modality.value}"] = default.fragment_class

    return {rule_id: lookup[rule_id] for rule_id in matched_rule_ids}
