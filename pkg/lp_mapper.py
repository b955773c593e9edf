"""
Maps a category vector to a learning progression level per modality.

Rules are evaluated highest level first and the first match wins. Every rule list ends with the catch-all {level: 0},
so the mapping is total on validated vectors.
"""

from pydantic import BaseModel, ConfigDict, Field

from rubric import (
    Category,
    CategoryVector,
    LevelRule,
    LevelRuleSet,
    Modality,
    Polarity,
)


class LPLevel(BaseModel):
    model_config = ConfigDict(frozen=True)

    value: int = Field(ge=0, le=3)
    modality: Modality


class LevelAssignment(BaseModel):
    model_config = ConfigDict(frozen=True)

    model_level: LPLevel
    explanation_level: LPLevel
    matched_rule_ids: tuple[str, ...]
    accurate_count_model: int = Field(ge=0)
    triggered_inaccuracies: tuple[int, ...]

    def level(self, modality: Modality) -> LPLevel:
        if modality == Modality.MODEL:
            return self.model_level
        return self.explanation_level


def rule_id(modality: Modality, rule: LevelRule) -> str:
    # Levels are strictly descending within a modality, so modality + level is unique
    return f"{modality.value}:L{rule.level}"


def rule_matches(rule: LevelRule, scores: dict) -> bool:
    if rule.min_count is not None:
        count = sum(scores.get(i, 0) for i in rule.min_count.ids)
        if count < rule.min_count.threshold:
            return False

    if rule.require_zero is not None:
        if any(scores.get(i, 0) == 1 for i in rule.require_zero):
            return False

    if rule.require_any_one is not None:
        if not any(scores.get(i, 0) == 1 for i in rule.require_any_one):
            return False

    return True


def first_match(rules: LevelRuleSet, modality: Modality, scores: dict) -> LevelRule:
    for rule in rules.for_modality(modality):
        if rule_matches(rule, scores):
            return rule

    # Unreachable for a validated rule set, the last rule is a catch-all
    return rules.for_modality(modality)[-1]


def max_level(rules: LevelRuleSet, modality: Modality) -> int:
    return rules.for_modality(modality)[0].level


def assign_level(rules: LevelRuleSet, modality: Modality, v: CategoryVector) -> LPLevel:
    rule = first_match(rules, modality, v.scores)
    return LPLevel(value=rule.level, modality=modality)


def assign_model_level(rules: LevelRuleSet, v: CategoryVector) -> LPLevel:
    return assign_level(rules, Modality.MODEL, v)


def assign_explanation_level(rules: LevelRuleSet, v: CategoryVector) -> LPLevel:
    return assign_level(rules, Modality.EXPLANATION, v)


def assign(
    rules: LevelRuleSet, v: CategoryVector, categories: tuple[Category, ...]
) -> LevelAssignment:
    """
    Both per-modality levels plus the diagnostics shown in the scored examples:
    how many accurate model components are present and which inaccuracy categories fired
    """
    matched = []
    levels = {}
    for modality in Modality:
        rule = first_match(rules, modality, v.scores)
        matched.append(rule_id(modality, rule))
        levels[modality] = LPLevel(value=rule.level, modality=modality)

    accurate_model = [
        c.id
        for c in categories
        if c.modality == Modality.MODEL and c.polarity == Polarity.ACCURATE
    ]
    inaccurate = [c.id for c in categories if c.polarity == Polarity.INACCURATE]

    return LevelAssignment(
        model_level=levels[Modality.MODEL],
        explanation_level=levels[Modality.EXPLANATION],
        matched_rule_ids=tuple(matched),
        accurate_count_model=len(v.ones(accurate_model)),
        triggered_inaccuracies=tuple(sorted(v.ones(inaccurate))),
    )
