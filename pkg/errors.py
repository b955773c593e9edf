"""
Error types raised by the scoring engine.

Every error the CLI treats as an input or validation problem (exit code 2)
derives from ScoringError. They deliberately do not derive from ValueError so
that pydantic validators let them through unchanged.
"""


class ScoringError(Exception):
    def __init__(self, message: str, source: str = None, line: int = None) -> None:
        super().__init__(message)
        self.message = message
        self.source = source
        self.line = line

    @property
    def kind(self) -> str:
        return type(self).__name__

    def at(self, source: str = None, line: int = None) -> "ScoringError":
        """Attach a file and line to an error raised deeper down"""
        if source is not None and self.source is None:
            self.source = source
        if line is not None and self.line is None:
            self.line = line
        return self

    def diagnostic(self) -> str:
        location = ""
        if self.source is not None:
            location = self.source
            if self.line is not None:
                location += f":{self.line}"
            location += ": "

        return f"{location}{self.kind}: {self.message}"

    def __str__(self) -> str:
        return self.diagnostic()


class ConfigError(ScoringError):
    pass


class InvalidParameter(ScoringError):
    pass


# Rubric
class RubricParseError(ScoringError):
    pass


class DuplicateCategoryId(ScoringError):
    pass


class UnknownCategoryId(ScoringError):
    pass


class MissingPolarity(ScoringError):
    pass


class NonBinaryValue(ScoringError):
    pass


# Feedback
class TemplateParseError(ScoringError):
    pass


class UnknownPlaceholder(ScoringError):
    pass


class NonTotalPack(ScoringError):
    def __init__(self, message: str, witness: dict = None, **kwargs) -> None:
        super().__init__(message, **kwargs)
        self.witness = witness


class NoMatchingRule(ScoringError):
    pass


# Reliability
class NoPairableUnits(ScoringError):
    pass


class DuplicateRating(ScoringError):
    pass


# Metrics and tables
class LengthMismatch(ScoringError):
    pass


class SchemaMismatch(ScoringError):
    pass


class EmptyTable(ScoringError):
    pass


class DuplicateResponseId(ScoringError):
    pass


class DegenerateStatistic(ScoringError):
    pass


# Augmentation
class SingleClassDataset(ScoringError):
    pass


class TooFewMinoritySamples(ScoringError):
    pass


# Text classifier
class DimensionMismatch(ScoringError):
    pass


class TooFewExamples(ScoringError):
    pass


class NonBinaryLabel(ScoringError):
    pass


class EmptyCorpus(ScoringError):
    pass


class EmptyVocabulary(EmptyCorpus):
    pass


class VersionMismatch(ScoringError):
    pass
