"""
Reading and writing the tabular files the CLI works with: label tables, long-format ratings, feature files and
explanation records. Problems are reported with the file name and the line number in the file (header is line 1).
"""

from typing import Optional

import numpy as np
import pandas as pd
import srsly
from pydantic import BaseModel, ConfigDict

import settings
from augment import FeatureDataset
from errors import (
    DuplicateRating,
    DuplicateResponseId,
    EmptyTable,
    NonBinaryLabel,
    NonBinaryValue,
    SchemaMismatch,
    ScoringError,
    UnknownCategoryId,
)
from rubric import CategoryVector, RubricSpec, mark_explanation_absent, validate_vector
from textclf import TextExample

RATINGS_COLUMNS = ["unit_id", "rater_id", "category_id", "value"]


class LabelTable(BaseModel):
    """Labels indexed by response id with one integer column per category id"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    labels: pd.DataFrame
    explanations: Optional[dict] = None
    sources: tuple[str, ...] = ()

    @property
    def response_ids(self) -> list:
        return list(self.labels.index)


def line_of(position: int) -> int:
    return position + 2


def category_column(category_id: int) -> str:
    return f"{settings.CATEGORY_COLUMN_PREFIX}{category_id}"


def parse_category_column(column: str, path: str) -> int:
    prefix = settings.CATEGORY_COLUMN_PREFIX
    if not column.startswith(prefix) or not column[len(prefix) :].isdigit():
        raise SchemaMismatch(f"unexpected column {column!r}", source=path, line=1)
    return int(column[len(prefix) :])


def read_csv(path: str) -> pd.DataFrame:
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        raise EmptyTable("file is empty", source=path)

    if df.empty:
        raise EmptyTable("file has a header but no rows", source=path)

    return df


def check_unique_ids(ids: pd.Series, path: str) -> None:
    duplicated = ids.duplicated()
    if duplicated.any():
        position = int(np.flatnonzero(duplicated.to_numpy())[0])
        raise DuplicateResponseId(
            f"response id {ids.iloc[position]!r} appears more than once",
            source=path,
            line=line_of(position),
        )


def read_label_table(path: str, rubric: RubricSpec) -> LabelTable:
    df = read_csv(path)
    id_column = settings.RESPONSE_ID_COLUMN
    if id_column not in df.columns:
        raise SchemaMismatch(f"missing {id_column} column", source=path, line=1)

    known = {category.id for category in rubric.categories}
    columns = {}
    for column in df.columns:
        if column in (id_column, settings.EXPLANATION_COLUMN):
            continue
        category_id = parse_category_column(column, path)
        if category_id not in known:
            raise UnknownCategoryId(
                f"column {column} names category {category_id}, which is not in the rubric",
                source=path,
                line=1,
            )
        columns[column] = category_id

    ids = df[id_column].str.strip()
    check_unique_ids(ids, path)

    labels = pd.DataFrame(index=pd.Index(ids, name=id_column))
    for column, category_id in columns.items():
        values = df[column].str.strip()
        bad = ~values.isin(["0", "1"])
        if bad.any():
            position = int(np.flatnonzero(bad.to_numpy())[0])
            raise NonBinaryValue(
                f"{column} has value {values.iloc[position]!r}, expected 0 or 1",
                source=path,
                line=line_of(position),
            )
        labels[category_id] = values.astype(int).to_numpy()

    explanations = None
    if settings.EXPLANATION_COLUMN in df.columns:
        explanations = dict(zip(ids, df[settings.EXPLANATION_COLUMN]))

    return LabelTable(labels=labels, explanations=explanations, sources=(path,))


def merge_label_tables(tables: list) -> LabelTable:
    """Joins modality files on response id. Every file must cover the same responses and distinct categories"""
    if not tables:
        raise EmptyTable("no label files given")

    merged = tables[0]
    for table in tables[1:]:
        overlap = set(merged.labels.columns) & set(table.labels.columns)
        if overlap:
            raise SchemaMismatch(
                f"categories {sorted(overlap)} appear in more than one label file",
                source=table.sources[0],
            )
        if set(merged.labels.index) != set(table.labels.index):
            raise SchemaMismatch(
                "label files do not cover the same response ids", source=table.sources[0]
            )

        explanations = merged.explanations
        if table.explanations is not None:
            explanations = {**(explanations or {}), **table.explanations}

        merged = LabelTable(
            labels=merged.labels.join(table.labels),
            explanations=explanations,
            sources=merged.sources + table.sources,
        )

    columns = sorted(merged.labels.columns)
    return LabelTable(
        labels=merged.labels[columns], explanations=merged.explanations, sources=merged.sources
    )


def vectors_from_table(table: LabelTable, rubric: RubricSpec) -> list:
    """(response_id, validated CategoryVector) per row, in file order"""
    vectors = []
    for position, (response_id, row) in enumerate(table.labels.iterrows()):
        scores = {int(category_id): int(value) for category_id, value in row.items()}
        try:
            vector = validate_vector(rubric, CategoryVector(scores=scores))
        except ScoringError as e:
            raise e.at(source=table.sources[0], line=line_of(position))

        if table.explanations is not None and not str(table.explanations[response_id]).strip():
            vector = mark_explanation_absent(rubric, vector)

        vectors.append((response_id, vector))

    return vectors


def label_frame(vectors: list, category_ids: list) -> pd.DataFrame:
    """Inverse of vectors_from_table for a chosen set of categories"""
    index = pd.Index([response_id for response_id, _ in vectors], name=settings.RESPONSE_ID_COLUMN)
    data = {
        category_id: [vector.bit(category_id) for _, vector in vectors]
        for category_id in category_ids
    }
    return pd.DataFrame(data, index=index, columns=list(category_ids))


def write_label_table(labels: pd.DataFrame, path: str) -> None:
    out = labels.rename(columns=category_column).reset_index()
    out.to_csv(path, index=False, lineterminator="\n")


def read_ratings_table(path: str) -> pd.DataFrame:
    df = read_csv(path)
    missing = [column for column in RATINGS_COLUMNS if column not in df.columns]
    if missing:
        raise SchemaMismatch(f"missing columns {missing}", source=path, line=1)

    for column in ("category_id", "value"):
        bad = ~df[column].str.strip().str.isdigit()
        if bad.any():
            position = int(np.flatnonzero(bad.to_numpy())[0])
            raise NonBinaryValue(
                f"{column} has value {df[column].iloc[position]!r}",
                source=path,
                line=line_of(position),
            )

    df["category_id"] = df["category_id"].astype(int)
    df["value"] = df["value"].astype(int)
    bad = ~df["value"].isin([0, 1])
    if bad.any():
        position = int(np.flatnonzero(bad.to_numpy())[0])
        raise NonBinaryValue(
            f"rating {df['value'].iloc[position]} is not 0 or 1",
            source=path,
            line=line_of(position),
        )

    duplicated = df.duplicated(subset=["unit_id", "rater_id", "category_id"])
    if duplicated.any():
        position = int(np.flatnonzero(duplicated.to_numpy())[0])
        raise DuplicateRating(
            "the same rater scored this unit and category twice",
            source=path,
            line=line_of(position),
        )

    return df[RATINGS_COLUMNS]


def read_feature_table(path: str) -> FeatureDataset:
    """Feature file layout: id, f1 ... fd, label"""
    df = read_csv(path)
    if list(df.columns[:1]) != ["id"] or df.columns[-1] != "label" or len(df.columns) < 3:
        raise SchemaMismatch("expected columns id, f1, ..., fd, label", source=path, line=1)

    ids = df["id"].str.strip()
    check_unique_ids(ids, path)

    labels = df["label"].str.strip()
    bad = ~labels.isin(["0", "1"])
    if bad.any():
        position = int(np.flatnonzero(bad.to_numpy())[0])
        raise NonBinaryLabel(
            f"label {labels.iloc[position]!r} is not 0 or 1", source=path, line=line_of(position)
        )

    feature_columns = list(df.columns[1:-1])
    features = df[feature_columns].apply(pd.to_numeric, errors="coerce")
    bad_rows = features.isna().any(axis=1)
    if bad_rows.any():
        position = int(np.flatnonzero(bad_rows.to_numpy())[0])
        raise SchemaMismatch(
            "feature values must be numbers", source=path, line=line_of(position)
        )

    try:
        return FeatureDataset(
            ids=tuple(ids),
            features=features.to_numpy(dtype=np.float64),
            labels=labels.astype(int).to_numpy(),
        )
    except ScoringError as e:
        raise e.at(source=path)


def write_feature_table(data: FeatureDataset, path: str) -> None:
    columns = [f"f{j}" for j in range(1, data.dimension + 1)]
    df = pd.DataFrame(data.features, columns=columns)
    df.insert(0, "id", list(data.ids))
    df["label"] = data.labels.astype(int)
    df.to_csv(path, index=False, lineterminator="\n")


def read_text_records(path: str, category_ids: tuple) -> list:
    """JSON Lines {response_id, explanation, labels: {c14: 0, ...}}. Missing labels stay None"""
    examples = []
    seen = set()
    try:
        for position, record in enumerate(srsly.read_jsonl(path)):
            line = position + 1
            response_id = str(record.get(settings.RESPONSE_ID_COLUMN, ""))
            if not response_id:
                raise SchemaMismatch("record has no response_id", source=path, line=line)
            if response_id in seen:
                raise DuplicateResponseId(
                    f"response id {response_id!r} appears more than once", source=path, line=line
                )
            seen.add(response_id)

            raw_labels = record.get("labels") or {}
            labels = {
                category_id: raw_labels.get(category_column(category_id))
                for category_id in category_ids
            }
            examples.append(
                TextExample(
                    response_id=response_id,
                    text=record.get(settings.EXPLANATION_COLUMN) or "",
                    labels=labels,
                )
            )
    except ValueError as e:
        raise SchemaMismatch(f"not valid JSON Lines: {e}", source=path)

    if not examples:
        raise EmptyTable("no records", source=path)

    return examples


def write_jsonl(path: str, records: list) -> None:
    srsly.write_jsonl(path, records)
