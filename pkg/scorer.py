"""
Command line front end. Run `python scorer.py --help` for the list of commands.
Defaults (rubric, templates, run config) can be changed in settings.py

Exit codes: 0 success, 2 problem with an input file or setting, 1 internal error.
"""

import functools
import json
import os
from enum import Enum
from typing import List, Optional

import pandas as pd
import srsly
import typer
from wasabi import msg

import settings
from augment import smote as run_smote
from config import RunSettings, config_hash, load_run_settings
from errors import NonTotalPack, ScoringError
from feedback import load_pack, render_feedback, validate_pack
from lp_mapper import assign
from metrics import (
    CIMethod,
    agreement_report,
    imbalance_frame,
    imbalance_report,
    render_imbalance,
    render_table,
    report_frame,
    write_agreement_csv,
)
from reliability import failing_categories, gate_categories, ratings_from_frame
from reliability import report_frame as alpha_frame
from rubric import Modality, category_ids, load_rubric, save_rubric
from support import file_exists, make_dir, resolve_path, write_manifest, write_text
from tables import (
    label_frame,
    merge_label_tables,
    read_feature_table,
    read_label_table,
    read_ratings_table,
    read_text_records,
    vectors_from_table,
    write_feature_table,
    write_jsonl,
    write_label_table,
)
from textclf import cross_validate, load_model, predict, save_model, train

app = typer.Typer(add_completion=False, help="Rubric scoring, feedback and agreement reports")


class OutputFormat(str, Enum):
    CSV = "csv"
    TABLE = "table"
    JSONL = "jsonl"


RubricOption = typer.Option(settings.RUBRIC_PATH, "--rubric", help="Rubric JSON file")
ConfigOption = typer.Option(None, "--config", help="Run config YAML, defaults to RUN_CONFIG_PATH")
SeedOption = typer.Option(None, "--seed", help="Overrides the seed from the run config")
FormatOption = typer.Option(OutputFormat.CSV, "--format", help="csv, table or jsonl")


def guarded(func):
    """Maps errors to exit codes: input and validation problems exit 2, anything else exits 1"""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except typer.Exit:
            raise
        except ScoringError as e:
            # Unwrapped so file:line survives long paths
            typer.echo(e.diagnostic(), err=True)
            if isinstance(e, NonTotalPack) and e.witness is not None:
                typer.echo(f"Witness: {json.dumps(e.witness, sort_keys=True)}", err=True)
            raise typer.Exit(code=2)
        except Exception as e:
            msg.fail(f"Internal error: {type(e).__name__}: {e}")
            raise typer.Exit(code=1)

    return wrapper


def run_settings_for(config_path: Optional[str], seed: Optional[int]) -> tuple:
    """(RunSettings, path of the config file actually read or None)"""
    if config_path is None:
        default = resolve_path(settings.RUN_CONFIG_PATH)
        config_path = default if file_exists(default) else None

    return load_run_settings(config_path, seed=seed), config_path


def existing(paths: list) -> list:
    return [path for path in paths if path is not None]


def finish(out: str, command: str, run_settings: RunSettings, inputs: list) -> None:
    write_manifest(out, command, config_hash(run_settings), existing(inputs), run_settings.seed)
    msg.good(f"Written {out}")


def write_frame(df: pd.DataFrame, out: str, fmt: OutputFormat, title: str = None) -> None:
    make_dir(out)
    if fmt == OutputFormat.CSV:
        df.to_csv(out, index=False, lineterminator="\n")
    elif fmt == OutputFormat.TABLE:
        body = df.to_string(index=False, na_rep="")
        write_text(out, f"{title}\n{body}\n" if title else f"{body}\n")
    else:
        records = json.loads(df.to_json(orient="records"))
        srsly.write_jsonl(out, records)


def load_labels(paths: list, rubric) -> tuple:
    tables = [read_label_table(resolve_path(path), rubric) for path in paths]
    return merge_label_tables(tables), [resolve_path(path) for path in paths]


@app.command("rubric-validate")
@guarded
def rubric_validate(
    rubric: str = RubricOption,
    templates: Optional[str] = typer.Option(None, "--templates", help="Also validate this template pack"),
    out: Optional[str] = typer.Option(None, "--out", help="Write the rubric in canonical form"),
    config: Optional[str] = ConfigOption,
    seed: Optional[int] = SeedOption,
) -> None:
    """Check a rubric (and optionally a template pack) and print a summary"""
    run_settings, config_path = run_settings_for(config, seed)
    rubric_path = resolve_path(rubric)
    templates_path = resolve_path(templates) if templates is not None else None
    rubric_spec = load_rubric(rubric_path)
    msg.good(f"Rubric {rubric_spec.version}: {len(rubric_spec.categories)} categories")

    for modality in Modality:
        ids = category_ids(rubric_spec, modality)
        msg.text(f"{modality.value}: categories {ids[0]}-{ids[-1]}" if ids else f"{modality.value}: none")

    if rubric_spec.level_descriptions:
        for level, description in sorted(rubric_spec.level_descriptions.items()):
            msg.text(f"Level {level}: {description}")

    if templates is not None:
        validate_pack(load_pack(templates_path), rubric_spec)
        msg.good(f"Template pack {templates} is total over the rubric")

    if out is not None:
        save_rubric(rubric_spec, out)
        finish(out, "rubric-validate", run_settings, [rubric_path, templates_path, config_path])


@app.command("map")
@guarded
def cmd_map(
    labels: List[str] = typer.Option(..., "--labels", help="Label table CSV, repeat to join modality files"),
    out: str = typer.Option(..., "--out"),
    rubric: str = RubricOption,
    config: Optional[str] = ConfigOption,
    seed: Optional[int] = SeedOption,
    fmt: OutputFormat = FormatOption,
) -> None:
    """LP level per modality for every response"""
    run_settings, config_path = run_settings_for(config, seed)
    rubric_path = resolve_path(rubric)
    rubric_spec = load_rubric(rubric_path)

    msg.info("Map: reading labels")
    table, label_paths = load_labels(labels, rubric_spec)

    msg.info("Map: assigning levels")
    rows = []
    for response_id, vector in vectors_from_table(table, rubric_spec):
        assignment = assign(rubric_spec.level_rules, vector, rubric_spec.categories)
        rows.append(
            {
                "response_id": response_id,
                "model_level": assignment.model_level.value,
                "explanation_level": assignment.explanation_level.value,
                "accurate_count": assignment.accurate_count_model,
                "inaccuracy_ids": ";".join(str(i) for i in assignment.triggered_inaccuracies),
            }
        )

    columns = ["response_id", "model_level", "explanation_level", "accurate_count", "inaccuracy_ids"]
    write_frame(pd.DataFrame(rows, columns=columns), out, fmt, "LP levels")
    finish(out, "map", run_settings, [rubric_path, config_path, *label_paths])


@app.command("feedback")
@guarded
def cmd_feedback(
    labels: List[str] = typer.Option(..., "--labels", help="Label table CSV, repeat to join modality files"),
    out: str = typer.Option(..., "--out"),
    rubric: str = RubricOption,
    templates: str = typer.Option(settings.FEEDBACK_PATH, "--templates", help="Template pack JSON"),
    config: Optional[str] = ConfigOption,
    seed: Optional[int] = SeedOption,
) -> None:
    """Feedback statement per response, written as JSON Lines"""
    run_settings, config_path = run_settings_for(config, seed)
    rubric_path, templates_path = resolve_path(rubric), resolve_path(templates)
    rubric_spec = load_rubric(rubric_path)

    msg.info("Feedback: validating template pack")
    pack = validate_pack(load_pack(templates_path), rubric_spec)

    table, label_paths = load_labels(labels, rubric_spec)

    msg.info("Feedback: rendering statements")
    records = []
    for response_id, vector in vectors_from_table(table, rubric_spec):
        assignment = assign(rubric_spec.level_rules, vector, rubric_spec.categories)
        statement = render_feedback(pack, assignment, vector, response_id=str(response_id))
        records.append(
            {
                "response_id": statement.response_id,
                "model_level": assignment.model_level.value,
                "explanation_level": assignment.explanation_level.value,
                "model_text": statement.model_text,
                "explanation_text": statement.explanation_text,
                "matched_rule_ids": list(statement.matched_rule_ids),
            }
        )

    make_dir(out)
    write_jsonl(out, records)
    finish(out, "feedback", run_settings, [rubric_path, templates_path, config_path, *label_paths])


@app.command("irr")
@guarded
def cmd_irr(
    ratings: str = typer.Option(..., "--ratings", help="Long-format CSV: unit_id, rater_id, category_id, value"),
    out: str = typer.Option(..., "--out"),
    threshold: Optional[float] = typer.Option(None, "--threshold", help="Alpha must be greater than this"),
    rubric: str = RubricOption,
    config: Optional[str] = ConfigOption,
    seed: Optional[int] = SeedOption,
    fmt: OutputFormat = FormatOption,
) -> None:
    """Krippendorff's alpha per category and the acceptance gate"""
    run_settings, config_path = run_settings_for(config, seed)
    if threshold is not None:
        run_settings = load_run_settings(config_path, seed=seed, alpha_threshold=threshold)

    rubric_path, ratings_path = resolve_path(rubric), resolve_path(ratings)
    rubric_spec = load_rubric(rubric_path)

    msg.info("Reliability: reading ratings")
    df = read_ratings_table(ratings_path)
    for category_id in sorted(df["category_id"].unique()):
        try:
            rubric_spec.category(int(category_id))
        except ScoringError as e:
            raise e.at(source=ratings_path)

    report = gate_categories(ratings_from_frame(df), run_settings.alpha_threshold)
    failing = failing_categories(report)
    if failing:
        msg.warn(f"Reliability: categories {failing} need discussion and rubric revision")
    else:
        msg.good("Reliability: all categories pass")

    write_frame(alpha_frame(report), out, fmt, f"Krippendorff's alpha (threshold {report.threshold})")
    finish(out, "irr", run_settings, [rubric_path, ratings_path, config_path])


@app.command("agree")
@guarded
def cmd_agree(
    human: List[str] = typer.Option(..., "--human", help="Human label CSV, repeatable"),
    machine: List[str] = typer.Option(..., "--machine", help="Machine label CSV, repeatable"),
    out: str = typer.Option(..., "--out"),
    ci_method: Optional[CIMethod] = typer.Option(None, "--ci-method", help="wald or bootstrap"),
    stage: str = typer.Option("testing", "--stage", help="Label for the prediction set"),
    macro: bool = typer.Option(False, "--macro", help="Append a macro-average row"),
    rubric: str = RubricOption,
    config: Optional[str] = ConfigOption,
    seed: Optional[int] = SeedOption,
    fmt: OutputFormat = FormatOption,
) -> None:
    """Human-machine agreement per category, plus the class-imbalance report"""
    run_settings, config_path = run_settings_for(config, seed)
    rubric_path = resolve_path(rubric)
    rubric_spec = load_rubric(rubric_path)

    msg.info("Agreement: reading labels")
    human_table, human_paths = load_labels(human, rubric_spec)
    machine_table, machine_paths = load_labels(machine, rubric_spec)

    msg.info("Agreement: computing metrics")
    report = agreement_report(
        human_table.labels,
        machine_table.labels,
        ci_method=ci_method or run_settings.ci_method,
        confidence=run_settings.confidence,
        seed=run_settings.seed,
        resamples=run_settings.bootstrap_resamples,
        stage=stage,
        include_macro=macro,
    )
    inputs = [rubric_path, config_path, *human_paths, *machine_paths]

    make_dir(out)
    if fmt == OutputFormat.CSV:
        write_agreement_csv(report, out)
    elif fmt == OutputFormat.TABLE:
        write_text(out, render_table(report))
    else:
        write_frame(report_frame(report), out, fmt)
    finish(out, "agree", run_settings, inputs)

    stem, extension = os.path.splitext(out)
    imbalance_out = f"{stem}_imbalance{extension}"
    imbalance = imbalance_report(human_table.labels)
    if fmt == OutputFormat.TABLE:
        write_text(imbalance_out, render_imbalance(imbalance))
    else:
        write_frame(imbalance_frame(imbalance), imbalance_out, fmt)
    finish(imbalance_out, "agree", run_settings, inputs)


@app.command("imbalance")
@guarded
def cmd_imbalance(
    labels: List[str] = typer.Option(..., "--labels", help="Label table CSV, repeatable"),
    out: str = typer.Option(..., "--out"),
    rubric: str = RubricOption,
    config: Optional[str] = ConfigOption,
    seed: Optional[int] = SeedOption,
    fmt: OutputFormat = FormatOption,
) -> None:
    """Percent of positive cases per category"""
    run_settings, config_path = run_settings_for(config, seed)
    rubric_path = resolve_path(rubric)
    rubric_spec = load_rubric(rubric_path)
    table, label_paths = load_labels(labels, rubric_spec)

    report = imbalance_report(table.labels)
    if fmt == OutputFormat.TABLE:
        make_dir(out)
        write_text(out, render_imbalance(report))
    else:
        write_frame(imbalance_frame(report), out, fmt)
    finish(out, "imbalance", run_settings, [rubric_path, config_path, *label_paths])


@app.command("smote")
@guarded
def cmd_smote(
    features: str = typer.Option(..., "--features", help="CSV: id, f1 ... fd, label"),
    out: str = typer.Option(..., "--out"),
    config: Optional[str] = ConfigOption,
    seed: Optional[int] = SeedOption,
) -> None:
    """Oversample the minority class with SMOTE"""
    run_settings, config_path = run_settings_for(config, seed)
    features_path = resolve_path(features)

    data = read_feature_table(features_path)
    counts = data.class_counts()
    msg.info(f"SMOTE: {counts[0]} negative and {counts[1]} positive rows")

    augmented = run_smote(data, run_settings.smote_config())
    msg.info(f"SMOTE: added {len(augmented.ids) - len(data.ids)} synthetic rows")

    make_dir(out)
    write_feature_table(augmented, out)
    finish(out, "smote", run_settings, [features_path, config_path])


@app.command("train-text")
@guarded
def cmd_train_text(
    data: str = typer.Option(..., "--data", help="JSON Lines {response_id, explanation, labels}"),
    out: str = typer.Option(..., "--out", help="Model file to write"),
    rubric: str = RubricOption,
    config: Optional[str] = ConfigOption,
    seed: Optional[int] = SeedOption,
) -> None:
    """Train the explanation classifier"""
    run_settings, config_path = run_settings_for(config, seed)
    rubric_path, data_path = resolve_path(rubric), resolve_path(data)
    rubric_spec = load_rubric(rubric_path)
    ids = tuple(category_ids(rubric_spec, Modality.EXPLANATION))

    msg.info("Train text: reading records")
    examples = read_text_records(data_path, ids)

    msg.info(f"Train text: training on {len(examples)} records")
    model = train(
        examples,
        run_settings.head,
        run_settings.train_config(),
        category_ids=ids,
        show_progress=True,
    )
    for record in model.history:
        msg.text(
            f"Epoch {record.epoch}: train loss {record.train_loss:.4f}, validation loss {record.validation_loss:.4f}"
        )
    msg.info(f"Train text: keeping weights from epoch {model.best_epoch}")

    make_dir(out)
    save_model(model, out)
    finish(out, "train-text", run_settings, [rubric_path, data_path, config_path])


@app.command("predict-text")
@guarded
def cmd_predict_text(
    data: str = typer.Option(..., "--data", help="JSON Lines {response_id, explanation}"),
    model: str = typer.Option(..., "--model", help="Model file from train-text"),
    out: str = typer.Option(..., "--out", help="Label table CSV to write"),
    threshold: Optional[float] = typer.Option(None, "--threshold", help="Overrides the trained decision threshold"),
    expect_vocabulary: Optional[str] = typer.Option(
        None, "--expect-vocabulary", help="Vocabulary digest the model must have been trained with"
    ),
    rubric: str = RubricOption,
    config: Optional[str] = ConfigOption,
    seed: Optional[int] = SeedOption,
) -> None:
    """Predict explanation categories as a label table"""
    run_settings, config_path = run_settings_for(config, seed)
    rubric_path, data_path, model_path = resolve_path(rubric), resolve_path(data), resolve_path(model)
    rubric_spec = load_rubric(rubric_path)

    classifier = load_model(model_path, expect_vocabulary)
    examples = read_text_records(data_path, classifier.category_ids)

    msg.info(f"Predict text: scoring {len(examples)} records")
    vectors = predict(classifier, [example.text for example in examples], threshold)
    for category_id in classifier.category_ids:
        rubric_spec.category(category_id)

    labels = label_frame(
        [(example.response_id, vector) for example, vector in zip(examples, vectors)],
        list(classifier.category_ids),
    )
    make_dir(out)
    write_label_table(labels, out)
    finish(out, "predict-text", run_settings, [rubric_path, data_path, model_path, config_path])


@app.command("cv-text")
@guarded
def cmd_cv_text(
    data: str = typer.Option(..., "--data", help="JSON Lines {response_id, explanation, labels}"),
    out: str = typer.Option(..., "--out", help="Out-of-fold label table CSV to write"),
    folds: Optional[int] = typer.Option(None, "--folds"),
    rubric: str = RubricOption,
    config: Optional[str] = ConfigOption,
    seed: Optional[int] = SeedOption,
) -> None:
    """Cross-validated predictions and the training-stage agreement report"""
    run_settings, config_path = run_settings_for(config, seed)
    rubric_path, data_path = resolve_path(rubric), resolve_path(data)
    rubric_spec = load_rubric(rubric_path)
    ids = tuple(category_ids(rubric_spec, Modality.EXPLANATION))

    examples = read_text_records(data_path, ids)
    predictions = cross_validate(
        examples,
        run_settings.head,
        run_settings.train_config(),
        folds=folds or run_settings.cv_folds,
        category_ids=ids,
    )

    predicted = label_frame(list(predictions.items()), list(ids))
    make_dir(out)
    write_label_table(predicted, out)
    inputs = [rubric_path, data_path, config_path]
    finish(out, "cv-text", run_settings, inputs)

    # Only records that were used (all labels present) have out-of-fold predictions
    by_id = {example.response_id: example for example in examples}
    human = pd.DataFrame(
        {category_id: [by_id[r].labels[category_id] for r in predicted.index] for category_id in ids},
        index=predicted.index,
    )
    report = agreement_report(
        human,
        predicted,
        ci_method=run_settings.ci_method,
        confidence=run_settings.confidence,
        seed=run_settings.seed,
        resamples=run_settings.bootstrap_resamples,
        stage="cross-validation",
    )
    stem, _ = os.path.splitext(out)
    report_out = f"{stem}_agreement.csv"
    write_agreement_csv(report, report_out)
    finish(report_out, "cv-text", run_settings, inputs)


def main() -> None:
    app()


if __name__ == "__main__":
    main()
