"""
Multi-label classifier for the written explanation categories.

Texts are tokenized (lowercase alphanumeric runs, capped at 128 tokens), turned into L2-normalised TF-IDF vectors and
fed to a small dense head: ReLU hidden layers with inverted dropout, then one sigmoid output per explanation category.
The head is trained from scratch with Adam on mean binary cross-entropy, with early stopping on validation loss.
"""

import copy
import hashlib
import json
import re
from collections import Counter
from enum import Enum
from typing import Optional

import numpy as np
import srsly
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy.special import expit
from sklearn.feature_extraction.text import TfidfVectorizer
from sklearn.model_selection import KFold, train_test_split
from tqdm import tqdm
from wasabi import msg

import settings
from errors import (
    DimensionMismatch,
    EmptyCorpus,
    EmptyVocabulary,
    InvalidParameter,
    NonBinaryLabel,
    TooFewExamples,
    VersionMismatch,
)
from rubric import CategoryVector

EXPLANATION_IDS = tuple(range(14, 22))
# Runs of Unicode letters and digits
TOKEN_PATTERN = re.compile(r"[^\W_]+")


class Mode(str, Enum):
    TRAIN = "train"
    EVAL = "eval"


class Tokenizer(BaseModel):
    model_config = ConfigDict(frozen=True)

    max_len: int = Field(default=128, ge=1)

    def tokenize(self, text: str) -> list:
        return TOKEN_PATTERN.findall(text.lower())[: self.max_len]


def tokenize(t: Tokenizer, text: str) -> list:
    return t.tokenize(text)


def identity_analyzer(tokens):
    # Documents are already token lists
    return tokens


class Featurizer:
    """
    TF-IDF over a fixed vocabulary: idf(t) = ln((1 + N) / (1 + df_t)) + 1, rows L2-normalised.
    Column order is the order in which tokens first appear in the training documents.
    """

    def __init__(self, vocabulary: dict, idf: np.ndarray) -> None:
        self.vocabulary = dict(vocabulary)
        self.vectorizer = TfidfVectorizer(
            analyzer=identity_analyzer,
            vocabulary=self.vocabulary,
            lowercase=False,
            smooth_idf=True,
            norm="l2",
            dtype=np.float64,
        )
        self.vectorizer.idf_ = np.asarray(idf, dtype=np.float64)

    @property
    def idf(self) -> np.ndarray:
        return self.vectorizer.idf_

    @property
    def dimension(self) -> int:
        return len(self.vocabulary)

    def transform(self, token_lists: list) -> np.ndarray:
        if not token_lists:
            return np.zeros((0, self.dimension))
        return self.vectorizer.transform(token_lists).toarray()

    def digest(self) -> str:
        return vocabulary_digest(self.vocabulary)


def vocabulary_digest(vocabulary: dict) -> str:
    text = json.dumps(list(vocabulary.items()), ensure_ascii=False)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def fit_featurizer(docs: list, min_df: int = 1) -> Featurizer:
    if not docs:
        raise EmptyCorpus("cannot build a vocabulary from zero documents")
    if min_df < 1:
        raise InvalidParameter(f"min_df must be at least 1, got {min_df}")

    document_frequency = Counter()
    for tokens in docs:
        document_frequency.update(set(tokens))

    vocabulary = {}
    for tokens in docs:
        for token in tokens:
            if token not in vocabulary and document_frequency[token] >= min_df:
                vocabulary[token] = len(vocabulary)

    if not vocabulary:
        raise EmptyVocabulary(f"no token appears in at least {min_df} documents")

    vectorizer = TfidfVectorizer(
        analyzer=identity_analyzer,
        vocabulary=vocabulary,
        lowercase=False,
        smooth_idf=True,
        norm="l2",
        dtype=np.float64,
    )
    vectorizer.fit(docs)

    return Featurizer(vocabulary, vectorizer.idf_)


class HeadConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    hidden_sizes: tuple[int, ...] = (64,)
    dropout_rate: float = Field(default=0.3, ge=0, lt=1)
    output_size: int = Field(default=len(EXPLANATION_IDS), ge=1)

    @field_validator("hidden_sizes")
    @classmethod
    def positive_sizes(cls, sizes: tuple) -> tuple:
        if any(size < 1 for size in sizes):
            raise ValueError("hidden layer sizes must be positive")
        return sizes


class TrainConfig(BaseModel):
    """
    learning_rate defaults to 1e-3 because the head is trained from scratch on TF-IDF features.
    2e-5 is the rate used when fine-tuning a pretrained encoder and can still be set here.
    """

    model_config = ConfigDict(frozen=True)

    learning_rate: float = Field(default=1e-3, gt=0)
    beta1: float = Field(default=0.9, ge=0, lt=1)
    beta2: float = Field(default=0.999, ge=0, lt=1)
    epsilon: float = Field(default=1e-8, gt=0)
    max_epochs: int = Field(default=10, ge=1)
    batch_size: int = Field(default=16, ge=1)
    train_fraction: float = Field(default=0.8, gt=0, lt=1)
    patience: int = Field(default=2, ge=1)
    seed: int = settings.DEFAULT_SEED
    decision_threshold: float = 0.5
    category_thresholds: dict[int, float] = {}
    min_df: int = Field(default=1, ge=1)
    max_len: int = Field(default=128, ge=1)


class TextExample(BaseModel):
    model_config = ConfigDict(frozen=True)

    response_id: str
    text: str
    labels: dict[int, Optional[int]] = {}


class EpochRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    epoch: int
    train_loss: float
    validation_loss: float


class TextClassifierModel(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    tokenizer: Tokenizer
    featurizer: Featurizer
    params: dict[str, np.ndarray]
    head: HeadConfig
    train_config: TrainConfig
    category_ids: tuple[int, ...] = EXPLANATION_IDS
    history: list[EpochRecord] = []
    best_epoch: int = 0

    @property
    def n_layers(self) -> int:
        return len(self.head.hidden_sizes) + 1

    @property
    def input_dimension(self) -> int:
        return self.params["W0"].shape[0]


class Adam:
    """Per-parameter Adam with bias-corrected moments, parameters updated in place"""

    def __init__(
        self,
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        epsilon: float = 1e-8,
    ) -> None:
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.m = {}
        self.v = {}
        self.t = 0

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t

        for name in params:
            g = grads[name]
            if name not in self.m:
                self.m[name] = np.zeros_like(params[name])
                self.v[name] = np.zeros_like(params[name])

            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * (g * g)

            m_hat = self.m[name] / bc1
            v_hat = self.v[name] / bc2
            params[name] -= self.lr * m_hat / (np.sqrt(v_hat) + self.epsilon)


def init_params(input_dimension: int, head: HeadConfig, rng) -> dict:
    """He initialisation for ReLU layers, Glorot-style scale for the sigmoid output, zero biases"""
    sizes = [input_dimension, *head.hidden_sizes, head.output_size]
    params = {}
    for layer, (fan_in, fan_out) in enumerate(zip(sizes, sizes[1:])):
        is_output = layer == len(sizes) - 2
        scale = np.sqrt(1.0 / fan_in) if is_output else np.sqrt(2.0 / fan_in)
        params[f"W{layer}"] = rng.normal(0.0, scale, size=(fan_in, fan_out))
        params[f"b{layer}"] = np.zeros(fan_out)

    return params


def layer_count(params: dict) -> int:
    return sum(1 for name in params if name.startswith("W"))


def forward_pass(params: dict, x: np.ndarray, dropout_rate: float = 0.0, rng=None) -> tuple:
    """Returns output logits and the cache needed by backward_pass"""
    n_layers = layer_count(params)
    keep = 1.0 - dropout_rate
    cache = {"a0": x}

    a = x
    for layer in range(n_layers - 1):
        z = a @ params[f"W{layer}"] + params[f"b{layer}"]
        a = np.maximum(z, 0.0)
        if dropout_rate > 0:
            # Inverted dropout, eval mode needs no rescaling
            mask = (rng.uniform(size=a.shape) < keep) / keep
            a = a * mask
            cache[f"mask{layer}"] = mask
        cache[f"z{layer}"] = z
        cache[f"a{layer + 1}"] = a

    last = n_layers - 1
    logits = a @ params[f"W{last}"] + params[f"b{last}"]

    return logits, cache


def bce_from_logits(logits: np.ndarray, y: np.ndarray) -> float:
    """Mean binary cross-entropy over examples and labels, stable for large |logits|"""
    losses = np.maximum(logits, 0) - logits * y + np.log1p(np.exp(-np.abs(logits)))
    return float(np.mean(losses))


def backward_pass(params: dict, logits: np.ndarray, y: np.ndarray, cache: dict) -> dict:
    n_layers = layer_count(params)
    grads = {}

    dz = (expit(logits) - y) / y.size
    for layer in reversed(range(n_layers)):
        a_prev = cache[f"a{layer}"]
        grads[f"W{layer}"] = a_prev.T @ dz
        grads[f"b{layer}"] = dz.sum(axis=0)
        if layer == 0:
            break

        da = dz @ params[f"W{layer}"].T
        if f"mask{layer - 1}" in cache:
            da = da * cache[f"mask{layer - 1}"]
        dz = da * (cache[f"z{layer - 1}"] > 0)

    return grads


def loss_and_grads(params: dict, x: np.ndarray, y: np.ndarray, dropout_rate: float = 0.0, rng=None) -> tuple:
    logits, cache = forward_pass(params, x, dropout_rate, rng)
    return bce_from_logits(logits, y), backward_pass(params, logits, y, cache)


def forward(
    model: TextClassifierModel, features: np.ndarray, mode: Mode = Mode.EVAL, rng=None
) -> np.ndarray:
    features = np.asarray(features, dtype=np.float64)
    single = features.ndim == 1
    x = features[None, :] if single else features

    if x.shape[-1] != model.input_dimension:
        raise DimensionMismatch(
            f"features have dimension {x.shape[-1]}, the model expects {model.input_dimension}"
        )

    dropout_rate = 0.0
    if Mode(mode) == Mode.TRAIN:
        dropout_rate = model.head.dropout_rate
        if rng is None:
            rng = np.random.default_rng(model.train_config.seed)

    logits, _ = forward_pass(model.params, x, dropout_rate, rng)
    probabilities = expit(logits)

    return probabilities[0] if single else probabilities


def accepted_examples(data: list, category_ids: tuple) -> list:
    """Drops examples with a missing label (no imputation) and rejects anything that isn't 0 or 1"""
    accepted = []
    rejected = []
    for example in data:
        values = [example.labels.get(category_id) for category_id in category_ids]
        if any(value is None for value in values):
            rejected.append(example.response_id)
            continue

        for category_id, value in zip(category_ids, values):
            if value not in (0, 1) or isinstance(value, bool):
                raise NonBinaryLabel(
                    f"response {example.response_id} has label {value!r} for category {category_id}"
                )
        accepted.append(example)

    if rejected:
        preview = ", ".join(rejected[:5])
        msg.warn(f"Train text: rejected {len(rejected)} records with missing labels ({preview})")

    return accepted


def label_matrix(data: list, category_ids: tuple) -> np.ndarray:
    return np.array(
        [[example.labels[category_id] for category_id in category_ids] for example in data],
        dtype=np.float64,
    )


def warn_single_class_labels(y: np.ndarray, category_ids: tuple) -> None:
    for column, category_id in enumerate(category_ids):
        positives = int(y[:, column].sum())
        if positives == 0 or positives == len(y):
            kind = "positive" if positives == 0 else "negative"
            msg.warn(f"Train text: category {category_id} has no {kind} training examples")


def train(
    data: list,
    head: HeadConfig = HeadConfig(),
    cfg: TrainConfig = TrainConfig(),
    validation: Optional[list] = None,
    category_ids: tuple = EXPLANATION_IDS,
    show_progress: bool = False,
) -> TextClassifierModel:
    """
    Seeded 80/20 split, mini-batch Adam, early stopping after `patience` epochs without a strictly lower validation
    loss. Returns the weights of the best validation epoch.
    An explicit validation list replaces the split, all of data is then used for training.
    """
    if head.output_size != len(category_ids):
        raise InvalidParameter(
            f"head has {head.output_size} outputs for {len(category_ids)} categories"
        )

    data = accepted_examples(data, category_ids)
    if len(data) < 2:
        raise TooFewExamples(f"training needs at least 2 labelled examples, got {len(data)}")

    if validation is None:
        train_idx, val_idx = train_test_split(
            np.arange(len(data)),
            train_size=cfg.train_fraction,
            random_state=cfg.seed,
            shuffle=True,
        )
        train_data = [data[i] for i in train_idx]
        val_data = [data[i] for i in val_idx]
    else:
        train_data = data
        val_data = accepted_examples(validation, category_ids)
        if not val_data:
            raise TooFewExamples("validation set has no labelled examples")

    tokenizer = Tokenizer(max_len=cfg.max_len)
    featurizer = fit_featurizer([tokenizer.tokenize(e.text) for e in train_data], cfg.min_df)

    x_train = featurizer.transform([tokenizer.tokenize(e.text) for e in train_data])
    x_val = featurizer.transform([tokenizer.tokenize(e.text) for e in val_data])
    y_train = label_matrix(train_data, category_ids)
    y_val = label_matrix(val_data, category_ids)
    warn_single_class_labels(y_train, category_ids)

    rng = np.random.default_rng(cfg.seed)
    params = init_params(featurizer.dimension, head, rng)
    optimizer = Adam(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon)

    history = []
    best_loss = np.inf
    best_params = copy.deepcopy(params)
    best_epoch = 0
    stale = 0

    for epoch in tqdm(range(1, cfg.max_epochs + 1), desc="Train text", disable=not show_progress):
        order = rng.permutation(len(x_train))
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            _, grads = loss_and_grads(
                params, x_train[batch], y_train[batch], head.dropout_rate, rng
            )
            optimizer.step(params, grads)

        train_loss = bce_from_logits(forward_pass(params, x_train)[0], y_train)
        val_loss = bce_from_logits(forward_pass(params, x_val)[0], y_val)
        history.append(EpochRecord(epoch=epoch, train_loss=train_loss, validation_loss=val_loss))

        # A tie with the best loss is not an improvement
        if val_loss < best_loss:
            best_loss = val_loss
            best_params = copy.deepcopy(params)
            best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break

    return TextClassifierModel(
        tokenizer=tokenizer,
        featurizer=featurizer,
        params=best_params,
        head=head,
        train_config=cfg,
        category_ids=tuple(category_ids),
        history=history,
        best_epoch=best_epoch,
    )


def featurize(model: TextClassifierModel, texts: list) -> np.ndarray:
    return model.featurizer.transform([model.tokenizer.tokenize(text) for text in texts])


def predict_proba(model: TextClassifierModel, texts: list) -> np.ndarray:
    if not texts:
        return np.zeros((0, len(model.category_ids)))
    return forward(model, featurize(model, texts), Mode.EVAL)


def thresholds_for(model: TextClassifierModel, threshold: Optional[float] = None) -> np.ndarray:
    default = model.train_config.decision_threshold if threshold is None else threshold
    return np.array(
        [
            model.train_config.category_thresholds.get(category_id, default)
            for category_id in model.category_ids
        ]
    )


def predict(
    model: TextClassifierModel, texts: list, threshold: Optional[float] = None
) -> list:
    """Bit is 1 iff probability >= threshold. The model modality is left absent in the returned vectors"""
    probabilities = predict_proba(model, texts)
    bits = (probabilities >= thresholds_for(model, threshold)).astype(int)

    return [
        CategoryVector(
            scores={category_id: int(bit) for category_id, bit in zip(model.category_ids, row)},
            model_absent=True,
        )
        for row in bits
    ]


def cross_validate(
    data: list,
    head: HeadConfig = HeadConfig(),
    cfg: TrainConfig = TrainConfig(),
    folds: int = 5,
    category_ids: tuple = EXPLANATION_IDS,
) -> dict:
    """Out-of-fold predictions keyed by response id, for the training-stage agreement report"""
    data = accepted_examples(data, category_ids)
    if not 2 <= folds <= len(data):
        raise InvalidParameter(f"folds must be between 2 and {len(data)}, got {folds}")

    predictions = {}
    splitter = KFold(n_splits=folds, shuffle=True, random_state=cfg.seed)
    for fold, (train_idx, test_idx) in enumerate(splitter.split(np.arange(len(data))), start=1):
        msg.info(f"Cross validation: fold {fold} of {folds}")
        model = train([data[i] for i in train_idx], head, cfg, category_ids=category_ids)
        held_out = [data[i] for i in test_idx]
        for example, vector in zip(held_out, predict(model, [e.text for e in held_out])):
            predictions[example.response_id] = vector

    return {example.response_id: predictions[example.response_id] for example in data}


def save_model(model: TextClassifierModel, path: str) -> None:
    payload = {
        "format_version": settings.MODEL_FORMAT_VERSION,
        "tool_version": settings.TOOL_VERSION,
        "vocabulary": model.featurizer.vocabulary,
        "vocabulary_digest": model.featurizer.digest(),
        "idf": model.featurizer.idf,
        "params": model.params,
        "max_len": model.tokenizer.max_len,
        "head": model.head.model_dump(mode="json"),
        "train_config": model.train_config.model_dump(mode="json"),
        "category_ids": list(model.category_ids),
        "history": [record.model_dump() for record in model.history],
        "best_epoch": model.best_epoch,
    }
    srsly.write_msgpack(path, payload)


def load_model(path: str, expected_vocabulary_digest: Optional[str] = None) -> TextClassifierModel:
    payload = srsly.read_msgpack(path)

    version = payload.get("format_version")
    if version != settings.MODEL_FORMAT_VERSION:
        raise VersionMismatch(
            f"model format version {version}, this tool reads version {settings.MODEL_FORMAT_VERSION}",
            source=path,
        )

    vocabulary = payload["vocabulary"]
    digest = vocabulary_digest(vocabulary)
    if digest != payload["vocabulary_digest"]:
        raise VersionMismatch("stored vocabulary does not match its digest", source=path)
    if expected_vocabulary_digest is not None and digest != expected_vocabulary_digest:
        raise VersionMismatch(
            "model was trained with a different vocabulary than expected", source=path
        )

    params = {name: np.array(value) for name, value in payload["params"].items()}
    if params["W0"].shape[0] != len(vocabulary):
        raise VersionMismatch(
            f"input layer has {params['W0'].shape[0]} rows for a vocabulary of {len(vocabulary)}",
            source=path,
        )

    return TextClassifierModel(
        tokenizer=Tokenizer(max_len=payload["max_len"]),
        featurizer=Featurizer(vocabulary, np.array(payload["idf"])),
        params=params,
        head=HeadConfig(**payload["head"]),
        train_config=TrainConfig(**payload["train_config"]),
        category_ids=tuple(payload["category_ids"]),
        history=[EpochRecord(**record) for record in payload["history"]],
        best_epoch=payload["best_epoch"],
    )
