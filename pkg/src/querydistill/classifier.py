"""Distilled low-latency multi-label entity classifier.

A pluggable text encoder feeds one small two-layer head per entity; each
head ends in a sigmoid, so the entities are scored independently. Training
uses the numerically stable logistic BCE (log-sum-exp form, never
sigmoid-then-log) on weak indicator labels, AdamW, per-epoch dev micro-F1
checkpointing with early stopping, and is bit-deterministic for a fixed
seed. Decision thresholds are tuned per entity after training: maximize F1,
or match a reference recall/precision.

The encoder is deliberately abstract: the built-in hashed n-gram backend
gives a fully self-contained pipeline at desk scale, and the precomputed-
vector backend plugs in real contextual embeddings computed offline. The
heads, loss, and threshold machinery do not care which one produced the
features.
"""

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from .annotations import Confidence
from .errors import (EmptyDatasetError, MissingEmbeddingError, ModelError,
                     NanLossError)
from .features import HashedNgramEmbedder
from .optim import AdamW


# ---------------------------------------------------------------------------
# Encoder backends
# ---------------------------------------------------------------------------

class HashedNgramBackend:
    """Built-in encoder: signed hashed char 3-5-gram counts, L2-normalized."""

    kind = "hashed_ngram"

    def __init__(self, dim=512, seed=0):
        self._embedder = HashedNgramEmbedder(dim=dim, seed=seed)
        self.dim = dim
        self.seed = seed

    def encode(self, text):
        return self._embedder.embed(text)

    def descriptor(self):
        return {"kind": self.kind, "dim": self.dim, "seed": self.seed}


class PrecomputedVectorBackend:
    """Encoder that looks up vectors computed offline, keyed by query id."""

    kind = "precomputed"

    def __init__(self, path):
        from .data import query_id as make_id
        self._make_id = make_id
        self._path = str(path)
        self._vectors = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    record = json.loads(line)
                    self._vectors[record["id"]] = np.asarray(
                        record["vector"], dtype=float)
        if not self._vectors:
            raise MissingEmbeddingError(f"no vectors in {path}")
        dims = {v.shape[0] for v in self._vectors.values()}
        if len(dims) != 1:
            raise ModelError(f"inconsistent vector dims in {path}: {sorted(dims)}")
        self.dim = dims.pop()

    def encode(self, text):
        qid = self._make_id(text)
        try:
            return self._vectors[qid]
        except KeyError:
            raise MissingEmbeddingError(
                f"no precomputed vector for query {text!r} (id {qid})") from None

    def descriptor(self):
        return {"kind": self.kind, "dim": self.dim, "path": self._path}


def backend_from_descriptor(descriptor):
    kind = descriptor.get("kind")
    if kind == HashedNgramBackend.kind:
        return HashedNgramBackend(dim=descriptor["dim"], seed=descriptor["seed"])
    if kind == PrecomputedVectorBackend.kind:
        return PrecomputedVectorBackend(descriptor["path"])
    raise ModelError(f"unknown encoder backend kind: {kind!r}")


def encode(backend, text):
    """Feature vector for one query text."""
    if not text.strip():
        raise ValueError("query text is empty")
    return backend.encode(text)


# ---------------------------------------------------------------------------
# Weak labels
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WeakLabelSet:
    """Indicator matrix over registry entities for a list of queries.

    Row order follows ``query_ids``. ``min_confidence`` records the filter
    that produced the indicators; ``provenance`` names the annotator.
    """

    registry_hash: str
    query_ids: tuple
    indicators: np.ndarray = field(compare=False)
    provenance: str = ""
    min_confidence: Confidence = Confidence.HIGH

    def __post_init__(self):
        ind = np.asarray(self.indicators, dtype=np.int8)
        if ind.ndim != 2 or ind.shape[0] != len(self.query_ids):
            raise ModelError("indicator shape does not match query ids")
        object.__setattr__(self, "indicators", ind)
        object.__setattr__(self, "query_ids", tuple(self.query_ids))


def weak_labels_from_annotations(registry, annotations, min_confidence=Confidence.HIGH,
                                 provenance=""):
    """Indicator labels: entity set iff annotated confidence >= the filter.

    ``annotations`` maps query_id -> Annotation; rows are sorted by query id
    for determinism. The empty annotation ("None") yields an all-zero row.
    """
    query_ids = tuple(sorted(annotations))
    indicators = np.zeros((len(query_ids), len(registry)), dtype=np.int8)
    for row, qid in enumerate(query_ids):
        for entity, conf in annotations[qid].entities.items():
            if conf >= min_confidence:
                indicators[row, registry.column(entity)] = 1
    return WeakLabelSet(
        registry_hash=registry.hash,
        query_ids=query_ids,
        indicators=indicators,
        provenance=provenance,
        min_confidence=min_confidence,
    )


@dataclass(frozen=True)
class LabeledQueries:
    """Texts paired with indicator labels, aligned row by row."""

    texts: tuple
    labels: np.ndarray = field(compare=False)
    registry_hash: str = ""

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=float)
        if labels.ndim != 2 or labels.shape[0] != len(self.texts):
            raise ModelError("labels shape does not match texts")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "texts", tuple(self.texts))

    def __len__(self):
        return len(self.texts)


def labeled_queries(records, weak_labels):
    """Join query records with a WeakLabelSet by query id."""
    by_id = {qid: row for row, qid in enumerate(weak_labels.query_ids)}
    texts, rows = [], []
    for record in records:
        if record.id in by_id:
            texts.append(record.text)
            rows.append(by_id[record.id])
    return LabeledQueries(
        texts=tuple(texts),
        labels=weak_labels.indicators[rows].astype(float),
        registry_hash=weak_labels.registry_hash,
    )


# ---------------------------------------------------------------------------
# Model
# ---------------------------------------------------------------------------

@dataclass
class ClassifierModel:
    """Per-entity heads over a shared encoder.

    Head parameters are stacked across entities: U1 (E, D, m), c1 (E, m),
    U2 (E, m), c2 (E,). ``thresholds`` holds the per-entity decision cut;
    an entity is predicted iff its probability >= threshold.
    """

    backend_descriptor: dict
    entity_ids: tuple
    U1: np.ndarray
    c1: np.ndarray
    U2: np.ndarray
    c2: np.ndarray
    thresholds: np.ndarray
    registry_hash: str
    train_config: dict = field(default_factory=dict)

    def __post_init__(self):
        self.U1 = np.asarray(self.U1, dtype=float)
        self.c1 = np.asarray(self.c1, dtype=float)
        self.U2 = np.asarray(self.U2, dtype=float)
        self.c2 = np.asarray(self.c2, dtype=float)
        self.thresholds = np.asarray(self.thresholds, dtype=float)
        self.entity_ids = tuple(self.entity_ids)
        E = len(self.entity_ids)
        if self.U1.shape[0] != E or self.U2.shape[0] != E or self.c2.shape != (E,):
            raise ModelError("head parameter shapes do not match entity count")
        if self.thresholds.shape != (E,):
            raise ModelError("need exactly one threshold per entity")
        if ((self.thresholds <= 0) | (self.thresholds >= 1)).any():
            raise ModelError("thresholds must lie in (0, 1)")

    @property
    def feature_dim(self):
        return self.U1.shape[1]

    @property
    def head_dim(self):
        return self.U1.shape[2]

    def params(self):
        return {"U1": self.U1, "c1": self.c1, "U2": self.U2, "c2": self.c2}

    def backend(self):
        return backend_from_descriptor(self.backend_descriptor)


@dataclass(frozen=True)
class ClassifierTrainConfig:
    head_dim: int = 32
    learning_rate: float = None  # resolved per backend: 1e-3 built-in, 1e-5 otherwise
    epochs: int = 20
    batch_size: int = 32
    patience: int = 5
    seed: int = 0
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def resolve_learning_rate(self, backend):
        if self.learning_rate is not None:
            return self.learning_rate
        return 1e-3 if backend.kind == HashedNgramBackend.kind else 1e-5


def stable_bce(logits, targets):
    """Logistic BCE in the overflow-safe log-sum-exp form, elementwise."""
    z = np.asarray(logits, dtype=float)
    y = np.asarray(targets, dtype=float)
    return np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))


def _sigmoid(z):
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def heads_forward(model, X):
    """Logits for a feature batch: (B, D) -> (B, E)."""
    A = np.einsum("bd,edm->bem", X, model.U1) + model.c1
    G = np.maximum(A, 0.0)
    Z = np.einsum("bem,em->be", G, model.U2) + model.c2
    return Z, {"A": A, "G": G, "X": X}


def classifier_loss_and_grads(model, X, Y):
    """Mean logistic BCE over (query, entity) cells, with analytic grads."""
    B, E = Y.shape
    Z, cache = heads_forward(model, X)
    loss = float(stable_bce(Z, Y).mean())
    dZ = (_sigmoid(Z) - Y) / (B * E)
    grads = {
        "c2": dZ.sum(axis=0),
        "U2": np.einsum("bem,be->em", cache["G"], dZ),
    }
    dG = np.einsum("be,em->bem", dZ, model.U2)
    dA = dG * (cache["A"] > 0)
    grads["c1"] = dA.sum(axis=(0,))
    grads["U1"] = np.einsum("bd,bem->edm", cache["X"], dA)
    return loss, grads


def _init_classifier(backend, entity_ids, registry_hash, config):
    rng = np.random.default_rng(config.seed)
    D, m, E = backend.dim, config.head_dim, len(entity_ids)
    bound1 = 1.0 / np.sqrt(D)
    bound2 = 1.0 / np.sqrt(m)
    return ClassifierModel(
        backend_descriptor=backend.descriptor(),
        entity_ids=tuple(entity_ids),
        U1=rng.uniform(-bound1, bound1, size=(E, D, m)),
        c1=rng.uniform(-bound1, bound1, size=(E, m)),
        U2=rng.uniform(-bound2, bound2, size=(E, m)),
        c2=rng.uniform(-bound2, bound2, size=E),
        thresholds=np.full(E, 0.5),
        registry_hash=registry_hash,
        train_config=asdict(config),
    )


def _encode_all(backend, texts):
    cache = {}
    X = np.zeros((len(texts), backend.dim))
    for i, text in enumerate(texts):
        vec = cache.get(text)
        if vec is None:
            vec = backend.encode(text)
            cache[text] = vec
        X[i] = vec
    return X


def _micro_f1_at_half(probs, labels):
    pred = probs >= 0.5
    gold = labels > 0.5
    tp = float((pred & gold).sum())
    fp = float((pred & ~gold).sum())
    fn = float((~pred & gold).sum())
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def train_classifier(train, dev, config, registry, backend=None):
    """Train per-entity heads on weak labels.

    Checkpoints on dev micro-F1 (decisions at probability 0.5) each epoch
    and early-stops after ``config.patience`` epochs without improvement;
    the returned model is the best checkpoint. Also returns a history of
    (epoch, train_loss, dev_micro_f1) rows. Deterministic given config.seed.
    """
    if len(train) == 0:
        raise EmptyDatasetError("train_classifier got an empty train set")
    if train.labels.shape[1] != len(registry):
        raise ModelError("train labels do not cover the registry")
    if train.registry_hash and train.registry_hash != registry.hash:
        raise ModelError("train labels were built against a different registry")

    if backend is None:
        backend = HashedNgramBackend()
    lr = config.resolve_learning_rate(backend)

    X_train = _encode_all(backend, train.texts)
    Y_train = train.labels
    X_dev = _encode_all(backend, dev.texts) if len(dev) else None
    Y_dev = dev.labels if len(dev) else None

    model = _init_classifier(backend, registry.ids, registry.hash, config)
    optimizer = AdamW(model.params(), lr, weight_decay=config.weight_decay,
                      beta1=config.beta1, beta2=config.beta2, eps=config.eps,
                      decay_params=("U1", "U2"))

    order_rng = np.random.default_rng(config.seed + 1)
    n = len(train)
    best = {k: v.copy() for k, v in model.params().items()}
    best_f1 = -1.0
    stale = 0
    history = []
    for epoch in range(config.epochs):
        order = order_rng.permutation(n)
        epoch_losses = []
        for batch_index, start in enumerate(range(0, n, config.batch_size)):
            rows = order[start:start + config.batch_size]
            loss, grads = classifier_loss_and_grads(model, X_train[rows], Y_train[rows])
            if not np.isfinite(loss):
                raise NanLossError(
                    f"classifier loss is not finite at epoch {epoch} "
                    f"batch {batch_index}", epoch=epoch, batch=batch_index)
            optimizer.step(grads)
            epoch_losses.append(loss)

        if X_dev is not None:
            dev_probs = _sigmoid(heads_forward(model, X_dev)[0])
            dev_f1 = _micro_f1_at_half(dev_probs, Y_dev)
        else:
            dev_f1 = float("nan")
        history.append((epoch, float(np.mean(epoch_losses)), dev_f1))

        if X_dev is not None:
            if dev_f1 > best_f1:
                best_f1 = dev_f1
                best = {k: v.copy() for k, v in model.params().items()}
                stale = 0
            else:
                stale += 1
                if stale >= config.patience:
                    break

    if X_dev is not None:
        for key, value in best.items():
            getattr(model, key)[...] = value
    return model, history


# ---------------------------------------------------------------------------
# Prediction
# ---------------------------------------------------------------------------

def predict_probs(model, text, backend=None, registry=None):
    """Per-entity probabilities for one query (sigmoid of each head)."""
    if registry is not None and registry.hash != model.registry_hash:
        raise ModelError("model was trained against a different registry")
    if backend is None:
        backend = model.backend()
    x = encode(backend, text)
    logits, _ = heads_forward(model, x[None, :])
    return _sigmoid(logits[0])


def predict_probs_batch(model, texts, backend=None):
    if backend is None:
        backend = model.backend()
    X = _encode_all(backend, texts)
    logits, _ = heads_forward(model, X)
    return _sigmoid(logits)


def apply_thresholds(model, probs):
    """Entity ids whose probability clears the per-entity threshold (>=)."""
    probs = np.asarray(probs, dtype=float)
    if probs.shape != model.thresholds.shape:
        raise ModelError("probability vector does not match entity count")
    return {
        entity for entity, p, t in
        zip(model.entity_ids, probs, model.thresholds) if p >= t
    }


# ---------------------------------------------------------------------------
# Threshold tuning
# ---------------------------------------------------------------------------

MAX_F1 = "max_f1"
MATCH_RECALL = "match_recall"
MATCH_PRECISION = "match_precision"


@dataclass(frozen=True)
class ThresholdChoice:
    """Outcome of tuning one entity's threshold.

    ``attained`` is False when the requested target was unreachable; the
    threshold then sits at the closest achievable operating point and
    ``achieved`` reports the metric value actually reached there.
    """

    threshold: float
    achieved: float
    attained: bool = True


def _confusion_at(probs, labels, threshold):
    pred = probs >= threshold
    tp = int((pred & labels).sum())
    fp = int((pred & ~labels).sum())
    fn = int((~pred & labels).sum())
    return tp, fp, fn


def _prf(tp, fp, fn):
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def _candidates(probs):
    return sorted(set(np.asarray(probs, dtype=float).tolist()) | {0.0, 1.0})


def tune_threshold_for_entity(probs, labels, mode, target=None):
    """Pick one entity's threshold by sweeping the candidate set.

    Candidates are the entity's unique dev probabilities plus {0, 1}; the
    decision rule is ``prob >= threshold`` everywhere. MAX_F1 maximizes F1
    (ties to the larger threshold). MATCH_RECALL takes the largest threshold
    whose recall >= target; MATCH_PRECISION the smallest threshold whose
    precision >= target. Unreachable targets yield attained=False with the
    closest achievable value.
    """
    probs = np.asarray(probs, dtype=float)
    labels = np.asarray(labels) > 0.5
    candidates = _candidates(probs)

    if mode == MAX_F1:
        best_t, best_f1 = 0.0, -1.0
        for t in candidates:
            _, _, f1 = _prf(*_confusion_at(probs, labels, t))
            if f1 > best_f1 or (f1 == best_f1 and t > best_t):
                best_t, best_f1 = t, f1
        return ThresholdChoice(threshold=best_t, achieved=best_f1)

    if mode == MATCH_RECALL:
        if target is None:
            raise ModelError("MATCH_RECALL needs a target recall")
        feasible = []
        closest = (None, -1.0)
        for t in candidates:
            _, recall, _ = _prf(*_confusion_at(probs, labels, t))
            if recall >= target:
                feasible.append((t, recall))
            if recall > closest[1] or (recall == closest[1] and
                                       (closest[0] is None or t > closest[0])):
                closest = (t, recall)
        if feasible:
            t, recall = max(feasible)
            return ThresholdChoice(threshold=t, achieved=recall)
        return ThresholdChoice(threshold=closest[0], achieved=closest[1],
                               attained=False)

    if mode == MATCH_PRECISION:
        if target is None:
            raise ModelError("MATCH_PRECISION needs a target precision")
        closest = (None, -1.0)
        for t in candidates:
            precision, _, _ = _prf(*_confusion_at(probs, labels, t))
            if precision >= target:
                return ThresholdChoice(threshold=t, achieved=precision)
            if precision > closest[1]:
                closest = (t, precision)
        return ThresholdChoice(threshold=closest[0], achieved=closest[1],
                               attained=False)

    raise ModelError(f"unknown threshold mode: {mode!r}")


def tune_thresholds(model, dev, mode, targets=None, backend=None):
    """Tune every entity's threshold on a labeled dev set.

    ``targets`` maps entity id -> target value for the matching modes.
    Returns {entity: ThresholdChoice}; apply the result to the model with
    ``set_thresholds``.
    """
    if len(dev) == 0:
        raise EmptyDatasetError("tune_thresholds got an empty dev set")
    probs = predict_probs_batch(model, dev.texts, backend=backend)
    choices = {}
    for col, entity in enumerate(model.entity_ids):
        target = targets.get(entity) if targets else None
        choices[entity] = tune_threshold_for_entity(
            probs[:, col], dev.labels[:, col], mode, target=target)
    return choices


def set_thresholds(model, choices):
    """Write tuned thresholds into the model (clamped inside (0, 1))."""
    thresholds = model.thresholds.copy()
    for col, entity in enumerate(model.entity_ids):
        if entity in choices:
            t = choices[entity].threshold
            thresholds[col] = min(max(t, 1e-9), 1.0 - 1e-9)
    model.thresholds = thresholds
    return model


def write_predictions_jsonl(path, model, records, backend=None):
    """Batch prediction output: one JSON line per query with every entity's
    probability, sorted descending. Thresholded labels are the caller's
    business (``apply_thresholds``); this file keeps the full distribution."""
    if backend is None:
        backend = model.backend()
    probs = predict_probs_batch(model, [r.text for r in records],
                                backend=backend)
    with open(path, "w", encoding="utf-8") as fh:
        for row, record in enumerate(records):
            labels = sorted(
                ({"entity": e, "prob": float(p)}
                 for e, p in zip(model.entity_ids, probs[row])),
                key=lambda item: -item["prob"])
            fh.write(json.dumps({"id": record.id, "text": record.text,
                                 "labels": labels}) + "\n")


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def save_classifier(path, model, history=None):
    payload = {
        "kind": "classifier",
        "backend": model.backend_descriptor,
        "entity_ids": list(model.entity_ids),
        "registry_hash": model.registry_hash,
        "train_config": model.train_config,
        "thresholds": model.thresholds.tolist(),
        "weights": {
            "U1": model.U1.tolist(),
            "c1": model.c1.tolist(),
            "U2": model.U2.tolist(),
            "c2": model.c2.tolist(),
        },
    }
    if history is not None:
        payload["history"] = [[e, l, f] for e, l, f in history]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")


def load_classifier(path):
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("kind") != "classifier":
        raise ModelError(f"{path} is not a classifier model file")
    weights = payload["weights"]
    return ClassifierModel(
        backend_descriptor=payload["backend"],
        entity_ids=tuple(payload["entity_ids"]),
        U1=np.array(weights["U1"], dtype=float),
        c1=np.array(weights["c1"], dtype=float),
        U2=np.array(weights["U2"], dtype=float),
        c2=np.array(weights["c2"], dtype=float),
        thresholds=np.array(payload["thresholds"], dtype=float),
        registry_hash=payload["registry_hash"],
        train_config=payload.get("train_config", {}),
    )
