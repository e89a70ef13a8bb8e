"""Persona-selection router.

A two-layer feed-forward network (linear, ReLU, dropout, linear) maps a
query embedding to a softmax relevance distribution over personas. There is
no direct supervision for "which persona is relevant", so the router trains
through an auxiliary task: the relevance vector is multiplied into the
query's Persona x Entity confidence matrix (values scaled to [0, 1]) to
produce per-entity scores, and a mean per-entity binary cross-entropy
against gold entity labels backpropagates into the router. Softmax keeps
the entity scores a convex combination of matrix rows, hence valid
Bernoulli parameters for that loss.

All numerics are float64 numpy; training is single-threaded and bit-
deterministic for a fixed seed.
"""

import csv
import json
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import (EmptyDatasetError, MissingEmbeddingError, ModelError,
                     NanLossError)
from .features import HashedNgramEmbedder
from .optim import AdamW

BCE_EPS = 1e-7
CONFIDENCE_SCALE = 3.0  # matrix values {0..3} -> [0, 1]


# ---------------------------------------------------------------------------
# Query embeddings
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QueryEmbedding:
    vector: np.ndarray
    provider: str = ""

    def __post_init__(self):
        vec = np.asarray(self.vector, dtype=float)
        if vec.ndim != 1 or not np.isfinite(vec).all():
            raise ModelError("embedding must be a finite 1-d vector")
        object.__setattr__(self, "vector", vec)

    @property
    def dim(self):
        return self.vector.shape[0]


class NgramEmbeddingProvider:
    """Built-in desk-scale provider: hashed char 3-5-gram projection."""

    def __init__(self, dim=64, seed=0):
        self._embedder = HashedNgramEmbedder(dim=dim, seed=seed)
        self.tag = f"ngram:dim={dim}:seed={seed}"

    @property
    def dim(self):
        return self._embedder.dim

    def embed(self, text):
        return QueryEmbedding(self._embedder.embed(text), provider=self.tag)


class PrecomputedEmbeddingProvider:
    """Looks up externally computed vectors by query id.

    File format: JSON Lines {"id": ..., "vector": [...]}. Use this to plug
    in a real contextual embedding service run offline.
    """

    def __init__(self, path):
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
        self.tag = f"precomputed:{path}"

    def embed_id(self, query_id):
        try:
            return QueryEmbedding(self._vectors[query_id], provider=self.tag)
        except KeyError:
            raise MissingEmbeddingError(
                f"no precomputed embedding for query id {query_id!r}") from None

    def embed(self, text):
        from .data import query_id as make_id
        return self.embed_id(make_id(text))


def embed_query(provider, text):
    """Embed one query text with the given provider."""
    if not text.strip():
        raise ValueError("query text is empty")
    return provider.embed(text)


# ---------------------------------------------------------------------------
# Model
# ---------------------------------------------------------------------------

@dataclass
class RouterModel:
    """Parameters of the persona-selection network.

    W1: (d, h), b1: (h,), W2: (h, P), b2: (P,). ``persona_ids`` pins the
    row order of every confidence matrix this model may be applied to, and
    ``registry_hash`` pins the entity columns seen in training.
    """

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    dropout_rate: float
    persona_ids: tuple
    registry_hash: str
    embedding_provider: str = ""
    train_config: dict = field(default_factory=dict)

    def __post_init__(self):
        self.W1 = np.asarray(self.W1, dtype=float)
        self.b1 = np.asarray(self.b1, dtype=float)
        self.W2 = np.asarray(self.W2, dtype=float)
        self.b2 = np.asarray(self.b2, dtype=float)
        self.persona_ids = tuple(self.persona_ids)
        d, h = self.W1.shape
        if self.b1.shape != (h,) or self.W2.shape[0] != h:
            raise ModelError("hidden layer shapes are inconsistent")
        if self.W2.shape[1] != len(self.persona_ids) or self.b2.shape != (len(self.persona_ids),):
            raise ModelError("output layer does not match persona count")
        if not 0 <= self.dropout_rate < 1:
            raise ModelError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")

    @property
    def input_dim(self):
        return self.W1.shape[0]

    @property
    def hidden_dim(self):
        return self.W1.shape[1]

    @property
    def persona_count(self):
        return len(self.persona_ids)

    def params(self):
        return {"W1": self.W1, "b1": self.b1, "W2": self.W2, "b2": self.b2}


@dataclass(frozen=True)
class RouterTrainConfig:
    hidden_dim: int = 64
    dropout_rate: float = 0.1
    learning_rate: float = 1e-3
    epochs: int = 20
    batch_size: int = 32
    seed: int = 0
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    entity_loss_weights: tuple = ()  # optional per-entity weights in the BCE mean

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ModelError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.epochs < 1:
            raise ModelError(f"epochs must be >= 1, got {self.epochs}")


def _dropout_mask(rng, shape, rate):
    return (rng.random(shape) >= rate).astype(float) / (1.0 - rate)


def router_forward(model, embedding, train_mode=False, seed=0):
    """Relevance distribution over personas for one query.

    ReLU hidden layer, inverted-scaling dropout in train mode only, softmax
    output. Inference (train_mode=False) is deterministic and ignores seed.
    """
    vec = embedding.vector if isinstance(embedding, QueryEmbedding) else np.asarray(embedding, dtype=float)
    if vec.shape != (model.input_dim,):
        raise ModelError(
            f"embedding dim {vec.shape} does not match model input {model.input_dim}")
    relevance, _ = _forward_batch(model, vec[None, :], train_mode=train_mode, seed=seed)
    return relevance[0]


def _forward_batch(model, X, train_mode, seed):
    """Batched forward pass; returns (relevance B x P, cache for backward)."""
    A1 = X @ model.W1 + model.b1
    H = np.maximum(A1, 0.0)
    if train_mode and model.dropout_rate > 0:
        rng = np.random.default_rng(seed)
        mask = _dropout_mask(rng, H.shape, model.dropout_rate)
    else:
        mask = None
    Hd = H * mask if mask is not None else H
    Z = Hd @ model.W2 + model.b2
    Z = Z - Z.max(axis=1, keepdims=True)
    expZ = np.exp(Z)
    R = expZ / expZ.sum(axis=1, keepdims=True)
    cache = {"X": X, "A1": A1, "Hd": Hd, "mask": mask, "R": R}
    return R, cache


def predict_entities(relevance, matrix, registry_hash=None):
    """Entity scores: relevance-weighted mean of the scaled matrix rows.

    Matrix values are divided by 3 so scores land in [0, 1]; with softmax
    relevance the result is a convex combination of persona rows.
    """
    r = np.asarray(relevance, dtype=float)
    if r.shape != (matrix.persona_count,):
        raise ModelError(
            f"relevance length {r.shape} does not match "
            f"{matrix.persona_count} matrix rows")
    if registry_hash is not None and registry_hash != matrix.registry_hash:
        raise ModelError("matrix registry_hash does not match")
    return r @ (matrix.values / CONFIDENCE_SCALE)


def router_loss_and_grads(model, X, matrices, targets, train_mode=False, seed=0,
                          entity_weights=None):
    """Loss and analytic parameter gradients for a batch.

    X: (B, d) embeddings; matrices: (B, P, E) scaled-to-{0..3} integer
    values; targets: (B, E) gold indicators. Loss is the mean over batch
    and entities of binary cross-entropy between the routed entity scores
    (clamped away from {0, 1}) and the gold indicators.
    """
    B, E = targets.shape
    Mt = np.asarray(matrices, dtype=float) / CONFIDENCE_SCALE
    R, cache = _forward_batch(model, X, train_mode=train_mode, seed=seed)
    S = np.einsum("bp,bpe->be", R, Mt)

    clipped = np.clip(S, BCE_EPS, 1.0 - BCE_EPS)
    if entity_weights is None:
        w = np.full(E, 1.0 / E)
    else:
        w = np.asarray(entity_weights, dtype=float)
        w = w / w.sum()
    losses = -(targets * np.log(clipped) + (1.0 - targets) * np.log1p(-clipped))
    loss = float((losses * w).sum(axis=1).mean())

    # dL/dS, respecting the clip (zero gradient where the clamp is active)
    dS = (-(targets / clipped) + (1.0 - targets) / (1.0 - clipped)) * w / B
    dS[(S < BCE_EPS) | (S > 1.0 - BCE_EPS)] = 0.0

    dR = np.einsum("be,bpe->bp", dS, Mt)
    # softmax backward: dZ = R * (dR - <dR, R>)
    dZ = cache["R"] * (dR - (dR * cache["R"]).sum(axis=1, keepdims=True))
    grads = {
        "b2": dZ.sum(axis=0),
        "W2": cache["Hd"].T @ dZ,
    }
    dHd = dZ @ model.W2.T
    dH = dHd * cache["mask"] if cache["mask"] is not None else dHd
    dA1 = dH * (cache["A1"] > 0)
    grads["b1"] = dA1.sum(axis=0)
    grads["W1"] = cache["X"].T @ dA1
    return loss, grads


def _init_model(d, P, config, persona_ids, registry_hash, provider_tag):
    """Seeded uniform fan-in initialization."""
    rng = np.random.default_rng(config.seed)
    bound1 = 1.0 / np.sqrt(d)
    bound2 = 1.0 / np.sqrt(config.hidden_dim)
    return RouterModel(
        W1=rng.uniform(-bound1, bound1, size=(d, config.hidden_dim)),
        b1=rng.uniform(-bound1, bound1, size=config.hidden_dim),
        W2=rng.uniform(-bound2, bound2, size=(config.hidden_dim, P)),
        b2=rng.uniform(-bound2, bound2, size=P),
        dropout_rate=config.dropout_rate,
        persona_ids=persona_ids,
        registry_hash=registry_hash,
        embedding_provider=provider_tag,
        train_config=asdict(config),
    )


def train_router(examples, config, registry):
    """Train the router on (QueryEmbedding, ConfidenceMatrix, gold label set)
    triples.

    Gold label sets are converted to indicator vectors in registry column
    order. Returns (RouterModel, loss_history) where loss_history is a list
    of (epoch, batch, loss) rows. Mini-batch AdamW; deterministic given
    config.seed.
    """
    if not examples:
        raise EmptyDatasetError("train_router got no examples")

    first_emb, first_matrix, _ = examples[0]
    d = first_emb.dim
    persona_ids = first_matrix.persona_ids
    registry_hash = first_matrix.registry_hash
    if registry.hash != registry_hash:
        raise ModelError("examples were built against a different registry")
    E = len(registry)

    X = np.zeros((len(examples), d))
    M = np.zeros((len(examples), len(persona_ids), E))
    Y = np.zeros((len(examples), E))
    provider_tag = first_emb.provider
    for i, (emb, matrix, gold) in enumerate(examples):
        if emb.dim != d:
            raise ModelError(f"example {i}: embedding dim {emb.dim} != {d}")
        if matrix.persona_ids != persona_ids:
            raise ModelError(f"example {i}: persona order differs")
        if matrix.registry_hash != registry_hash:
            raise ModelError(f"example {i}: registry hash differs")
        X[i] = emb.vector
        M[i] = matrix.values
        for entity in gold:
            Y[i, registry.column(entity)] = 1.0

    entity_weights = (np.asarray(config.entity_loss_weights, dtype=float)
                      if config.entity_loss_weights else None)
    if entity_weights is not None and entity_weights.shape != (E,):
        raise ModelError(
            f"entity_loss_weights length {entity_weights.shape} != {E} entities")

    model = _init_model(d, len(persona_ids), config, persona_ids,
                        registry_hash, provider_tag)
    optimizer = AdamW(model.params(), config.learning_rate,
                      weight_decay=config.weight_decay,
                      beta1=config.beta1, beta2=config.beta2, eps=config.eps,
                      decay_params=("W1", "W2"))

    order_rng = np.random.default_rng(config.seed + 1)
    dropout_seed = np.random.SeedSequence(config.seed + 2)
    history = []
    n = len(examples)
    for epoch in range(config.epochs):
        order = order_rng.permutation(n)
        for batch_index, start in enumerate(range(0, n, config.batch_size)):
            rows = order[start:start + config.batch_size]
            step_seed = dropout_seed.spawn(1)[0]
            loss, grads = router_loss_and_grads(
                model, X[rows], M[rows], Y[rows],
                train_mode=True, seed=step_seed,
                entity_weights=entity_weights)
            if not np.isfinite(loss):
                raise NanLossError(
                    f"router loss is not finite at epoch {epoch} batch {batch_index}",
                    epoch=epoch, batch=batch_index)
            optimizer.step(grads)
            history.append((epoch, batch_index, loss))
    return model, history


def select_top_k(model, embedding, k):
    """Ids of the k most relevant personas, by descending relevance.

    Exact relevance ties go to the lexicographically smaller persona id.
    """
    if not 1 <= k <= model.persona_count:
        raise ModelError(
            f"k must be in [1, {model.persona_count}], got {k}")
    relevance = router_forward(model, embedding, train_mode=False)
    ranked = sorted(zip(model.persona_ids, relevance),
                    key=lambda item: (-item[1], item[0]))
    return [pid for pid, _ in ranked[:k]]


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def save_router(path, model, loss_history=None):
    """Self-describing JSON container; weights as row-major float64 lists."""
    payload = {
        "kind": "router",
        "d": model.input_dim,
        "h": model.hidden_dim,
        "P": model.persona_count,
        "persona_ids": list(model.persona_ids),
        "registry_hash": model.registry_hash,
        "dropout_rate": model.dropout_rate,
        "embedding_provider": model.embedding_provider,
        "train_config": model.train_config,
        "weights": {
            "W1": model.W1.tolist(),
            "b1": model.b1.tolist(),
            "W2": model.W2.tolist(),
            "b2": model.b2.tolist(),
        },
    }
    if loss_history is not None:
        payload["loss_history"] = [[e, b, l] for e, b, l in loss_history]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")


def load_router(path):
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("kind") != "router":
        raise ModelError(f"{path} is not a router model file")
    weights = payload["weights"]
    return RouterModel(
        W1=np.array(weights["W1"], dtype=float),
        b1=np.array(weights["b1"], dtype=float),
        W2=np.array(weights["W2"], dtype=float),
        b2=np.array(weights["b2"], dtype=float),
        dropout_rate=payload["dropout_rate"],
        persona_ids=tuple(payload["persona_ids"]),
        registry_hash=payload["registry_hash"],
        embedding_provider=payload.get("embedding_provider", ""),
        train_config=payload.get("train_config", {}),
    )


def write_loss_history(path, history):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "batch", "loss"])
        for epoch, batch, loss in history:
            writer.writerow([epoch, batch, repr(loss)])
