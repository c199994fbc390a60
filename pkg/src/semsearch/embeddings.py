"""Skip-gram word embeddings trained with negative sampling.

The trainer is written against a counter-based random stream so that a
run is a pure function of (sentences, config). Window sizes, negative
samples, and subsampling coins are all drawn from substreams addressed
by (purpose, epoch, sentence), which lets a counting pre-pass enumerate
exactly the pairs the training pass will visit. The learning rate decays
linearly over that exact pair total, from ``initial_lr`` down to one
hundredth of it.

Numerics: parameters are stored float32, all dot products and the
sigmoid/log math run in float64, and updates are applied with
``np.add.at`` so repeated rows inside one step accumulate instead of
overwriting each other.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import rng
from .corpus import SentenceStream, Vocabulary
from .errors import ConfigError, DimensionMismatchError
from .fileio import ByteReader, array_bytes, check_magic, check_version, pack

log = logging.getLogger(__name__)

MODEL_MAGIC = b"W2VM"
MODEL_VERSION = 1
NOISE_POWER = 0.75
LR_FLOOR_FACTOR = 0.01
NULL_HASH = bytes(32)


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for one training run."""

    dim: int = 100
    window: int = 5
    min_count: int = 1
    negatives: int = 5
    epochs: int = 5
    initial_lr: float = 0.025
    subsample_t: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ConfigError("dim must be >= 1")
        if self.window < 1:
            raise ConfigError("window must be >= 1")
        if self.min_count < 1:
            raise ConfigError("min_count must be >= 1")
        if self.negatives < 0:
            raise ConfigError("negatives must be >= 0")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if not self.initial_lr > 0:
            raise ConfigError("initial_lr must be > 0")
        if self.subsample_t < 0:
            raise ConfigError("subsample_t must be >= 0")


@dataclass
class EmbeddingModel:
    """Trained embeddings plus everything needed to reproduce them.

    ``w_in`` rows are the word vectors used for search; ``w_out`` is the
    context matrix, kept so training state round-trips through disk.
    """

    vocab: Vocabulary
    w_in: np.ndarray
    w_out: np.ndarray
    config: TrainConfig
    corpus_hash: bytes = NULL_HASH
    epoch_losses: list[float] | None = None

    @property
    def dim(self) -> int:
        return self.w_in.shape[1]

    def vector(self, token: str) -> np.ndarray:
        """Embedding of a vocabulary token; KeyError when out of vocabulary."""
        idx = self.vocab.id(token)
        if idx is None:
            raise KeyError(token)
        return self.w_in[idx].copy()

    def __contains__(self, token: str) -> bool:
        return token in self.vocab


def sigmoid(x: np.ndarray | float) -> np.ndarray:
    """Numerically stable logistic function, evaluated in float64."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def log_sigmoid(x: np.ndarray | float) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return -np.logaddexp(0.0, -x)


def init_model(
    vocab: Vocabulary, config: TrainConfig, corpus_hash: bytes = NULL_HASH
) -> EmbeddingModel:
    """Fresh model: word vectors uniform in (-0.5/dim, 0.5/dim), contexts zero."""
    n = vocab.size * config.dim
    w_in = rng.uniform_block(
        rng.derive(config.seed, "init"), 0, n, -0.5 / config.dim, 0.5 / config.dim
    ).astype(np.float32).reshape(vocab.size, config.dim)
    w_out = np.zeros((vocab.size, config.dim), dtype=np.float32)
    return EmbeddingModel(
        vocab=vocab,
        w_in=w_in,
        w_out=w_out,
        config=config,
        corpus_hash=corpus_hash,
        epoch_losses=[],
    )


def sgns_loss(
    w_in: np.ndarray,
    w_out: np.ndarray,
    center: int,
    context: int,
    negatives: Sequence[int],
) -> float:
    """Loss of one (center, context) pair with the given negative ids.

    L = -log sigma(u_ctx . v_c) - sum_neg log sigma(-u_neg . v_c),
    evaluated in float64.
    """
    v = w_in[center].astype(np.float64)
    pos = float(log_sigmoid(np.dot(w_out[context].astype(np.float64), v)))
    loss = -pos
    if len(negatives):
        s = w_out[np.asarray(negatives, dtype=np.int64)].astype(np.float64) @ v
        loss -= float(np.sum(log_sigmoid(-s)))
    return loss


def sgns_step(
    w_in: np.ndarray,
    w_out: np.ndarray,
    center: int,
    context: int,
    negatives: Sequence[int] | np.ndarray,
    lr: float,
) -> float:
    """One SGD step on a (center, context, negatives) instance, in place.

    Gradients are taken at the pre-update parameters. Returns the loss at
    those parameters. Rows listed twice (a repeated negative, or a negative
    equal to the context) receive the sum of their updates.
    """
    rows = np.empty(1 + len(negatives), dtype=np.int64)
    rows[0] = context
    rows[1:] = negatives
    v = w_in[center].astype(np.float64)
    u = w_out[rows].astype(np.float64)
    scores = u @ v
    labels = np.zeros(len(rows), dtype=np.float64)
    labels[0] = 1.0
    # d loss / d score = sigma(score) - label
    g = (sigmoid(scores) - labels) * lr
    grad_v = g @ u
    loss = -float(log_sigmoid(scores[0])) - float(np.sum(log_sigmoid(-scores[1:])))
    np.add.at(w_out, rows, -g[:, None] * v[None, :])
    w_in[center] -= grad_v
    return loss


class NegativeSampler:
    """Unigram^0.75 noise distribution sampled by cumulative-weight lookup."""

    def __init__(self, counts: np.ndarray):
        if len(counts) == 0:
            raise ConfigError("cannot sample from an empty vocabulary")
        weights = counts.astype(np.float64) ** NOISE_POWER
        self._cum = np.cumsum(weights)
        self._total = float(self._cum[-1])

    def sample_block(self, seed: int, count: int) -> np.ndarray:
        """``count`` ids drawn from the noise distribution, as int64."""
        u = rng.unit_block(seed, 0, count)
        return np.searchsorted(self._cum, u * self._total, side="right").astype(
            np.int64
        )


def _keep_mask(
    sent: np.ndarray, discard_p: np.ndarray | None, sub_seed: int
) -> np.ndarray:
    if discard_p is None:
        return sent
    coins = rng.unit_block(sub_seed, 0, len(sent))
    return sent[coins >= discard_p[sent]]


def _plan_sentence(
    sent: np.ndarray,
    seed: int,
    epoch: int,
    s_idx: int,
    window: int,
    discard_p: np.ndarray | None,
) -> tuple[np.ndarray, np.ndarray, int]:
    """Replayable draw of (kept token ids, per-position windows, pair count)."""
    kept = _keep_mask(sent, discard_p, rng.derive(seed, "sub", epoch, s_idx))
    n = len(kept)
    if n < 2:
        return kept, np.empty(0, dtype=np.int64), 0
    bs = 1 + (
        rng.u64_block(rng.derive(seed, "win", epoch, s_idx), 0, n)
        % np.uint64(window)
    ).astype(np.int64)
    pos = np.arange(n, dtype=np.int64)
    lo = np.maximum(pos - bs, 0)
    hi = np.minimum(pos + bs, n - 1)
    return kept, bs, int(np.sum(hi - lo))


def _discard_probs(vocab: Vocabulary, subsample_t: float) -> np.ndarray | None:
    """P(discard) per token id: 1 - sqrt(t / f) for tokens more frequent than t."""
    if subsample_t <= 0:
        return None
    freq = vocab.counts.astype(np.float64) / float(vocab.total_tokens)
    with np.errstate(divide="ignore"):
        p = 1.0 - np.sqrt(subsample_t / freq)
    return np.clip(p, 0.0, 1.0)


def scheduled_pairs(
    stream: SentenceStream | Iterable[np.ndarray],
    vocab: Vocabulary,
    config: TrainConfig,
) -> int:
    """Exact number of training pairs the full run will process."""
    sentences = list(getattr(stream, "sentences", stream))
    discard_p = _discard_probs(vocab, config.subsample_t)
    total = 0
    for epoch in range(config.epochs):
        for s_idx, sent in enumerate(sentences):
            total += _plan_sentence(
                sent, config.seed, epoch, s_idx, config.window, discard_p
            )[2]
    return total


def train(
    stream: SentenceStream | Iterable[np.ndarray],
    vocab: Vocabulary,
    config: TrainConfig,
    corpus_hash: bytes = NULL_HASH,
) -> EmbeddingModel:
    """Train a model from encoded sentences.

    Per sentence, every position draws a window size b in 1..window and
    pairs with the positions within b on each side; each pair draws
    ``config.negatives`` noise ids and takes one SGD step. The mean pair
    loss of each epoch is logged and recorded on ``model.epoch_losses``.
    """
    sentences = list(getattr(stream, "sentences", stream))
    model = init_model(vocab, config, corpus_hash)
    total_pairs = scheduled_pairs(sentences, vocab, config)
    if total_pairs == 0:
        log.info("no training pairs scheduled; returning initial model")
        return model
    sampler = NegativeSampler(vocab.counts)
    discard_p = _discard_probs(vocab, config.subsample_t)
    w_in, w_out = model.w_in, model.w_out
    lr0, lr_floor = config.initial_lr, config.initial_lr * LR_FLOOR_FACTOR
    done = 0
    for epoch in range(config.epochs):
        epoch_loss = 0.0
        epoch_pairs = 0
        for s_idx, sent in enumerate(sentences):
            kept, bs, n_pairs = _plan_sentence(
                sent, config.seed, epoch, s_idx, config.window, discard_p
            )
            if n_pairs == 0:
                continue
            if config.negatives:
                negs = sampler.sample_block(
                    rng.derive(config.seed, "neg", epoch, s_idx),
                    n_pairs * config.negatives,
                ).reshape(n_pairs, config.negatives)
            else:
                negs = np.empty((n_pairs, 0), dtype=np.int64)
            n = len(kept)
            p = 0
            for i in range(n):
                b = int(bs[i])
                center = int(kept[i])
                for j in range(max(0, i - b), min(n - 1, i + b) + 1):
                    if j == i:
                        continue
                    lr = max(lr0 * (1.0 - done / total_pairs), lr_floor)
                    epoch_loss += sgns_step(
                        w_in, w_out, center, int(kept[j]), negs[p], lr
                    )
                    p += 1
                    done += 1
            epoch_pairs += n_pairs
        mean = epoch_loss / epoch_pairs if epoch_pairs else float("nan")
        model.epoch_losses.append(mean)
        log.info(
            "epoch %d/%d: %d pairs, mean loss %.6f",
            epoch + 1, config.epochs, epoch_pairs, mean,
        )
    return model


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity in float64; zero-norm input is a ValueError."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na = float(np.dot(a, a)) ** 0.5
    nb = float(np.dot(b, b)) ** 0.5
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine of zero-norm vector")
    return float(np.dot(a, b)) / (na * nb)


def save_model(model: EmbeddingModel, path: str | Path) -> None:
    """Write the model in its versioned little-endian binary format."""
    cfg = model.config
    vocab = model.vocab
    if len(model.corpus_hash) != 32:
        raise ValueError("corpus_hash must be 32 bytes")
    parts = [
        MODEL_MAGIC,
        pack("H", MODEL_VERSION),
        pack("II", model.dim, vocab.size),
        model.corpus_hash,
        pack(
            "IIIIddQ",
            cfg.window,
            cfg.min_count,
            cfg.negatives,
            cfg.epochs,
            cfg.initial_lr,
            cfg.subsample_t,
            cfg.seed & (2**64 - 1),
        ),
    ]
    for token, count in zip(vocab.id_to_token, vocab.counts):
        raw = token.encode("utf-8")
        parts.append(pack("I", len(raw)))
        parts.append(raw)
        parts.append(pack("Q", int(count)))
    parts.append(array_bytes(model.w_in, np.float32))
    parts.append(array_bytes(model.w_out, np.float32))
    Path(path).write_bytes(b"".join(parts))


def load_model(path: str | Path) -> EmbeddingModel:
    """Read a model file, validating magic, version, and exact length."""
    reader = ByteReader(Path(path).read_bytes(), str(path))
    check_magic(reader, MODEL_MAGIC, "model")
    check_version(reader, MODEL_VERSION, "model")
    dim, size = reader.unpack("II")
    if dim < 1 or size < 1:
        raise DimensionMismatchError(f"{path}: bad shape {size}x{dim}")
    corpus_hash = reader.take(32)
    window, min_count, negatives, epochs, initial_lr, subsample_t, seed = (
        reader.unpack("IIIIddQ")
    )
    id_to_token = []
    counts = np.empty(size, dtype=np.int64)
    for i in range(size):
        (tlen,) = reader.unpack("I")
        id_to_token.append(reader.take(tlen).decode("utf-8"))
        (counts[i],) = reader.unpack("Q")
    w_in = reader.array(np.float32, (size, dim))
    w_out = reader.array(np.float32, (size, dim))
    reader.expect_end()
    vocab = Vocabulary(
        token_to_id={t: i for i, t in enumerate(id_to_token)},
        id_to_token=id_to_token,
        counts=counts,
        total_tokens=int(counts.sum()),
        min_count=min_count,
    )
    config = TrainConfig(
        dim=dim,
        window=window,
        min_count=min_count,
        negatives=negatives,
        epochs=epochs,
        initial_lr=initial_lr,
        subsample_t=subsample_t,
        seed=seed,
    )
    return EmbeddingModel(
        vocab=vocab,
        w_in=w_in,
        w_out=w_out,
        config=config,
        corpus_hash=corpus_hash,
        epoch_losses=[],
    )
