"""Identify the target among K voice prints from the words they uttered.

Architecture: the K guest prints are averaged into a context vector; an
attention net scores each uttered embedding against that context; the
attention-weighted sum of utterances is then paired with every guest print
and scored by a second net, and a softmax over the K scores gives the
per-guest probabilities.  Scoring is per guest, so the whole thing is
permutation-equivariant in the guest list by construction.

Training is plain supervised cross-entropy on games with uniformly random
word sets, no policy involved.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import neural
from .corpus import Corpus
from .neural import MlpSpec, ParamStore


class TrainingDiverged(RuntimeError):
    """Raised when a training loss goes non-finite."""


@dataclass(frozen=True)
class GuesserConfig:
    dim: int
    attn_hidden: int = 256
    score_hidden: int = 512
    dropout: float = 0.5

    def arch(self) -> dict:
        return {"model": "guesser", "dim": self.dim, "attn_hidden": self.attn_hidden,
                "score_hidden": self.score_hidden, "dropout": self.dropout}


class GuesserModel:
    """Parameter container for the two scoring nets."""

    def __init__(self, config: GuesserConfig, store: ParamStore | None = None):
        self.config = config
        pair = 2 * config.dim
        self.attn_spec = MlpSpec(pair, (config.attn_hidden,), 1, dropout=config.dropout)
        self.score_spec = MlpSpec(pair, (config.score_hidden,), 1, dropout=config.dropout)
        self.store = store if store is not None else ParamStore()

    @classmethod
    def init(cls, config: GuesserConfig, rng: np.random.Generator) -> "GuesserModel":
        model = cls(config)
        neural.init_mlp(model.store, "attn", model.attn_spec, rng)
        neural.init_mlp(model.store, "score", model.score_spec, rng)
        return model

    def save(self, path) -> None:
        neural.save_params(path, self.store, "guesser", self.config.arch())

    @classmethod
    def load(cls, path) -> "GuesserModel":
        store, kind, arch = neural.load_params(path)
        if kind != "guesser":
            raise ValueError(f"checkpoint holds a {kind!r} model, not a guesser")
        config = GuesserConfig(dim=arch["dim"], attn_hidden=arch["attn_hidden"],
                               score_hidden=arch["score_hidden"], dropout=arch["dropout"])
        return cls(config, store)


@dataclass
class GuesserActivations:
    """Everything the forward pass computed, batched over games.

    ``attn_weights`` rows sum to 1 and ``pooled`` is their convex
    combination of the uttered embeddings; ``probs`` rows sum to 1 over
    the K guests.
    """

    mean_guest: np.ndarray    # (B, D)
    attn_logits: np.ndarray   # (B, T)
    attn_weights: np.ndarray  # (B, T)
    pooled: np.ndarray        # (B, D)
    score_logits: np.ndarray  # (B, K)
    probs: np.ndarray         # (B, K)
    _guests: np.ndarray = None
    _uttered: np.ndarray = None
    _attn_cache: object = None
    _score_cache: object = None


def guesser_forward(model: GuesserModel, guests: np.ndarray, uttered: np.ndarray,
                    train: bool = False,
                    rng: np.random.Generator | None = None) -> GuesserActivations:
    """Score guests given uttered embeddings.

    ``guests`` is (B, K, D) and ``uttered`` (B, T, D); a single game may be
    passed as (K, D) and (T, D) and comes back with a batch axis of one.
    Requires K >= 1 and T >= 1.
    """
    guests = np.asarray(guests, dtype=np.float64)
    uttered = np.asarray(uttered, dtype=np.float64)
    if guests.ndim == 2:
        guests = guests[None]
    if uttered.ndim == 2:
        uttered = uttered[None]
    b, k, d = guests.shape
    if d != model.config.dim:
        raise ValueError(f"guest dimension {d} != model dimension {model.config.dim}")
    if uttered.shape[0] != b or uttered.shape[2] != d:
        raise ValueError(f"uttered shape {uttered.shape} incompatible with guests {guests.shape}")
    t = uttered.shape[1]
    if k < 1 or t < 1:
        raise ValueError("need at least one guest and one uttered word")

    mean_guest = guests.mean(axis=1)                                    # (B, D)
    attn_in = np.concatenate(
        [uttered, np.broadcast_to(mean_guest[:, None, :], (b, t, d))], axis=2)
    e_flat, attn_cache = neural.mlp_forward(
        model.store, "attn", model.attn_spec, attn_in.reshape(b * t, 2 * d),
        train=train, rng=rng)
    attn_logits = e_flat.reshape(b, t)
    attn_weights = neural.softmax(attn_logits, axis=1)
    pooled = np.einsum("bt,btd->bd", attn_weights, uttered)

    score_in = np.concatenate(
        [guests, np.broadcast_to(pooled[:, None, :], (b, k, d))], axis=2)
    s_flat, score_cache = neural.mlp_forward(
        model.store, "score", model.score_spec, score_in.reshape(b * k, 2 * d),
        train=train, rng=rng)
    score_logits = s_flat.reshape(b, k)
    probs = neural.softmax(score_logits, axis=1)
    return GuesserActivations(
        mean_guest=mean_guest, attn_logits=attn_logits, attn_weights=attn_weights,
        pooled=pooled, score_logits=score_logits, probs=probs,
        _guests=guests, _uttered=uttered,
        _attn_cache=attn_cache, _score_cache=score_cache)


def guesser_loss(model: GuesserModel, acts: GuesserActivations, targets) -> float:
    """Mean cross-entropy at the target guests; accumulates parameter grads.

    The backward pass runs through the score net, the attention pooling,
    the attention net, and the mean-guest branch.
    """
    targets = np.atleast_1d(np.asarray(targets))
    b, k = acts.probs.shape
    t = acts.attn_weights.shape[1]
    d = acts.pooled.shape[1]
    losses, dlogits = neural.softmax_cross_entropy(acts.score_logits, targets)
    dlogits /= b

    dscore_in = neural.mlp_backward(
        model.store, "score", model.score_spec, acts._score_cache,
        dlogits.reshape(b * k, 1)).reshape(b, k, 2 * d)
    dpooled = dscore_in[:, :, d:].sum(axis=1)                           # (B, D)

    dalpha = np.einsum("bd,btd->bt", dpooled, acts._uttered)
    de = acts.attn_weights * (dalpha - (acts.attn_weights * dalpha).sum(axis=1, keepdims=True))
    neural.mlp_backward(model.store, "attn", model.attn_spec, acts._attn_cache,
                        de.reshape(b * t, 1))
    return float(losses.mean())


def sample_game_batch(corpus: Corpus, n_games: int, n_guests: int,
                      rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Uniform guests without replacement plus a uniform target per game.

    Returns guest row indices (n_games, K) into the corpus arrays and the
    target column (n_games,) into each guest row.
    """
    if n_guests > corpus.n_speakers:
        raise ValueError(f"cannot seat {n_guests} guests from {corpus.n_speakers} speakers")
    keys = rng.random((n_games, corpus.n_speakers))
    guest_rows = np.argsort(keys, axis=1)[:, :n_guests]
    targets = rng.integers(0, n_guests, size=n_games)
    return guest_rows, targets


def sample_word_subsets(rng: np.random.Generator, n_games: int, pool: np.ndarray,
                        n_words: int) -> np.ndarray:
    """Per game, ``n_words`` distinct words drawn uniformly from ``pool``."""
    pool = np.asarray(pool)
    if n_words > pool.size:
        raise ValueError(f"cannot draw {n_words} distinct words from a pool of {pool.size}")
    keys = rng.random((n_games, pool.size))
    picks = np.argsort(keys, axis=1)[:, :n_words]
    return pool[picks]


def _gather_games(corpus: Corpus, guest_rows: np.ndarray, targets: np.ndarray,
                  words: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    guests = corpus.voice_prints[guest_rows]                            # (B, K, D)
    target_rows = guest_rows[np.arange(len(targets)), targets]
    uttered = corpus.utterances[target_rows[:, None], words]            # (B, T, D)
    return guests, uttered


@dataclass(frozen=True)
class GuesserTrainConfig:
    n_guests: int = 5
    word_budget: int = 3
    batch_size: int = 1024
    lr: float = 3e-4
    n_games: int = 45_000
    dropout: float = 0.5
    attn_hidden: int = 256
    score_hidden: int = 512
    grad_clip: float | None = None
    valid_games: int = 10_000
    eval_every: int = 10          # batches between validation points
    seed: int = 0


def train_guesser(corpus_train: Corpus, corpus_valid: Corpus,
                  config: GuesserTrainConfig) -> tuple[GuesserModel, list[dict]]:
    """Supervised training on freshly sampled random-word games.

    Returns the model and a curve of dicts with keys epoch, games_seen,
    train_loss, valid_accuracy.  Validation always runs on the same seeded
    held-out games so curves are comparable across runs.
    """
    if corpus_train.dimension != corpus_valid.dimension:
        raise ValueError("train and validation corpora disagree on dimension")
    if corpus_train.vocab != corpus_valid.vocab:
        raise ValueError("train and validation corpora disagree on vocabulary")
    rng = np.random.default_rng(config.seed)
    model = GuesserModel.init(
        GuesserConfig(dim=corpus_train.dimension, attn_hidden=config.attn_hidden,
                      score_hidden=config.score_hidden, dropout=config.dropout), rng)

    vocab = np.arange(corpus_train.vocab_size)
    n_batches = max(1, int(np.ceil(config.n_games / config.batch_size)))
    curve: list[dict] = []
    losses_since_eval: list[float] = []
    games_seen = 0
    start = time.perf_counter()

    def record(epoch: int) -> None:
        acc, _ = evaluate_guesser(model, corpus_valid, config.n_guests,
                                  config.word_budget, "random",
                                  config.valid_games, seed=config.seed + 1)
        curve.append({"epoch": epoch, "games_seen": games_seen,
                      "train_loss": float(np.mean(losses_since_eval)) if losses_since_eval else float("nan"),
                      "valid_accuracy": acc})
        losses_since_eval.clear()

    for batch_idx in range(n_batches):
        b = min(config.batch_size, config.n_games - games_seen)
        guest_rows, targets = sample_game_batch(corpus_train, b, config.n_guests, rng)
        words = sample_word_subsets(rng, b, vocab, config.word_budget)
        guests, uttered = _gather_games(corpus_train, guest_rows, targets, words)
        acts = guesser_forward(model, guests, uttered, train=True, rng=rng)
        loss = guesser_loss(model, acts, targets)
        if not np.isfinite(loss):
            raise TrainingDiverged(
                f"non-finite loss {loss} at batch {batch_idx} "
                f"({games_seen} games seen, lr={config.lr})")
        neural.adam_step(model.store, config.lr, clip_norm=config.grad_clip)
        games_seen += b
        losses_since_eval.append(loss)
        if (batch_idx + 1) % config.eval_every == 0:
            record(len(curve) + 1)
    if not curve or curve[-1]["games_seen"] != games_seen:
        record(len(curve) + 1)
    curve[-1]["wall_time_s"] = time.perf_counter() - start
    return model, curve


def evaluate_guesser(model: GuesserModel, corpus: Corpus, n_guests: int,
                     n_words: int, word_policy, n_games: int, seed: int,
                     chunk: int = 4096) -> tuple[float, float]:
    """Mean terminal success and binomial stderr over seeded games.

    ``word_policy`` is "random", a fixed pool of word ids to draw from
    (used exactly when its length equals the budget), or an enquirer model
    evaluated greedily.
    """
    if not isinstance(word_policy, (str, list, tuple, np.ndarray)):
        from .enquirer import EnquirerModel, evaluate_enquirer
        if isinstance(word_policy, EnquirerModel):
            result = evaluate_enquirer(word_policy, model, corpus, n_guests,
                                       n_words, n_games, seed)
            return result.success_rate, result.stderr
        raise TypeError(f"unsupported word policy: {word_policy!r}")

    if isinstance(word_policy, str) and word_policy != "random":
        raise ValueError(f"unknown word policy {word_policy!r}")
    pool = (np.arange(corpus.vocab_size) if isinstance(word_policy, str)
            else np.asarray(word_policy, dtype=int))
    rng = np.random.default_rng(seed)
    hits = 0
    done = 0
    while done < n_games:
        b = min(chunk, n_games - done)
        guest_rows, targets = sample_game_batch(corpus, b, n_guests, rng)
        words = sample_word_subsets(rng, b, pool, n_words)
        guests, uttered = _gather_games(corpus, guest_rows, targets, words)
        probs = guesser_forward(model, guests, uttered).probs
        hits += int(np.sum(np.argmax(probs, axis=1) == targets))
        done += b
    acc = hits / n_games
    return acc, float(np.sqrt(acc * (1.0 - acc) / n_games))


def guesser_success(model: GuesserModel, guests: np.ndarray, uttered: np.ndarray,
                    targets: np.ndarray) -> np.ndarray:
    """Batched 0/1 indicator of argmax matching the target (eval mode)."""
    probs = guesser_forward(model, guests, uttered).probs
    return (np.argmax(probs, axis=1) == np.asarray(targets)).astype(np.float64)
