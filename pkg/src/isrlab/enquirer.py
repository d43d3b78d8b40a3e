"""Word-selection policy and its PPO trainer.

The policy encodes the uttered-so-far embeddings with a bidirectional LSTM
(a learned start token stands in at turn zero), concatenates the last
hidden state with the mean guest print, and maps that through two heads:
a softmax over the vocabulary and a scalar value baseline.  Words already
requested in a game are masked to exactly zero probability, during
training as well as evaluation.

Training maximizes the clipped PPO surrogate plus an entropy bonus minus
a value regression term, with GAE advantages and a single Adam step with
global-norm clipping per minibatch.  The terminal reward of an episode is
whether a frozen guesser picks the target from the collected utterances.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import neural
from .corpus import Corpus
from .guesser import GuesserModel, guesser_success, sample_game_batch
from .neural import BiLstmSpec, MlpSpec, ParamStore


class RewardCollapse(RuntimeError):
    """Raised when every episode in a long trailing window scored zero."""


@dataclass(frozen=True)
class EnquirerConfig:
    dim: int
    vocab_size: int
    lstm_hidden: int = 128
    policy_hidden: int = 256
    value_hidden: int = 256

    def arch(self) -> dict:
        return {"model": "enquirer", "dim": self.dim, "vocab_size": self.vocab_size,
                "lstm_hidden": self.lstm_hidden, "policy_hidden": self.policy_hidden,
                "value_hidden": self.value_hidden}


class EnquirerModel:
    """Start token, biLSTM trunk, and the policy and value heads."""

    def __init__(self, config: EnquirerConfig, store: ParamStore | None = None):
        self.config = config
        trunk_width = 2 * config.lstm_hidden + config.dim
        self.lstm_spec = BiLstmSpec(config.dim, config.lstm_hidden)
        self.policy_spec = MlpSpec(trunk_width, (config.policy_hidden,), config.vocab_size)
        self.value_spec = MlpSpec(trunk_width, (config.value_hidden,), 1)
        self.store = store if store is not None else ParamStore()

    @classmethod
    def init(cls, config: EnquirerConfig, rng: np.random.Generator) -> "EnquirerModel":
        model = cls(config)
        model.store.add("start", neural.uniform_fan_in(rng, config.dim, (config.dim,)))
        neural.init_bilstm(model.store, "lstm", model.lstm_spec, rng)
        neural.init_mlp(model.store, "policy", model.policy_spec, rng)
        neural.init_mlp(model.store, "value", model.value_spec, rng)
        return model

    def save(self, path) -> None:
        neural.save_params(path, self.store, "enquirer", self.config.arch())

    @classmethod
    def load(cls, path) -> "EnquirerModel":
        store, kind, arch = neural.load_params(path)
        if kind != "enquirer":
            raise ValueError(f"checkpoint holds a {kind!r} model, not an enquirer")
        config = EnquirerConfig(dim=arch["dim"], vocab_size=arch["vocab_size"],
                                lstm_hidden=arch["lstm_hidden"],
                                policy_hidden=arch["policy_hidden"],
                                value_hidden=arch["value_hidden"])
        return cls(config, store)


@dataclass
class EnquirerOutput:
    probs: np.ndarray       # (B, V), masked entries exactly 0
    log_probs: np.ndarray   # (B, V), masked entries -inf
    value: np.ndarray       # (B,)
    _lstm_cache: object = None
    _policy_cache: object = None
    _value_cache: object = None
    _mask: np.ndarray = None


def _forward_core(model: EnquirerModel, mean_guest: np.ndarray, uttered: np.ndarray,
                  mask: np.ndarray) -> EnquirerOutput:
    hidden, lstm_cache = neural.bilstm_forward(
        model.store, "lstm", model.lstm_spec, uttered, model.store.values["start"])
    trunk = np.concatenate([hidden[:, -1, :], mean_guest], axis=1)
    logits, policy_cache = neural.mlp_forward(model.store, "policy", model.policy_spec, trunk)
    value, value_cache = neural.mlp_forward(model.store, "value", model.value_spec, trunk)
    log_probs = neural.masked_log_softmax(logits, mask)
    probs = np.exp(log_probs)
    return EnquirerOutput(probs=probs, log_probs=log_probs, value=value[:, 0],
                          _lstm_cache=lstm_cache, _policy_cache=policy_cache,
                          _value_cache=value_cache, _mask=mask)


def enquirer_forward(model: EnquirerModel, guests: np.ndarray, uttered: np.ndarray,
                     mask: np.ndarray) -> EnquirerOutput:
    """Action distribution and value for a batch of game prefixes.

    ``guests`` is (B, K, D), ``uttered`` (B, t, D) with t >= 0 utterances
    so far, ``mask`` (B, V) boolean marking words already requested.  A
    single game may be passed unbatched as (K, D), (t, D), (V,).
    """
    guests = np.asarray(guests, dtype=np.float64)
    uttered = np.asarray(uttered, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if guests.ndim == 2:
        guests, uttered, mask = guests[None], uttered[None], mask[None]
    if mask.shape[1] != model.config.vocab_size:
        raise ValueError(f"mask width {mask.shape[1]} != vocabulary {model.config.vocab_size}")
    return _forward_core(model, guests.mean(axis=1), uttered, mask)


def _backward_core(model: EnquirerModel, out: EnquirerOutput,
                   dlogits: np.ndarray, dvalue: np.ndarray) -> None:
    # Masked logits were replaced by -inf before the softmax, so no
    # gradient may flow back into the policy net at masked positions.
    dlogits = np.where(out._mask, 0.0, dlogits)
    dtrunk = neural.mlp_backward(model.store, "policy", model.policy_spec,
                                 out._policy_cache, dlogits)
    dtrunk += neural.mlp_backward(model.store, "value", model.value_spec,
                                  out._value_cache, dvalue[:, None])
    width = 2 * model.config.lstm_hidden
    d_hidden = np.zeros((dtrunk.shape[0], out._lstm_cache.inputs.shape[1], width))
    d_hidden[:, -1, :] = dtrunk[:, :width]
    d_inputs = neural.bilstm_backward(model.store, "lstm", model.lstm_spec,
                                      out._lstm_cache, d_hidden)
    model.store.grads["start"] += d_inputs[:, 0, :].sum(axis=0)


def sample_actions(probs: np.ndarray, mode: str, rng: np.random.Generator | None = None) -> np.ndarray:
    """Select one word per row: categorical in explore mode, argmax in greedy.

    Zero-probability (masked) words are never selected in either mode.
    """
    probs = np.asarray(probs, dtype=np.float64)
    squeeze = probs.ndim == 1
    if squeeze:
        probs = probs[None]
    if not np.all(np.isfinite(probs)) or np.any(probs < 0.0):
        raise ValueError("invalid action distribution")
    totals = probs.sum(axis=1)
    if np.any(totals <= 0.0):
        raise ValueError("degenerate all-zero action distribution")
    if mode == "greedy":
        actions = np.argmax(probs, axis=1)
    elif mode == "explore":
        if rng is None:
            raise ValueError("explore mode requires an rng")
        cum = np.cumsum(probs, axis=1)
        cum /= cum[:, -1:]
        r = rng.random(probs.shape[0])
        actions = np.sum(cum <= r[:, None], axis=1)
    else:
        raise ValueError(f"unknown sampling mode {mode!r}")
    return int(actions[0]) if squeeze else actions


def sample_action(distribution: np.ndarray, mode: str,
                  rng: np.random.Generator | None = None) -> int:
    """Single-game convenience wrapper around ``sample_actions``."""
    return sample_actions(np.asarray(distribution), mode, rng)


@dataclass(frozen=True)
class Trajectory:
    """One episode's per-turn record for advantage estimation."""

    actions: np.ndarray
    log_probs: np.ndarray
    values: np.ndarray
    rewards: np.ndarray

    def __post_init__(self):
        t = len(self.actions)
        for name in ("log_probs", "values", "rewards"):
            if len(getattr(self, name)) != t:
                raise ValueError(f"{name} length != {t}")
        if t > 1 and np.any(self.rewards[:-1] != 0.0):
            raise ValueError("only the terminal step may carry reward")


def compute_gae(rewards: np.ndarray, values: np.ndarray, gamma: float,
                lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimates and value targets.

    Accepts (T,) vectors or (E, T) batches.  The post-terminal bootstrap
    value is zero, so ``delta_t = r_t + gamma * V_{t+1} - V_t`` with
    ``V_T = 0`` and ``A_t = sum_l (gamma * lam)^l delta_{t+l}``; returns
    are ``A_t + V_t``.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    squeeze = rewards.ndim == 1
    if squeeze:
        rewards, values = rewards[None], values[None]
    e, t = rewards.shape
    next_values = np.concatenate([values[:, 1:], np.zeros((e, 1))], axis=1)
    deltas = rewards + gamma * next_values - values
    advantages = np.zeros_like(deltas)
    carry = np.zeros(e)
    for step in range(t - 1, -1, -1):
        carry = deltas[:, step] + gamma * lam * carry
        advantages[:, step] = carry
    returns = advantages + values
    if squeeze:
        return advantages[0], returns[0]
    return advantages, returns


@dataclass(frozen=True)
class PpoConfig:
    gamma: float = 0.9
    gae_lambda: float = 0.95
    clip: float = 0.2
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    lr: float = 5e-3
    grad_clip: float = 1.0
    episodes: int = 80_000
    horizon: int = 1024           # transitions collected per update round
    update_batches: int = 4
    update_batch_size: int = 512
    word_budget: int = 3
    n_guests: int = 5
    collapse_patience: int = 5000
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0 or not 0.0 <= self.gae_lambda <= 1.0:
            raise ValueError("gamma and gae_lambda must be in [0, 1]")
        if self.clip <= 0.0:
            raise ValueError("clip must be positive")


@dataclass
class TransitionBatch:
    """Flattened rollout transitions ready for a PPO minibatch."""

    mean_guest: np.ndarray        # (n, D)
    episode_uttered: np.ndarray   # (n, T, D) full episode, sliced by turn
    turns: np.ndarray             # (n,)
    masks: np.ndarray             # (n, V)
    actions: np.ndarray           # (n,)
    behavior_log_probs: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray

    def __len__(self) -> int:
        return len(self.actions)

    def select(self, idx: np.ndarray) -> "TransitionBatch":
        return TransitionBatch(
            mean_guest=self.mean_guest[idx], episode_uttered=self.episode_uttered[idx],
            turns=self.turns[idx], masks=self.masks[idx], actions=self.actions[idx],
            behavior_log_probs=self.behavior_log_probs[idx],
            advantages=self.advantages[idx], returns=self.returns[idx])


def ppo_update(model: EnquirerModel, batch: TransitionBatch,
               config: PpoConfig) -> dict:
    """One clipped-surrogate update on a minibatch of transitions.

    Advantages are normalized to zero mean and unit variance within the
    batch.  The objective is max E[min(ratio * A, clip(ratio) * A)]
    plus an entropy bonus minus the value regression term; one Adam step
    with global-norm clipping applies the combined gradient.
    """
    n = len(batch)
    adv = batch.advantages
    adv = (adv - adv.mean()) / (adv.std() + 1e-8)

    rows = np.arange(n)
    new_log_probs = np.zeros(n)
    values = np.zeros(n)
    entropies = np.zeros(n)
    groups = []
    for turn in np.unique(batch.turns):
        sel = rows[batch.turns == turn]
        out = _forward_core(model, batch.mean_guest[sel],
                            batch.episode_uttered[sel, :turn], batch.masks[sel])
        groups.append((sel, out))
        new_log_probs[sel] = out.log_probs[np.arange(len(sel)), batch.actions[sel]]
        values[sel] = out.value
        entropies[sel] = neural.categorical_entropy(out.probs, out.log_probs)

    ratios = np.exp(new_log_probs - batch.behavior_log_probs)
    if not np.all(np.isfinite(ratios)):
        bad = int(np.flatnonzero(~np.isfinite(ratios))[0])
        raise RuntimeError(
            f"non-finite PPO ratio at transition {bad} "
            f"(turn {int(batch.turns[bad])}, action {int(batch.actions[bad])})")
    surrogate = np.minimum(ratios * adv, np.clip(ratios, 1.0 - config.clip,
                                                 1.0 + config.clip) * adv)
    value_err = values - batch.returns

    # d(surrogate)/d(ratio) is the advantage wherever the unclipped branch
    # is active, zero on the flat clipped branch.
    active = np.where(adv >= 0.0, ratios <= 1.0 + config.clip,
                      ratios >= 1.0 - config.clip)
    d_logp = -(adv * ratios * active) / n
    d_value = 2.0 * config.value_coef * value_err / n

    for sel, out in groups:
        one_hot = np.zeros_like(out.probs)
        one_hot[np.arange(len(sel)), batch.actions[sel]] = 1.0
        dlogits = d_logp[sel, None] * (one_hot - out.probs)
        safe_logp = np.where(out.probs > 0.0, out.log_probs, 0.0)
        dlogits += (config.entropy_coef / n) * out.probs * (safe_logp + entropies[sel, None])
        _backward_core(model, out, dlogits, d_value[sel])
    neural.adam_step(model.store, config.lr, clip_norm=config.grad_clip)

    return {"policy_loss": float(-surrogate.mean()),
            "value_loss": float(np.mean(value_err ** 2)),
            "entropy": float(entropies.mean()),
            "mean_ratio": float(ratios.mean())}


def _default_reward(guesser: GuesserModel):
    def reward(actions, guests, uttered, targets):
        return guesser_success(guesser, guests, uttered, targets)
    return reward


def _collect_rollout(model: EnquirerModel, corpus: Corpus, n_episodes: int,
                     config: PpoConfig, rng: np.random.Generator,
                     reward_fn) -> tuple[TransitionBatch, np.ndarray]:
    e, t_max, v = n_episodes, config.word_budget, corpus.vocab_size
    guest_rows, targets = sample_game_batch(corpus, e, config.n_guests, rng)
    guests = corpus.voice_prints[guest_rows]
    target_rows = guest_rows[np.arange(e), targets]
    mean_guest = guests.mean(axis=1)

    uttered = np.zeros((e, t_max, corpus.dimension))
    masks = np.zeros((e, t_max, v), dtype=bool)
    actions = np.zeros((e, t_max), dtype=np.int64)
    log_probs = np.zeros((e, t_max))
    values = np.zeros((e, t_max))
    mask_now = np.zeros((e, v), dtype=bool)
    for turn in range(t_max):
        masks[:, turn] = mask_now
        out = _forward_core(model, mean_guest, uttered[:, :turn], mask_now)
        acts = sample_actions(out.probs, "explore", rng)
        actions[:, turn] = acts
        log_probs[:, turn] = out.log_probs[np.arange(e), acts]
        values[:, turn] = out.value
        mask_now = mask_now.copy()
        mask_now[np.arange(e), acts] = True
        uttered[:, turn] = corpus.utterances[target_rows, acts]

    episode_rewards = np.asarray(reward_fn(actions, guests, uttered, targets),
                                 dtype=np.float64)
    rewards = np.zeros((e, t_max))
    rewards[:, -1] = episode_rewards
    advantages, returns = compute_gae(rewards, values, config.gamma, config.gae_lambda)

    batch = TransitionBatch(
        mean_guest=np.repeat(mean_guest, t_max, axis=0),
        episode_uttered=np.repeat(uttered, t_max, axis=0),
        turns=np.tile(np.arange(t_max), e),
        masks=masks.reshape(e * t_max, v),
        actions=actions.ravel(), behavior_log_probs=log_probs.ravel(),
        advantages=advantages.ravel(), returns=returns.ravel())
    return batch, episode_rewards


def train_enquirer(guesser: GuesserModel | None, corpus: Corpus, config: PpoConfig,
                   reward_fn=None) -> tuple[EnquirerModel, list[dict]]:
    """PPO training against a frozen guesser (or a custom reward).

    Episodes are rolled out in explore mode; whenever ``horizon``
    transitions have accumulated, ``update_batches`` minibatches of
    ``update_batch_size`` transitions are drawn and applied.  Returns the
    model and a curve of dicts (episode, moving_avg_reward, entropy,
    value_loss, policy_loss); the moving average covers the trailing 1000
    episodes.  Raises RewardCollapse after ``collapse_patience``
    consecutive zero-reward episodes.
    """
    if reward_fn is None:
        if guesser is None:
            raise ValueError("need a guesser or an explicit reward_fn")
        reward_fn = _default_reward(guesser)
    rng = np.random.default_rng(config.seed)
    model = EnquirerModel.init(
        EnquirerConfig(dim=corpus.dimension, vocab_size=corpus.vocab_size), rng)

    episodes_per_round = max(1, int(np.ceil(config.horizon / config.word_budget)))
    curve: list[dict] = []
    reward_history: list[float] = []
    zero_run = 0
    episodes_done = 0
    start = time.perf_counter()
    while episodes_done < config.episodes:
        n_episodes = min(episodes_per_round, config.episodes - episodes_done)
        batch, episode_rewards = _collect_rollout(
            model, corpus, n_episodes, config, rng, reward_fn)
        episodes_done += n_episodes
        reward_history.extend(episode_rewards.tolist())

        nonzero = np.flatnonzero(episode_rewards)
        zero_run = (zero_run + n_episodes if nonzero.size == 0
                    else n_episodes - 1 - int(nonzero[-1]))
        if zero_run >= config.collapse_patience:
            raise RewardCollapse(
                f"no reward in the last {zero_run} episodes "
                f"({episodes_done} played, lr={config.lr}, clip={config.clip})")

        stats = []
        for _ in range(config.update_batches):
            size = min(config.update_batch_size, len(batch))
            idx = rng.choice(len(batch), size=size, replace=False)
            stats.append(ppo_update(model, batch.select(idx), config))
        window = reward_history[-1000:]
        curve.append({"episode": episodes_done,
                      "moving_avg_reward": float(np.mean(window)),
                      "entropy": float(np.mean([s["entropy"] for s in stats])),
                      "value_loss": float(np.mean([s["value_loss"] for s in stats])),
                      "policy_loss": float(np.mean([s["policy_loss"] for s in stats]))})
    if curve:
        curve[-1]["wall_time_s"] = time.perf_counter() - start
    return model, curve


@dataclass
class EnquirerEvalResult:
    success_rate: float
    stderr: float
    word_tuples: np.ndarray   # (n_games, T) requested word ids in order


def evaluate_enquirer(enquirer: EnquirerModel, guesser: GuesserModel, corpus: Corpus,
                      n_guests: int, word_budget: int, n_games: int, seed: int,
                      chunk: int = 4096) -> EnquirerEvalResult:
    """Greedy no-replacement rollouts scored by the guesser.

    Also returns the per-game requested word tuples, which feed the
    diversity index.
    """
    rng = np.random.default_rng(seed)
    hits = 0
    tuples = []
    done = 0
    while done < n_games:
        b = min(chunk, n_games - done)
        guest_rows, targets = sample_game_batch(corpus, b, n_guests, rng)
        guests = corpus.voice_prints[guest_rows]
        target_rows = guest_rows[np.arange(b), targets]
        mean_guest = guests.mean(axis=1)
        uttered = np.zeros((b, word_budget, corpus.dimension))
        mask_now = np.zeros((b, corpus.vocab_size), dtype=bool)
        actions = np.zeros((b, word_budget), dtype=np.int64)
        for turn in range(word_budget):
            out = _forward_core(enquirer, mean_guest, uttered[:, :turn], mask_now)
            acts = sample_actions(out.probs, "greedy")
            actions[:, turn] = acts
            mask_now[np.arange(b), acts] = True
            uttered[:, turn] = corpus.utterances[target_rows, acts]
        hits += int(guesser_success(guesser, guests, uttered, targets).sum())
        tuples.append(actions)
        done += b
    rate = hits / n_games
    stderr = float(np.sqrt(rate * (1.0 - rate) / n_games))
    return EnquirerEvalResult(success_rate=rate, stderr=stderr,
                              word_tuples=np.concatenate(tuples, axis=0))
