"""Minimal differentiable layers on plain numpy arrays.

Everything the guesser and enquirer need and nothing more: dense ReLU
networks with inverted dropout, a bidirectional LSTM, stabilized softmax
cross-entropy, and Adam with global-norm gradient clipping.  Parameters
live in a ParamStore keyed by name; backward passes accumulate gradients
into the store and an explicit ``adam_step`` consumes them.

All math is float64.  Every backward pass here is checked against central
finite differences in the test suite, so keep forward and backward in
lockstep when editing.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

CHECKPOINT_FORMAT_VERSION = 1


def _mm(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # A single-row matmul dispatches to a gemv kernel that rounds
    # differently from gemm.  Pad to two rows so a given input row yields
    # bit-identical output no matter the batch it is evaluated in.
    if a.shape[0] == 1:
        return (np.concatenate([a, a], axis=0) @ b)[:1]
    return a @ b


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def uniform_fan_in(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    """Weight init: uniform in +-sqrt(1/fan_in), the stable default here."""
    limit = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-limit, limit, size=shape)


def dropout_mask(rng: np.random.Generator, shape, rate: float) -> np.ndarray:
    """Inverted dropout mask: entries are 0 or 1/(1-rate)."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


class ParamStore:
    """Named parameter tensors with paired gradient and Adam moment buffers."""

    def __init__(self):
        self.values: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self.step_count = 0

    def add(self, name: str, value: np.ndarray) -> np.ndarray:
        if name in self.values:
            raise ValueError(f"parameter {name!r} already registered")
        v = np.array(value, dtype=np.float64)
        self.values[name] = v
        self.grads[name] = np.zeros_like(v)
        self._m[name] = np.zeros_like(v)
        self._v[name] = np.zeros_like(v)
        return v

    def names(self) -> list[str]:
        return list(self.values)

    def n_parameters(self) -> int:
        return sum(v.size for v in self.values.values())

    def zero_grads(self) -> None:
        for g in self.grads.values():
            g[...] = 0.0

    def grad_norm(self) -> float:
        total = 0.0
        for g in self.grads.values():
            total += float(np.sum(g * g))
        return float(np.sqrt(total))


def clip_grads_global_norm(store: ParamStore, max_norm: float) -> float:
    """Scale all gradients so their joint L2 norm is at most ``max_norm``."""
    norm = store.grad_norm()
    if norm > max_norm:
        scale = max_norm / norm
        for g in store.grads.values():
            g *= scale
    return norm


def adam_step(store: ParamStore, lr: float, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8,
              clip_norm: float | None = None) -> None:
    """One Adam update with bias correction; zeroes gradients afterwards.

    Raises ValueError naming the parameter if any gradient is non-finite.
    When ``clip_norm`` is given, global-norm clipping runs before the step.
    """
    for name, g in store.grads.items():
        if not np.all(np.isfinite(g)):
            raise ValueError(f"non-finite gradient in parameter {name!r}")
    if clip_norm is not None:
        clip_grads_global_norm(store, clip_norm)
    t = store.step_count + 1
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for name, p in store.values.items():
        g = store.grads[name]
        m = store._m[name]
        v = store._v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    store.step_count = t
    store.zero_grads()


# ---------------------------------------------------------------------------
# Dense ReLU network


@dataclass(frozen=True)
class MlpSpec:
    """Affine -> ReLU -> dropout -> ... -> affine chain."""

    in_width: int
    hidden: tuple[int, ...]
    out_width: int
    dropout: float = 0.0

    def __post_init__(self):
        widths = (self.in_width, *self.hidden, self.out_width)
        if any(w < 1 for w in widths):
            raise ValueError(f"all widths must be >= 1, got {widths}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")


def init_mlp(store: ParamStore, prefix: str, spec: MlpSpec,
             rng: np.random.Generator) -> None:
    widths = (spec.in_width, *spec.hidden, spec.out_width)
    for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
        store.add(f"{prefix}/W{i}", uniform_fan_in(rng, a, (a, b)))
        store.add(f"{prefix}/b{i}", np.zeros(b))


class MlpCache:
    """Intermediates for one forward pass; consumable exactly once."""

    __slots__ = ("affine_inputs", "relu_outputs", "dropout_masks", "consumed")

    def __init__(self, affine_inputs, relu_outputs, dropout_masks):
        self.affine_inputs = affine_inputs
        self.relu_outputs = relu_outputs
        self.dropout_masks = dropout_masks
        self.consumed = False


def mlp_forward(store: ParamStore, prefix: str, spec: MlpSpec, x: np.ndarray,
                train: bool = False,
                rng: np.random.Generator | None = None) -> tuple[np.ndarray, MlpCache]:
    """Run the network on a (batch, in_width) matrix.

    Dropout is applied after each ReLU only when ``train`` is true; eval
    mode is the identity thanks to inverted-dropout scaling at train time.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != spec.in_width:
        raise ValueError(f"expected input of shape (n, {spec.in_width}), got {x.shape}")
    use_dropout = train and spec.dropout > 0.0
    if use_dropout and rng is None:
        raise ValueError("train-mode dropout requires an rng")
    n_affine = len(spec.hidden) + 1
    h = x
    affine_inputs, relu_outputs, dropout_masks = [], [], []
    for i in range(n_affine):
        affine_inputs.append(h)
        h = _mm(h, store.values[f"{prefix}/W{i}"]) + store.values[f"{prefix}/b{i}"]
        if i < n_affine - 1:
            h = relu(h)
            relu_outputs.append(h)
            if use_dropout:
                mask = dropout_mask(rng, h.shape, spec.dropout)
                h = h * mask
                dropout_masks.append(mask)
            else:
                dropout_masks.append(None)
    return h, MlpCache(affine_inputs, relu_outputs, dropout_masks)


def mlp_backward(store: ParamStore, prefix: str, spec: MlpSpec,
                 cache: MlpCache, dout: np.ndarray) -> np.ndarray:
    """Accumulate parameter gradients; return the gradient w.r.t. the input."""
    if cache.consumed:
        raise ValueError("mlp backward cache already consumed")
    cache.consumed = True
    d = np.asarray(dout, dtype=np.float64)
    n_affine = len(spec.hidden) + 1
    for i in reversed(range(n_affine)):
        store.grads[f"{prefix}/W{i}"] += cache.affine_inputs[i].T @ d
        store.grads[f"{prefix}/b{i}"] += d.sum(axis=0)
        d = d @ store.values[f"{prefix}/W{i}"].T
        if i > 0:
            mask = cache.dropout_masks[i - 1]
            if mask is not None:
                d = d * mask
            d = d * (cache.relu_outputs[i - 1] > 0.0)
    return d


# ---------------------------------------------------------------------------
# Bidirectional LSTM


@dataclass(frozen=True)
class BiLstmSpec:
    """Per-direction hidden width; outputs are the 2*hidden concatenation."""

    in_width: int
    hidden: int

    @property
    def out_width(self) -> int:
        return 2 * self.hidden


def init_bilstm(store: ParamStore, prefix: str, spec: BiLstmSpec,
                rng: np.random.Generator) -> None:
    # Gate layout along the last axis: input, forget, cell, output.
    # Forget bias starts at +1 so early training does not wash out state.
    fan = spec.in_width + spec.hidden
    for tag in ("f", "b"):
        store.add(f"{prefix}/W{tag}", uniform_fan_in(rng, fan, (fan, 4 * spec.hidden)))
        bias = np.zeros(4 * spec.hidden)
        bias[spec.hidden:2 * spec.hidden] = 1.0
        store.add(f"{prefix}/b{tag}", bias)


class BiLstmCache:
    __slots__ = ("inputs", "steps_f", "steps_b", "consumed")

    def __init__(self, inputs, steps_f, steps_b):
        self.inputs = inputs
        self.steps_f = steps_f
        self.steps_b = steps_b
        self.consumed = False


def _lstm_direction_forward(W, bias, inputs, order, hidden):
    batch = inputs.shape[0]
    h = np.zeros((batch, hidden))
    c = np.zeros((batch, hidden))
    states = np.zeros((batch, inputs.shape[1], hidden))
    steps = []
    for pos in order:
        xh = np.concatenate([inputs[:, pos, :], h], axis=1)
        gates = _mm(xh, W) + bias
        i = sigmoid(gates[:, :hidden])
        f = sigmoid(gates[:, hidden:2 * hidden])
        g = np.tanh(gates[:, 2 * hidden:3 * hidden])
        o = sigmoid(gates[:, 3 * hidden:])
        c_prev = c
        c = f * c_prev + i * g
        tanh_c = np.tanh(c)
        h = o * tanh_c
        states[:, pos, :] = h
        steps.append((pos, xh, i, f, g, o, c_prev, tanh_c))
    return states, steps


def bilstm_forward(store: ParamStore, prefix: str, spec: BiLstmSpec,
                   sequence: np.ndarray,
                   start_token: np.ndarray) -> tuple[np.ndarray, BiLstmCache]:
    """Encode ``[start_token, x_1..x_T]``; returns (batch, T+1, 2*hidden).

    ``sequence`` is (batch, T, in_width) with T >= 0; the learned start
    token is prepended as the position-0 input so an empty sequence still
    produces one output.  Position t carries the concatenation of the
    forward state and the backward state at t.
    """
    sequence = np.asarray(sequence, dtype=np.float64)
    if sequence.ndim != 3 or sequence.shape[2] != spec.in_width:
        raise ValueError(f"expected sequence of shape (n, t, {spec.in_width}), got {sequence.shape}")
    start_token = np.asarray(start_token, dtype=np.float64)
    if start_token.shape != (spec.in_width,):
        raise ValueError(f"start token must have shape ({spec.in_width},), got {start_token.shape}")
    batch, t_len = sequence.shape[:2]
    inputs = np.concatenate(
        [np.broadcast_to(start_token, (batch, 1, spec.in_width)), sequence], axis=1)
    length = t_len + 1
    states_f, steps_f = _lstm_direction_forward(
        store.values[f"{prefix}/Wf"], store.values[f"{prefix}/bf"],
        inputs, range(length), spec.hidden)
    states_b, steps_b = _lstm_direction_forward(
        store.values[f"{prefix}/Wb"], store.values[f"{prefix}/bb"],
        inputs, range(length - 1, -1, -1), spec.hidden)
    hidden = np.concatenate([states_f, states_b], axis=2)
    return hidden, BiLstmCache(inputs, steps_f, steps_b)


def _lstm_direction_backward(store, w_name, b_name, steps, d_states, hidden):
    W = store.values[w_name]
    dW = store.grads[w_name]
    db = store.grads[b_name]
    batch = d_states.shape[0]
    in_width = W.shape[0] - hidden
    d_inputs = np.zeros((batch, d_states.shape[1], in_width))
    dh_next = np.zeros((batch, hidden))
    dc_next = np.zeros((batch, hidden))
    for pos, xh, i, f, g, o, c_prev, tanh_c in reversed(steps):
        dh = d_states[:, pos, :] + dh_next
        do = dh * tanh_c
        dc = dc_next + dh * o * (1.0 - tanh_c * tanh_c)
        di = dc * g
        df = dc * c_prev
        dg = dc * i
        dc_next = dc * f
        dgates = np.concatenate(
            [di * i * (1.0 - i), df * f * (1.0 - f),
             dg * (1.0 - g * g), do * o * (1.0 - o)], axis=1)
        dW += xh.T @ dgates
        db += dgates.sum(axis=0)
        dxh = dgates @ W.T
        d_inputs[:, pos, :] = dxh[:, :in_width]
        dh_next = dxh[:, in_width:]
    return d_inputs


def bilstm_backward(store: ParamStore, prefix: str, spec: BiLstmSpec,
                    cache: BiLstmCache, d_hidden: np.ndarray) -> np.ndarray:
    """Accumulate LSTM gradients; return gradients w.r.t. the T+1 inputs.

    Row 0 of the result is the start-token gradient for each batch element.
    """
    if cache.consumed:
        raise ValueError("bilstm backward cache already consumed")
    cache.consumed = True
    d_hidden = np.asarray(d_hidden, dtype=np.float64)
    h = spec.hidden
    d_in = _lstm_direction_backward(
        store, f"{prefix}/Wf", f"{prefix}/bf", cache.steps_f, d_hidden[:, :, :h], h)
    d_in += _lstm_direction_backward(
        store, f"{prefix}/Wb", f"{prefix}/bb", cache.steps_b, d_hidden[:, :, h:], h)
    return d_in


# ---------------------------------------------------------------------------
# Softmax machinery


def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    """Max-subtracted softmax; -inf logits map to exactly zero probability."""
    z = logits - np.max(logits, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    z = logits - np.max(logits, axis=axis, keepdims=True)
    return z - np.log(np.sum(np.exp(z), axis=axis, keepdims=True))


def softmax_cross_entropy(logits: np.ndarray, target) -> tuple[np.ndarray, np.ndarray]:
    """Cross-entropy of softmax(logits) at ``target`` with its logit gradient.

    1-D logits with an int target give a scalar loss; 2-D logits with a
    vector of targets give per-row losses.  The gradient is always
    softmax(logits) - one_hot(target).
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim == 1:
        loss, grad = softmax_cross_entropy(logits[None, :], np.array([target]))
        return float(loss[0]), grad[0]
    targets = np.asarray(target)
    n, width = logits.shape
    if targets.shape != (n,):
        raise ValueError(f"expected {n} targets, got shape {targets.shape}")
    if np.any(targets < 0) or np.any(targets >= width):
        raise ValueError(f"target index out of range for width {width}")
    logp = log_softmax(logits, axis=1)
    rows = np.arange(n)
    loss = -logp[rows, targets]
    grad = np.exp(logp)
    grad[rows, targets] -= 1.0
    return loss, grad


def masked_log_softmax(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Log-probabilities with masked entries forced to -inf (probability 0).

    ``mask`` is boolean, True marking entries to exclude.  Raises if any
    row has every entry masked.
    """
    logits = np.asarray(logits, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != logits.shape:
        raise ValueError(f"mask shape {mask.shape} != logits shape {logits.shape}")
    if np.any(mask.all(axis=-1)):
        raise ValueError("all actions masked in at least one row")
    masked = np.where(mask, -np.inf, logits)
    z = masked - np.max(masked, axis=-1, keepdims=True)
    # exp(-inf) is exactly 0, so masked entries never contribute to the sum
    lse = np.log(np.sum(np.exp(z), axis=-1, keepdims=True))
    return z - lse


def categorical_entropy(probs: np.ndarray, log_probs: np.ndarray) -> np.ndarray:
    """Entropy per row, treating p=0 entries as contributing nothing."""
    safe = np.where(probs > 0.0, log_probs, 0.0)   # avoids 0 * -inf
    return -(probs * safe).sum(axis=-1)


# ---------------------------------------------------------------------------
# Numerical gradient checking


def numerical_gradient(f, x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function at ``x``."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + step
        hi = f(x)
        x[idx] = orig - step
        lo = f(x)
        x[idx] = orig
        grad[idx] = (hi - lo) / (2.0 * step)
        it.iternext()
    return grad


def max_relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-8) -> float:
    """Max elementwise |a-b| / max(|a|, |b|), with discrepancies at or
    below the absolute ``floor`` counted as zero (finite-difference noise
    on near-zero gradients sits well under it)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size == 0:
        return 0.0
    diff = np.abs(a - b)
    denom = np.maximum(np.abs(a), np.abs(b))
    with np.errstate(invalid="ignore", divide="ignore"):
        rel = np.where(diff <= floor, 0.0, diff / denom)
    return float(np.max(rel))


# ---------------------------------------------------------------------------
# Checkpoints


def arch_hash(arch: dict) -> str:
    return hashlib.sha256(json.dumps(arch, sort_keys=True).encode()).hexdigest()


def save_params(path, store: ParamStore, kind: str, arch: dict) -> None:
    """Write parameters as JSON: name -> shape + flat value list.

    The file carries a format version and a hash of the architecture
    dictionary so mismatched models are rejected at load time.
    """
    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "kind": kind,
        "arch": arch,
        "arch_hash": arch_hash(arch),
        "step_count": store.step_count,
        "params": {
            name: {"shape": list(value.shape), "values": value.ravel().tolist()}
            for name, value in store.values.items()
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_params(path) -> tuple[ParamStore, str, dict]:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    version = payload.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format version {version!r}")
    arch = payload["arch"]
    if arch_hash(arch) != payload["arch_hash"]:
        raise ValueError("checkpoint architecture hash mismatch")
    store = ParamStore()
    for name, rec in payload["params"].items():
        store.add(name, np.asarray(rec["values"], dtype=np.float64).reshape(rec["shape"]))
    store.step_count = int(payload.get("step_count", 0))
    return store, payload["kind"], arch
