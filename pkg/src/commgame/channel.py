"""Communication channels: continuous, Gumbel-softmax, and quantized words.

A message is a sequence of one or more words; a word is a vector whose
entries are real (continuous mode), integer quantization levels
(quantized mode), or a one-hot choice over the alphabet (Gumbel-softmax).
The Instant channel emits a single word through a linear projection; the
Recurrent channel emits several words step by step through a GRU.

The quantizer maps a min-max normalized word onto a uniform grid with
spacing ``S`` (the scaling factor) by rounding, and scales back, so the
round-trip error is at most S/2 per element. Training through the rounding
uses the straight-through estimator: identity backward, no clipping.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ConfigError, ContractError, ShapeError, UnsupportedModeError
from .nn import GruCell, Linear, glorot_uniform
from .rng import Rng
from .tensor import Tensor, apply_op, as_tensor, parameter

MODES = ("continuous", "gumbel_softmax", "quantized")
ARCHITECTURES = ("instant", "recurrent")
REGIMES = ("train_and_infer", "infer_only")
SCHEMES = ("levels", "paper")

_INT64_MAX = 2**63 - 1
_DEGENERATE_SPAN = 1e-12  # absolute tolerance: below this a word is constant
_QUANTIZE_SLACK = 1e-9  # allowed excursion outside [0, 1] before erroring


@dataclass(frozen=True)
class ChannelSpec:
    """Static description of one communication channel."""

    mode: str
    architecture: str = "instant"
    alphabet_size: int | None = None
    word_length: int = 1
    message_length: int = 1
    quantize_regime: str = "infer_only"
    quantizer_scheme: str = "levels"
    gs_temperature: float = 1.0
    gs_straight_through: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.architecture not in ARCHITECTURES:
            raise ConfigError(f"unknown architecture {self.architecture!r}")
        if self.quantize_regime not in REGIMES:
            raise ConfigError(f"unknown quantize_regime {self.quantize_regime!r}")
        if self.quantizer_scheme not in SCHEMES:
            raise ConfigError(f"unknown quantizer_scheme {self.quantizer_scheme!r}")
        if self.word_length < 1 or self.message_length < 1:
            raise ConfigError("word_length and message_length must be positive")
        if self.architecture == "instant" and self.message_length != 1:
            raise ConfigError("the Instant channel sends single-word messages")
        if self.mode == "quantized":
            if self.alphabet_size is None or self.alphabet_size < 2:
                raise ConfigError("quantized mode needs an alphabet size of at least 2")
        if self.mode == "gumbel_softmax":
            if self.alphabet_size is None or self.alphabet_size < 2:
                raise ConfigError("gumbel_softmax mode needs an alphabet size of at least 2")
            if self.alphabet_size != self.word_length:
                raise ConfigError(
                    "gumbel_softmax words are one-hot: alphabet_size must equal word_length"
                )
            if self.gs_temperature <= 0:
                raise ConfigError("gs_temperature must be positive")

    @property
    def discrete(self) -> bool:
        return self.mode in ("gumbel_softmax", "quantized")


@dataclass
class MessageBatch:
    """One batch of emitted messages.

    ``words`` are the tensors fed to the receiver (dequantized floats in
    [0, 1] for quantized mode, simplex/one-hot rows for Gumbel-softmax).
    ``symbols`` is the discrete integer view, present whenever the emitted
    words are discrete (absent for continuous mode and for any mode whose
    training-time words are still continuous).
    """

    words: list  # message_length tensors of shape [b x word_length]
    symbols: np.ndarray | None  # [b x message_length x word_length] int64
    mode: str

    @property
    def batch_size(self) -> int:
        return self.words[0].shape[0]

    @property
    def message_length(self) -> int:
        return len(self.words)

    @property
    def word_length(self) -> int:
        return self.words[0].shape[1]

    @property
    def dequantized(self) -> np.ndarray:
        """Floating-point view as one array [b x message_length x word_length]."""
        return np.stack([w.data for w in self.words], axis=1)


# ---------------------------------------------------------------------------
# word-level operations


def normalize(msg) -> Tensor:
    """Min-max normalize each word (last axis) onto [0, 1].

    The minimum maps to 0 and the maximum to 1. A constant word (span
    below 1e-12 in absolute terms) maps to all zeros. Differentiable;
    ties route their gradient through the first extreme element.
    """
    t = as_tensor(msg)
    x = t.data
    lo = x.min(axis=-1, keepdims=True)
    hi = x.max(axis=-1, keepdims=True)
    span = hi - lo
    degenerate = span <= _DEGENERATE_SPAN
    safe = np.where(degenerate, 1.0, span)
    y = np.where(degenerate, 0.0, (x - lo) / safe)
    imin = np.expand_dims(x.argmin(axis=-1), -1)
    imax = np.expand_dims(x.argmax(axis=-1), -1)

    def vjp(g):
        # y_i = (x_i - min) / span, so besides the direct 1/span term the
        # argmin collects -sum(g)/span + sum(g*y)/span and the argmax
        # collects -sum(g*y)/span.
        gs = g / safe
        total = gs.sum(axis=-1, keepdims=True)
        weighted = (gs * y).sum(axis=-1, keepdims=True)
        out = gs.copy()
        np.put_along_axis(
            out, imin, np.take_along_axis(out, imin, -1) + weighted - total, -1
        )
        np.put_along_axis(out, imax, np.take_along_axis(out, imax, -1) - weighted, -1)
        return (np.where(degenerate, 0.0, out),)

    return apply_op(y, (t,), vjp)


def scaling_factor(spec: ChannelSpec) -> float:
    """Grid spacing of the uniform quantizer over the normalized range [0, 1].

    The ``levels`` scheme spreads exactly ``alphabet_size`` levels over
    [0, 1], giving S = 1/(v-1); the ``paper`` scheme divides the range into
    ``alphabet_size`` partitions, S = 1/v (zero point fixed at 0).
    """
    v = spec.alphabet_size
    if v is None or v < 2:
        raise ConfigError(f"scaling factor needs an alphabet size of at least 2, got {v}")
    if spec.quantizer_scheme == "levels":
        return 1.0 / (v - 1)
    return 1.0 / v


def _round_half_away_from_zero(x: np.ndarray) -> np.ndarray:
    # fixed rounding rule so results do not depend on platform defaults
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def symbol_range(spec: ChannelSpec) -> tuple[int, int]:
    """Inclusive integer symbol range for the quantizer scheme."""
    v = spec.alphabet_size
    return (0, v - 1) if spec.quantizer_scheme == "levels" else (0, v)


def quantize_word(msg, spec: ChannelSpec) -> tuple[np.ndarray, np.ndarray]:
    """Quantize normalized values: symbols = round(msg / S), dequantized = symbols * S.

    ``msg`` must already be normalized to [0, 1] (a 1e-9 excursion is
    tolerated); anything further out is a contract violation. Returns
    ``(dequantized, symbols)`` with symbols clamped to the scheme's range,
    so ``|dequantized - msg| <= S/2`` elementwise.
    """
    x = msg.data if isinstance(msg, Tensor) else np.asarray(msg, dtype=np.float64)
    if x.size and (x.min() < -_QUANTIZE_SLACK or x.max() > 1.0 + _QUANTIZE_SLACK):
        raise ContractError(
            f"quantizer input outside [0, 1]: range [{x.min()}, {x.max()}]"
        )
    s = scaling_factor(spec)
    lo, hi = symbol_range(spec)
    symbols = np.clip(_round_half_away_from_zero(x / s), lo, hi).astype(np.int64)
    return symbols * s, symbols


def ste_quantize(msg, spec: ChannelSpec) -> Tensor:
    """Quantize with a straight-through backward: the forward pass equals
    ``quantize_word``'s dequantized output, the backward pass is the
    identity (no clipping), so gradients flow through the rounding."""
    t = as_tensor(msg)
    dequantized, _ = quantize_word(t.data, spec)
    return apply_op(dequantized, (t,), lambda g: (g,))


def gumbel_softmax_word(logits, rng: Rng, spec: ChannelSpec, training: bool) -> Tensor:
    """One word as a (relaxed) categorical sample over the alphabet.

    Training returns softmax((logits + g) / temperature) with Gumbel noise
    g = -log(-log(u)); rows sum to 1. Inference returns the exact one-hot
    at argmax(logits), lowest index winning ties. With
    ``gs_straight_through`` the training forward pass is hardened to the
    sample's one-hot while the backward pass stays that of the soft sample.
    """
    t = as_tensor(logits)
    if spec.gs_temperature <= 0:
        raise ConfigError("gs_temperature must be positive")
    if not training:
        hard = np.zeros_like(t.data)
        hard[np.arange(t.data.shape[0]), t.data.argmax(axis=-1)] = 1.0
        return Tensor(hard)
    u = rng.uniform(t.data.shape)
    u = np.clip(u, 1e-300, None)  # u=0 would take log(0)
    noise = -np.log(-np.log(u))
    y = T.softmax(T.div(T.add(t, noise), spec.gs_temperature))
    if spec.gs_straight_through:
        hard = np.zeros_like(y.data)
        hard[np.arange(y.data.shape[0]), y.data.argmax(axis=-1)] = 1.0
        return apply_op(hard, (y,), lambda g: (g,))
    return y


# ---------------------------------------------------------------------------
# channel capacity


def capacity(spec: ChannelSpec) -> int | tuple[int, int]:
    """Unique words per position: alphabet_size ** word_length.

    Counts above the int64 range are reported symbolically as
    ``(base, exponent)``.
    """
    if spec.mode == "continuous":
        raise UnsupportedModeError("continuous words have an uncountable alphabet")
    return _power_or_symbolic(spec.alphabet_size, spec.word_length)


def message_capacity(spec: ChannelSpec) -> int | tuple[int, int]:
    """Unique messages: per-word capacity raised to the message length."""
    if spec.mode == "continuous":
        raise UnsupportedModeError("continuous words have an uncountable alphabet")
    return _power_or_symbolic(spec.alphabet_size, spec.word_length * spec.message_length)


def effective_message_capacity(spec: ChannelSpec) -> int | tuple[int, int]:
    """Distinct messages actually emittable by the mode.

    Gumbel-softmax words are one-hot, so each word carries one of
    ``alphabet_size`` symbols regardless of its vector length; quantized
    words use the full combinatorial space.
    """
    if spec.mode == "continuous":
        raise UnsupportedModeError("continuous words have an uncountable alphabet")
    if spec.mode == "gumbel_softmax":
        return _power_or_symbolic(spec.alphabet_size, spec.message_length)
    return message_capacity(spec)


def _power_or_symbolic(base: int, exponent: int) -> int | tuple[int, int]:
    value = base**exponent
    return value if value <= _INT64_MAX else (base, exponent)


# ---------------------------------------------------------------------------
# channel networks


class InstantSenderChannel:
    """Projects the encoded target to one word."""

    def __init__(self, hidden_dim: int, spec: ChannelSpec, rng: Rng):
        self.proj = Linear(hidden_dim, spec.word_length, rng)

    def parameters(self) -> dict[str, Tensor]:
        return {f"proj.{k}": v for k, v in self.proj.parameters().items()}


class RecurrentSenderChannel:
    """Emits words step by step from a GRU seeded with the encoded target.

    The first step consumes a learned start-of-message vector; afterwards
    each emitted word is embedded and fed back as the next input.
    """

    def __init__(self, hidden_dim: int, embed_dim: int, spec: ChannelSpec, rng: Rng):
        self.out = Linear(hidden_dim, spec.word_length, rng)
        if spec.mode == "gumbel_softmax":
            self.embed = parameter(glorot_uniform(spec.alphabet_size, embed_dim, rng))
        else:
            self.embed = Linear(spec.word_length, embed_dim, rng)
        self.gru = GruCell(embed_dim, hidden_dim, rng)
        self.start = parameter(np.zeros((1, embed_dim)))

    def embed_word(self, word: Tensor) -> Tensor:
        if isinstance(self.embed, Linear):
            return self.embed(word)
        return T.matmul(word, self.embed)

    def parameters(self) -> dict[str, Tensor]:
        params = {f"out.{k}": v for k, v in self.out.parameters().items()}
        if isinstance(self.embed, Linear):
            params.update({f"embed.{k}": v for k, v in self.embed.parameters().items()})
        else:
            params["embed.weight"] = self.embed
        params.update({f"gru.{k}": v for k, v in self.gru.parameters().items()})
        params["start"] = self.start
        return params


class InstantReceiverChannel:
    """Decodes a one-word message with a linear map."""

    def __init__(self, hidden_dim: int, spec: ChannelSpec, rng: Rng):
        self.decode = Linear(spec.word_length, hidden_dim, rng)

    def parameters(self) -> dict[str, Tensor]:
        return {f"decode.{k}": v for k, v in self.decode.parameters().items()}


class RecurrentReceiverChannel:
    """Embeds each word and folds the sequence through a GRU."""

    def __init__(self, hidden_dim: int, embed_dim: int, spec: ChannelSpec, rng: Rng):
        if spec.mode == "gumbel_softmax":
            self.embed = parameter(glorot_uniform(spec.alphabet_size, embed_dim, rng))
        else:
            self.embed = Linear(spec.word_length, embed_dim, rng)
        self.gru = GruCell(embed_dim, hidden_dim, rng)
        self.hidden_dim = hidden_dim

    def embed_word(self, word: Tensor) -> Tensor:
        if isinstance(self.embed, Linear):
            return self.embed(word)
        return T.matmul(word, self.embed)

    def parameters(self) -> dict[str, Tensor]:
        if isinstance(self.embed, Linear):
            params = {f"embed.{k}": v for k, v in self.embed.parameters().items()}
        else:
            params = {"embed.weight": self.embed}
        params.update({f"gru.{k}": v for k, v in self.gru.parameters().items()})
        return params


def _emit_word(x: Tensor, spec: ChannelSpec, rng: Rng | None, training: bool):
    """Turn a raw projection into one emitted word.

    Returns (word tensor fed onward, [b x word_length] int symbols or None).
    Gumbel-softmax consumes the raw projection as logits; the other modes
    normalize first. Quantization applies per the regime: always at
    inference, and via the straight-through estimator during training only
    under ``train_and_infer``.
    """
    if spec.mode == "gumbel_softmax":
        word = gumbel_softmax_word(x, rng, spec, training)
        symbols = None if training else word.data.astype(np.int64)
        return word, symbols
    normalized = normalize(x)
    if spec.mode == "continuous":
        return normalized, None
    if training and spec.quantize_regime == "infer_only":
        return normalized, None
    dequantized, symbols = quantize_word(normalized.data, spec)
    if training:  # train_and_infer: straight-through estimator
        return apply_op(dequantized, (normalized,), lambda g: (g,)), symbols
    return Tensor(dequantized), symbols


def _stack_symbols(per_word: list) -> np.ndarray | None:
    if any(s is None for s in per_word):
        return None
    return np.stack(per_word, axis=1)


def instant_send(
    encoded: Tensor,
    chan: InstantSenderChannel,
    spec: ChannelSpec,
    rng: Rng | None,
    training: bool,
) -> MessageBatch:
    """Send one word through the Instant channel."""
    if spec.architecture != "instant":
        raise ConfigError(f"instant_send called with architecture {spec.architecture!r}")
    word, symbols = _emit_word(chan.proj(encoded), spec, rng, training)
    return MessageBatch([word], _stack_symbols([symbols]), spec.mode)


def recurrent_send(
    encoded: Tensor,
    chan: RecurrentSenderChannel,
    spec: ChannelSpec,
    rng: Rng | None,
    training: bool,
) -> MessageBatch:
    """Send message_length words through the Recurrent channel."""
    if spec.architecture != "recurrent":
        raise ConfigError(
            f"recurrent_send called with architecture {spec.architecture!r}"
        )
    batch = encoded.shape[0]
    hidden = encoded
    inp = T.repeat_rows(chan.start, batch)
    words, symbols = [], []
    for step in range(spec.message_length):
        hidden = chan.gru.step(hidden, inp)
        word, sym = _emit_word(chan.out(hidden), spec, rng, training)
        words.append(word)
        symbols.append(sym)
        if step + 1 < spec.message_length:
            inp = chan.embed_word(word)
    return MessageBatch(words, _stack_symbols(symbols), spec.mode)


def receive(msg: MessageBatch, chan, spec: ChannelSpec) -> Tensor:
    """Decode a message to the receiver's hidden representation [b x h]."""
    if msg.word_length != spec.word_length:
        raise ShapeError(
            f"message word length {msg.word_length} != spec {spec.word_length}"
        )
    if spec.architecture == "instant":
        return chan.decode(msg.words[0])
    if msg.message_length != spec.message_length:
        raise ShapeError(
            f"message length {msg.message_length} != spec {spec.message_length}"
        )
    hidden = Tensor(np.zeros((msg.batch_size, chan.hidden_dim)))
    for word in msg.words:
        hidden = chan.gru.step(hidden, chan.embed_word(word))
    return hidden
