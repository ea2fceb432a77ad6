"""Sender and receiver agents: encoders composed with channel networks.

The sender encodes the target's features and pushes them through its
channel; the receiver decodes the message and scores every candidate by
the dot product between its decoded hidden state and the candidate's
encoding. Scoring always goes through the full candidate pool and then
selects the episode's candidate columns, which lets the pool encoding be
factorized through the encoder weights once per step instead of once per
candidate row; the result is mathematically identical to encoding each
candidate separately.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .channel import (
    ChannelSpec,
    InstantReceiverChannel,
    InstantSenderChannel,
    MessageBatch,
    RecurrentReceiverChannel,
    RecurrentSenderChannel,
    instant_send,
    receive,
    recurrent_send,
)
from .errors import ConfigError, ShapeError
from .nn import Linear
from .rng import Rng
from .tensor import Tensor, as_tensor

CHECKPOINT_FORMAT = "commgame-checkpoint-v1"


@dataclass(frozen=True)
class AgentDims:
    """Resolved layer sizes. Instant channels tie hidden width to the word
    length; recurrent channels default to 1024 hidden / 1024 embedding."""

    hidden: int
    embedding: int

    @staticmethod
    def resolve(spec: ChannelSpec, hidden: int | None, embedding: int | None) -> "AgentDims":
        if spec.architecture == "instant":
            if hidden is not None and hidden != spec.word_length:
                raise ConfigError(
                    "the Instant channel's hidden width equals the word length"
                )
            return AgentDims(spec.word_length, embedding or 0)
        return AgentDims(hidden or 1024, embedding or 1024)


class Sender:
    def __init__(self, spec: ChannelSpec, input_dim: int, dims: AgentDims, rng: Rng):
        self.spec = spec
        self.encoder = Linear(input_dim, dims.hidden, rng)
        if spec.architecture == "instant":
            self.channel = InstantSenderChannel(dims.hidden, spec, rng)
        else:
            self.channel = RecurrentSenderChannel(dims.hidden, dims.embedding, spec, rng)

    def parameters(self) -> dict[str, Tensor]:
        params = {f"encoder.{k}": v for k, v in self.encoder.parameters().items()}
        params.update({f"channel.{k}": v for k, v in self.channel.parameters().items()})
        return params


class Receiver:
    def __init__(self, spec: ChannelSpec, input_dim: int, dims: AgentDims, rng: Rng):
        self.spec = spec
        self.encoder = Linear(input_dim, dims.hidden, rng)
        if spec.architecture == "instant":
            self.channel = InstantReceiverChannel(dims.hidden, spec, rng)
        else:
            self.channel = RecurrentReceiverChannel(dims.hidden, dims.embedding, spec, rng)

    def parameters(self) -> dict[str, Tensor]:
        params = {f"encoder.{k}": v for k, v in self.encoder.parameters().items()}
        params.update({f"channel.{k}": v for k, v in self.channel.parameters().items()})
        return params


@dataclass
class CandidateSet:
    """Candidates via their pool: feature rows [P x d_in] plus per-row column
    indices [b x n] (None means every row scores the whole pool in order)."""

    pool: np.ndarray
    indices: np.ndarray | None = None


@dataclass
class ScoreBatch:
    """Per-candidate match scores for one batch."""

    logits: Tensor  # [b x n]

    @property
    def predicted(self) -> np.ndarray:
        """Index of the highest score per row; ties go to the lowest index."""
        return self.logits.data.argmax(axis=1)

    @property
    def probabilities(self) -> np.ndarray:
        z = self.logits.data - self.logits.data.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)


def sender_forward(
    target_features,
    sender: Sender,
    spec: ChannelSpec,
    rng: Rng | None,
    training: bool,
) -> MessageBatch:
    """Encode the targets and send the message for this batch."""
    features = as_tensor(target_features)
    if features.data.ndim != 2 or features.data.shape[1] != sender.encoder.in_dim:
        raise ShapeError(
            f"target features {features.shape} do not match encoder input "
            f"{sender.encoder.in_dim}"
        )
    encoded = sender.encoder(features)
    if spec.architecture == "instant":
        return instant_send(encoded, sender.channel, spec, rng, training)
    return recurrent_send(encoded, sender.channel, spec, rng, training)


def pool_scores(decoded: Tensor, encoder: Linear, pool: np.ndarray) -> Tensor:
    """Scores of every pool member: dot(z_i, encoder(pool_j)) as [b x P].

    Computed as (z @ W.T) @ pool.T + (z @ b), contracting through the
    encoder weights first so the pool is never materially re-encoded.
    """
    projected = T.matmul(decoded, T.transpose(encoder.weight))
    scores = T.matmul(projected, Tensor(pool.T))
    bias_term = T.matmul(decoded, T.reshape(encoder.bias, (encoder.out_dim, 1)))
    return T.add(scores, bias_term)


def receiver_forward(
    msg: MessageBatch,
    candidates: CandidateSet,
    receiver: Receiver,
    spec: ChannelSpec,
) -> ScoreBatch:
    """Decode the message and score each candidate for each row."""
    decoded = receive(msg, receiver.channel, spec)
    scores = pool_scores(decoded, receiver.encoder, candidates.pool)
    if candidates.indices is not None:
        scores = T.gather_cols(scores, candidates.indices)
    return ScoreBatch(scores)


def game_loss(scores: ScoreBatch, target_positions) -> Tensor:
    """Cross-entropy between the per-candidate scores and the target slot."""
    return T.softmax_cross_entropy(scores.logits, target_positions)


# ---------------------------------------------------------------------------
# parameter bookkeeping


def named_parameters(sender: Sender, receiver: Receiver) -> dict[str, Tensor]:
    params = {f"sender.{k}": v for k, v in sender.parameters().items()}
    params.update({f"receiver.{k}": v for k, v in receiver.parameters().items()})
    return params


def snapshot(params: dict[str, Tensor]) -> dict[str, np.ndarray]:
    return {k: p.data.copy() for k, p in params.items()}


def restore(params: dict[str, Tensor], snap: dict[str, np.ndarray]) -> None:
    for k, p in params.items():
        np.copyto(p.data, snap[k])


def save_checkpoint(path, params: dict[str, Tensor], meta: dict | None = None) -> None:
    """Write a flat binary checkpoint: one JSON header line naming each
    tensor and shape, then the raw little-endian float64 buffers in order."""
    header = {
        "format": CHECKPOINT_FORMAT,
        "meta": meta or {},
        "tensors": [{"name": k, "shape": list(p.shape)} for k, p in params.items()],
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        for p in params.values():
            fh.write(np.ascontiguousarray(p.data, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode())
        if header.get("format") != CHECKPOINT_FORMAT:
            raise ConfigError(f"{path}: not a {CHECKPOINT_FORMAT} file")
        out = {}
        for entry in header["tensors"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(count * 8)
            if len(buf) != count * 8:
                raise ConfigError(f"{path}: truncated tensor {entry['name']!r}")
            out[entry["name"]] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
    return out, header.get("meta", {})


def load_into(params: dict[str, Tensor], loaded: dict[str, np.ndarray]) -> None:
    """Copy a loaded checkpoint into live parameters, validating names and
    shapes; reports the first mismatch in name order."""
    for name in sorted(set(params) | set(loaded)):
        if name not in loaded:
            raise ConfigError(f"checkpoint mismatch: missing tensor {name!r}")
        if name not in params:
            raise ConfigError(f"checkpoint mismatch: unexpected tensor {name!r}")
        if loaded[name].shape != params[name].shape:
            raise ConfigError(
                f"checkpoint mismatch: tensor {name!r} has shape "
                f"{loaded[name].shape}, expected {params[name].shape}"
            )
    for name, p in params.items():
        np.copyto(p.data, loaded[name])
