"""Training, evaluation, seed replication, and sweeps.

Training follows the game protocol: each step draws a batch of training
targets (shuffled once per epoch from a dedicated stream), builds episodes
with the configured number of negatives (default: the whole candidate
pool), and takes one Adam step on the cross-entropy game loss. After each
epoch the validation targets are scored at a fixed probe candidate count
using the inference path (quantization applied, Gumbel-softmax hardened);
the best-validation parameters are kept and training stops after
``patience`` epochs without improvement, or early once validation is
perfect (a later epoch can never displace a first perfect one).

Evaluation runs one episode per test target for each requested candidate
count; NoUM counts distinct discrete messages over the test targets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .agents import (
    AgentDims,
    CandidateSet,
    Receiver,
    Sender,
    game_loss,
    named_parameters,
    receiver_forward,
    restore,
    save_checkpoint,
    sender_forward,
    snapshot,
)
from .channel import receive
from .agents import pool_scores
from .config import ExperimentConfig, config_to_dict
from .errors import CommGameError, ConfigError, NumericsError, UnsupportedModeError
from .nn import Adam
from .rng import Rng
from .tensor import GradTape, Tensor
from .world import ClassMap, ObjectWorld, Split, build_world, make_class_map, make_split

_EVAL_CHUNK = 1024


@dataclass
class GameSetup:
    """World, split, and freshly initialized agents for one (config, seed)."""

    config: ExperimentConfig
    seed: int
    world: ObjectWorld
    split: Split
    class_map: ClassMap | None
    pool_features: np.ndarray  # [P x d_in] feature rows of the candidate pool
    sender: Sender
    receiver: Receiver

    @property
    def spec(self):
        return self.config.channel

    @property
    def pool_size(self) -> int:
        return len(self.split.candidate_pool)

    def pool_position(self, targets: np.ndarray) -> np.ndarray:
        """Where each target lives in the canonical candidate pool."""
        targets = np.asarray(targets, dtype=np.int64)
        if self.class_map is not None:
            return self.class_map.labels[targets]
        return targets

    def params(self):
        return named_parameters(self.sender, self.receiver)


def build_setup(cfg: ExperimentConfig, seed: int) -> GameSetup:
    rng = Rng(seed)
    world = build_world(cfg.world.num_attributes, cfg.world.values_per_attribute)
    class_map = None
    num_classes = None
    if cfg.game == "object_classification":
        class_map = make_class_map(
            world, cfg.classes.scheme, cfg.classes.num_classes, rng.stream("class-map")
        )
        num_classes = class_map.num_classes
    split = make_split(world, (0.8, 0.1, 0.1), rng.stream("data-split"), num_classes=num_classes)
    pool_features = np.eye(num_classes) if class_map is not None else world.encodings
    dims = AgentDims.resolve(cfg.channel, cfg.agents.hidden_size, cfg.agents.embedding_size)
    init = rng.stream("init")
    sender = Sender(cfg.channel, world.encoding_dim, dims, init)
    receiver = Receiver(cfg.channel, pool_features.shape[1], dims, init)
    return GameSetup(cfg, seed, world, split, class_map, pool_features, sender, receiver)


# ---------------------------------------------------------------------------
# inference-path scoring


def inference_scores(setup: GameSetup, targets: np.ndarray):
    """Score every pool member for each target at inference.

    Returns (scores [m x P], symbols [m x M x L] or None). Runs without a
    tape; chunked so large target sets stay within memory.
    """
    scores, symbols = [], []
    have_symbols = True
    for start in range(0, len(targets), _EVAL_CHUNK):
        chunk = targets[start : start + _EVAL_CHUNK]
        feats = Tensor(setup.world.encodings[chunk])
        msg = sender_forward(feats, setup.sender, setup.spec, None, training=False)
        decoded = receive(msg, setup.receiver.channel, setup.spec)
        scores.append(pool_scores(decoded, setup.receiver.encoder, setup.pool_features).data)
        if msg.symbols is None:
            have_symbols = False
        else:
            symbols.append(msg.symbols)
    return (
        np.concatenate(scores, axis=0),
        np.concatenate(symbols, axis=0) if have_symbols else None,
    )


def _accuracy_at(setup, scores_all, pool_positions, n, rng: Rng | None) -> float:
    """Fraction of rows whose target wins among n candidates.

    At the full pool size no sampling is needed: the target wins iff it has
    the row argmax. Smaller n draws one episode per row (distinct uniform
    distractors, random target slot); argmax ties break to the lowest index.
    """
    pool_size = scores_all.shape[1]
    if n == pool_size:
        return float(np.mean(scores_all.argmax(axis=1) == pool_positions))
    m = scores_all.shape[0]
    candidates = np.empty((m, n), dtype=np.int64)
    positions = np.empty(m, dtype=np.int64)
    for i in range(m):
        exclude = int(pool_positions[i])
        drawn = rng.choice(pool_size - 1, n - 1, without_replacement=True)
        distractors = drawn + (drawn >= exclude)
        pos = int(rng.integers(0, n))
        candidates[i] = np.insert(distractors, pos, exclude)
        positions[i] = pos
    logits = np.take_along_axis(scores_all, candidates, axis=1)
    return float(np.mean(logits.argmax(axis=1) == positions))


def evaluate_accuracy(
    setup: GameSetup, candidate_counts, *, phase: str = "test"
) -> tuple[dict[int, float], dict[int, str]]:
    """One episode per phase target at each candidate count.

    Oversized counts are recorded as per-n errors and the rest proceed.
    Episode draws come from per-n child streams of the seed's ``eval``
    stream, so results do not depend on which counts are requested.
    """
    targets = setup.split.targets(phase)
    scores_all, _ = inference_scores(setup, targets)
    pool_positions = setup.pool_position(targets)
    accuracy: dict[int, float] = {}
    errors: dict[int, str] = {}
    eval_rng = Rng(setup.seed).stream(f"eval/{phase}")
    for n in candidate_counts:
        if n < 1 or n > setup.pool_size:
            errors[int(n)] = f"candidate count {n} outside [1, {setup.pool_size}]"
            continue
        accuracy[int(n)] = _accuracy_at(
            setup, scores_all, pool_positions, int(n), eval_rng.stream(f"n={n}")
        )
    return accuracy, errors


def noum(setup: GameSetup, *, phase: str = "test") -> int:
    """Number of unique messages over the phase targets (discrete modes only)."""
    if not setup.spec.discrete:
        raise UnsupportedModeError(
            "NoUM is defined only for discrete inference messages; "
            f"mode is {setup.spec.mode!r}"
        )
    targets = setup.split.targets(phase)
    _, symbols = inference_scores(setup, targets)
    flat = symbols.reshape(symbols.shape[0], -1)
    return int(np.unique(flat, axis=0).shape[0])


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainResult:
    setup: GameSetup  # agents hold the best-validation parameters
    best_epoch: int
    best_val: float | None
    val_curve: list[float]


def train(cfg: ExperimentConfig, seed: int, log=None) -> TrainResult:
    """Train one seed and return the best-validation parameters."""
    setup = build_setup(cfg, seed)
    tcfg = cfg.trainer
    pool_size = setup.pool_size
    negatives = tcfg.train_negatives if tcfg.train_negatives is not None else pool_size - 1
    if negatives > pool_size - 1:
        raise ConfigError(f"train_negatives {negatives} exceeds pool size {pool_size} - 1")
    probe_n = tcfg.probe_candidates if tcfg.probe_candidates is not None else pool_size
    if probe_n < 1 or probe_n > pool_size:
        raise ConfigError(f"probe_candidates {probe_n} outside [1, {pool_size}]")
    full_pool = negatives == pool_size - 1

    params = setup.params()
    opt = Adam(params, lr=tcfg.learning_rate)
    shuffle_rng = Rng(seed).stream("shuffle")
    gumbel_rng = Rng(seed).stream("gumbel-noise")
    sampling_rng = Rng(seed).stream("candidate-sampling")
    val_rng = Rng(seed).stream("validation")

    train_targets = setup.split.train
    best_snap = snapshot(params)
    best_val = -math.inf
    best_epoch = 0
    val_curve: list[float] = []
    epochs_since_best = 0

    for epoch in range(1, tcfg.epochs + 1):
        order = shuffle_rng.permutation(len(train_targets))
        for start in range(0, len(order), tcfg.batch_size):
            batch = train_targets[order[start : start + tcfg.batch_size]]
            with GradTape() as tape:
                feats = Tensor(setup.world.encodings[batch])
                msg = sender_forward(feats, setup.sender, setup.spec, gumbel_rng, training=True)
                if full_pool:
                    cset = CandidateSet(setup.pool_features, None)
                    positions = setup.pool_position(batch)
                else:
                    cset, positions = _training_episodes(setup, batch, negatives + 1, sampling_rng)
                scores = receiver_forward(msg, cset, setup.receiver, setup.spec)
                loss = game_loss(scores, positions)
            loss_value = loss.item()
            if not math.isfinite(loss_value):
                raise NumericsError(
                    f"loss became non-finite at epoch {epoch}, step {start // tcfg.batch_size}"
                )
            tape.backward(loss)
            opt.step()
        val_acc = _validation_accuracy(setup, probe_n, val_rng)
        val_curve.append(val_acc)
        if log:
            log(f"seed {seed} epoch {epoch}: loss {loss_value:.4f} val@{probe_n} {val_acc:.4f}")
        if val_acc > best_val:
            best_val = val_acc
            best_epoch = epoch
            best_snap = snapshot(params)
            epochs_since_best = 0
        else:
            epochs_since_best += 1
        if epochs_since_best >= tcfg.patience:
            break
        if tcfg.stop_at_perfect and val_acc >= 1.0:
            break

    restore(params, best_snap)
    return TrainResult(
        setup, best_epoch, None if best_val == -math.inf else best_val, val_curve
    )


def _training_episodes(setup, batch, n, rng: Rng):
    """Per-row candidate sets when training with fewer than full-pool negatives."""
    pool_positions = setup.pool_position(batch)
    b = len(batch)
    candidates = np.empty((b, n), dtype=np.int64)
    positions = np.empty(b, dtype=np.int64)
    for i in range(b):
        exclude = int(pool_positions[i])
        drawn = rng.choice(setup.pool_size - 1, n - 1, without_replacement=True)
        distractors = drawn + (drawn >= exclude)
        pos = int(rng.integers(0, n))
        candidates[i] = np.insert(distractors, pos, exclude)
        positions[i] = pos
    return CandidateSet(setup.pool_features, candidates), positions


def _validation_accuracy(setup, probe_n, rng: Rng) -> float:
    targets = setup.split.valid
    scores_all, _ = inference_scores(setup, targets)
    return _accuracy_at(setup, scores_all, setup.pool_position(targets), probe_n, rng)


# ---------------------------------------------------------------------------
# seed replication and reports


@dataclass
class SeedOutcome:
    accuracy: dict[int, float]
    eval_errors: dict[int, str]
    noum: int | None
    best_epoch: int
    best_val: float | None
    val_curve: list[float]


@dataclass
class MetricsReport:
    config_echo: dict
    per_seed: dict[int, SeedOutcome] = field(default_factory=dict)
    failures: dict[int, str] = field(default_factory=dict)

    @property
    def partial(self) -> bool:
        return bool(self.failures)

    def aggregate(self) -> dict:
        """Mean/std (population) per candidate count over the finished seeds,
        accumulated in sorted-seed order so seed order never matters."""
        seeds = sorted(self.per_seed)
        counts: list[int] = []
        for s in seeds:
            for n in self.per_seed[s].accuracy:
                if n not in counts:
                    counts.append(n)
        counts.sort()
        accuracy = []
        for n in counts:
            values = [self.per_seed[s].accuracy[n] for s in seeds if n in self.per_seed[s].accuracy]
            accuracy.append(
                {
                    "n": n,
                    "mean": float(np.mean(values)),
                    "std": float(np.std(values)),
                    "seeds": len(values),
                }
            )
        noums = [self.per_seed[s].noum for s in seeds if self.per_seed[s].noum is not None]
        best_epochs = [self.per_seed[s].best_epoch for s in seeds]
        return {
            "accuracy": accuracy,
            "noum": (
                {
                    "mean": float(np.mean(noums)),
                    "std": float(np.std(noums)),
                    "values": [int(v) for v in noums],
                }
                if noums
                else None
            ),
            "best_epoch": {
                "mean": float(np.mean(best_epochs)) if best_epochs else None,
                "values": [int(v) for v in best_epochs],
            },
        }

    def as_dict(self) -> dict:
        return {
            "schema_version": 1,
            "config": self.config_echo,
            "per_seed": {
                str(s): {
                    "accuracy": [
                        {"n": n, "value": o.accuracy[n]} for n in sorted(o.accuracy)
                    ],
                    "eval_errors": {str(n): m for n, m in sorted(o.eval_errors.items())},
                    "noum": o.noum,
                    "best_epoch": o.best_epoch,
                    "best_val": o.best_val,
                    "val_curve": o.val_curve,
                }
                for s, o in sorted(self.per_seed.items())
            },
            "failures": {str(s): m for s, m in sorted(self.failures.items())},
            "partial": self.partial,
            "aggregate": self.aggregate(),
        }

    @staticmethod
    def from_dict(d: dict) -> "MetricsReport":
        report = MetricsReport(config_echo=d["config"])
        for s, o in d.get("per_seed", {}).items():
            report.per_seed[int(s)] = SeedOutcome(
                accuracy={int(e["n"]): float(e["value"]) for e in o["accuracy"]},
                eval_errors={int(n): m for n, m in o.get("eval_errors", {}).items()},
                noum=o.get("noum"),
                best_epoch=int(o.get("best_epoch", 0)),
                best_val=o.get("best_val"),
                val_curve=list(o.get("val_curve", [])),
            )
        for s, m in d.get("failures", {}).items():
            report.failures[int(s)] = m
        return report

    def mean_accuracy(self, n: int) -> float:
        for entry in self.aggregate()["accuracy"]:
            if entry["n"] == n:
                return entry["mean"]
        raise KeyError(f"no aggregated accuracy at n={n}")


def run_seed(cfg: ExperimentConfig, seed: int, log=None) -> tuple[SeedOutcome, GameSetup]:
    """Train, evaluate, and count messages for one seed."""
    result = train(cfg, seed, log=log)
    accuracy, errors = evaluate_accuracy(result.setup, cfg.eval_candidates)
    messages = noum(result.setup) if cfg.channel.discrete else None
    outcome = SeedOutcome(
        accuracy, errors, messages, result.best_epoch, result.best_val, result.val_curve
    )
    return outcome, result.setup


def replicate(cfg: ExperimentConfig, checkpoint_dir=None, log=None) -> MetricsReport:
    """Run every configured seed; failures are recorded, not raised."""
    report = MetricsReport(config_echo=config_to_dict(cfg))
    for seed in cfg.seeds:
        try:
            outcome, setup = run_seed(cfg, seed, log=log)
        except CommGameError as exc:
            report.failures[seed] = f"{type(exc).__name__}: {exc}"
            continue
        report.per_seed[seed] = outcome
        if checkpoint_dir is not None:
            path = Path(checkpoint_dir)
            path.mkdir(parents=True, exist_ok=True)
            save_checkpoint(
                path / f"seed_{seed}.ckpt", setup.params(), meta={"seed": seed}
            )
    return report


# ---------------------------------------------------------------------------
# alphabet x word-length sweeps


@dataclass
class SweepCell:
    alphabet_size: int
    word_length: int
    regime: str
    report: MetricsReport | None
    error: str | None = None


@dataclass
class SweepResult:
    cells: list[SweepCell]

    def heat_value(self, cell: SweepCell) -> float | None:
        """Accuracy at the largest evaluated candidate count, mean over seeds."""
        if cell.report is None or not cell.report.per_seed:
            return None
        entries = cell.report.aggregate()["accuracy"]
        return entries[-1]["mean"] if entries else None

    def heat_noum(self, cell: SweepCell) -> float | None:
        if cell.report is None:
            return None
        agg = cell.report.aggregate()["noum"]
        return agg["mean"] if agg else None


def sweep_cell_config(cfg: ExperimentConfig, alphabet: int, word_length: int, regime: str):
    channel = replace(
        cfg.channel,
        alphabet_size=alphabet,
        word_length=word_length,
        quantize_regime=regime,
    )
    name = f"a{alphabet}_w{word_length}_{regime}"
    return replace(cfg, channel=channel, output_dir=str(Path(cfg.output_dir) / "cells" / name))


def _run_cell(payload) -> tuple[dict | None, str | None]:
    cfg, alphabet, word_length, regime = payload
    try:
        cell_cfg = sweep_cell_config(cfg, alphabet, word_length, regime)
        return replicate(cell_cfg).as_dict(), None
    except CommGameError as exc:
        return None, f"{type(exc).__name__}: {exc}"


def run_sweep(cfg: ExperimentConfig, jobs: int = 1, log=None) -> SweepResult:
    """Train+evaluate+NoUM for every (alphabet, word length, regime) cell.

    Cell failures are recorded and the sweep continues. Cells are
    independent; ``jobs`` bounds process-level parallelism and results
    merge in grid order regardless of completion order.
    """
    if cfg.sweep is None:
        raise ConfigError("config has no sweep section")
    if cfg.channel.mode != "quantized":
        raise ConfigError("sweeps vary the quantizer; channel mode must be 'quantized'")
    grid = [
        (a, w, r)
        for a in cfg.sweep.alphabet_sizes
        for w in cfg.sweep.word_lengths
        for r in cfg.sweep.regimes
    ]
    payloads = [(cfg, a, w, r) for a, w, r in grid]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_run_cell, payloads))
    else:
        outcomes = []
        for payload in payloads:
            if log:
                log(f"sweep cell alphabet={payload[1]} word_length={payload[2]} regime={payload[3]}")
            outcomes.append(_run_cell(payload))
    cells = []
    for (a, w, r), (report_dict, error) in zip(grid, outcomes):
        report = MetricsReport.from_dict(report_dict) if report_dict else None
        cells.append(SweepCell(a, w, r, report, error))
    return SweepResult(cells)
