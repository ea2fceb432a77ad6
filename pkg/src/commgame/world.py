"""Synthetic attribute-value object world, splits, and episode sampling.

Objects are all tuples over ``num_attributes`` attributes with
``values_per_attribute`` shared values each, enumerated lexicographically.
An object's feature encoding is the concatenation of one one-hot block per
attribute. Targets are split 80/10/10 by default; candidates are shared
across splits (the full object pool for the referential game, the class
labels for the classification variant).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .rng import Rng

MAX_OBJECTS = 10**7


@dataclass(frozen=True)
class ObjectWorld:
    num_attributes: int
    values_per_attribute: int
    attributes: np.ndarray  # [num_objects x num_attributes] int
    encodings: np.ndarray  # [num_objects x (num_attributes * values_per_attribute)]

    @property
    def num_objects(self) -> int:
        return self.attributes.shape[0]

    @property
    def encoding_dim(self) -> int:
        return self.encodings.shape[1]


def build_world(num_attributes: int, values_per_attribute: int) -> ObjectWorld:
    """Enumerate every attribute tuple (lexicographic) with one-hot encodings."""
    if num_attributes < 1 or values_per_attribute < 1:
        raise ConfigError("world dimensions must be at least 1")
    count = values_per_attribute**num_attributes
    if count > MAX_OBJECTS:
        raise ConfigError(f"world would contain {count} objects (max {MAX_OBJECTS})")
    grids = np.meshgrid(*([np.arange(values_per_attribute)] * num_attributes), indexing="ij")
    attributes = np.stack(grids, axis=-1).reshape(count, num_attributes)
    encodings = np.zeros((count, num_attributes * values_per_attribute))
    rows = np.arange(count)
    for a in range(num_attributes):
        encodings[rows, a * values_per_attribute + attributes[:, a]] = 1.0
    return ObjectWorld(num_attributes, values_per_attribute, attributes, encodings)


@dataclass(frozen=True)
class Split:
    """Disjoint target lists plus the candidate pool shared across splits."""

    train: np.ndarray
    valid: np.ndarray
    test: np.ndarray
    candidate_pool: np.ndarray

    def targets(self, phase: str) -> np.ndarray:
        try:
            return {"train": self.train, "valid": self.valid, "test": self.test}[phase]
        except KeyError:
            raise ConfigError(f"unknown phase {phase!r}") from None


def make_split(
    world: ObjectWorld,
    fractions: tuple[float, float, float],
    rng: Rng,
    num_classes: int | None = None,
) -> Split:
    """Partition a seeded permutation of targets by ``fractions``.

    The candidate pool is every object, or every class label when
    ``num_classes`` is given (classification game).
    """
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError(f"split fractions must sum to 1, got {fractions}")
    n = world.num_objects
    perm = rng.permutation(n)
    bounds = [int(round(f * n)) for f in np.cumsum(fractions)]
    parts = np.split(perm, bounds[:-1])
    if any(len(p) == 0 for p in parts):
        raise ConfigError(f"split fractions {fractions} leave an empty split for {n} targets")
    pool = np.arange(num_classes) if num_classes is not None else np.arange(n)
    return Split(parts[0], parts[1], parts[2], pool)


@dataclass(frozen=True)
class Episode:
    """One game turn: the target, the candidate set, and where the target sits."""

    target: int
    candidates: np.ndarray
    target_position: int


@dataclass(frozen=True)
class EpisodeBatch:
    """Vectorized episodes: targets [b], candidates [b x n], positions [b]."""

    targets: np.ndarray
    candidates: np.ndarray
    target_positions: np.ndarray


def _draw_candidates(pool: np.ndarray, exclude: int, n: int, rng: Rng) -> tuple[np.ndarray, int]:
    """n-1 distinct distractors from pool minus `exclude`, target at a random slot."""
    available = len(pool) - 1
    if n - 1 > available:
        raise ConfigError(f"cannot draw {n - 1} distractors from a pool of {len(pool)}")
    if _is_arange(pool):
        drawn = rng.choice(available, n - 1, without_replacement=True)
        distractors = drawn + (drawn >= exclude)
    else:
        others = pool[pool != exclude]
        distractors = others[rng.choice(len(others), n - 1, without_replacement=True)]
    position = int(rng.integers(0, n))
    candidates = np.insert(distractors, position, exclude)
    return candidates, position


def _is_arange(pool: np.ndarray) -> bool:
    return pool[0] == 0 and pool[-1] == len(pool) - 1 and len(pool) == pool[-1] + 1


def sample_episode(split: Split, phase: str, n: int, rng: Rng) -> Episode:
    """Draw a referential episode: a phase target plus n-1 uniform distractors."""
    targets = split.targets(phase)
    target = int(targets[rng.integers(0, len(targets))])
    candidates, position = _draw_candidates(split.candidate_pool, target, n, rng)
    return Episode(target, candidates, position)


def episode_for_target(split: Split, target: int, n: int, rng: Rng) -> Episode:
    """Episode with a fixed target (evaluation iterates each test target once)."""
    candidates, position = _draw_candidates(split.candidate_pool, int(target), n, rng)
    return Episode(int(target), candidates, position)


def episode_batch_for_targets(
    pool: np.ndarray, targets: np.ndarray, n: int, rng: Rng
) -> EpisodeBatch:
    """One episode per target, vectorized over the batch."""
    b = len(targets)
    candidates = np.empty((b, n), dtype=np.int64)
    positions = np.empty(b, dtype=np.int64)
    for i, t in enumerate(targets):
        candidates[i], positions[i] = _draw_candidates(pool, int(t), n, rng)
    return EpisodeBatch(np.asarray(targets, dtype=np.int64), candidates, positions)


# ---------------------------------------------------------------------------
# classification variant


@dataclass(frozen=True)
class ClassMap:
    """Total mapping from object index to class label in [0, num_classes)."""

    labels: np.ndarray  # [num_objects] int
    num_classes: int


def make_class_map(world: ObjectWorld, scheme: str, k: int | None, rng: Rng | None) -> ClassMap:
    """Assign a class label to every object.

    ``first_attribute`` labels by the value of attribute 0 (k is forced to
    values_per_attribute); ``seeded_random`` assigns labels uniformly.
    """
    if scheme == "first_attribute":
        if k is not None and k != world.values_per_attribute:
            raise ConfigError(
                f"first_attribute forces num_classes = {world.values_per_attribute}, got {k}"
            )
        return ClassMap(world.attributes[:, 0].copy(), world.values_per_attribute)
    if scheme == "seeded_random":
        if k is None or k < 2:
            raise ConfigError(f"seeded_random needs num_classes >= 2, got {k}")
        return ClassMap(rng.integers(0, k, size=world.num_objects), k)
    raise ConfigError(f"unknown class map scheme {scheme!r}")


def classification_episode(
    split: Split, class_map: ClassMap, n: int, rng: Rng, phase: str
) -> Episode:
    """Draw a classification episode: candidates are class labels.

    The receiver sees the target's true class plus n-1 distinct other
    classes, never the target object itself.
    """
    if n > class_map.num_classes:
        raise ConfigError(f"n={n} exceeds the {class_map.num_classes} classes")
    targets = split.targets(phase)
    target = int(targets[rng.integers(0, len(targets))])
    label = int(class_map.labels[target])
    candidates, position = _draw_candidates(
        np.arange(class_map.num_classes), label, n, rng
    )
    return Episode(target, candidates, position)
