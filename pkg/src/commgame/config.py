"""Experiment configuration: JSON schema, strict validation, defaults.

Config files are JSON with a ``schema_version`` field. Unknown keys are
rejected everywhere so typos fail fast, and the fully resolved config
(defaults filled in) is echoed verbatim into every report.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .channel import ChannelSpec
from .errors import ConfigError

SCHEMA_VERSION = 1
GAMES = ("object_referential", "object_classification")

DEFAULT_EVAL_CANDIDATES = [2, 10, 100, 500, 1000, 2000, 5000, 10000]


@dataclass(frozen=True)
class WorldConfig:
    num_attributes: int = 4
    values_per_attribute: int = 10


@dataclass(frozen=True)
class ClassesConfig:
    scheme: str = "first_attribute"
    num_classes: int | None = None


@dataclass(frozen=True)
class TrainerConfig:
    epochs: int = 50
    patience: int = 50
    batch_size: int = 32
    learning_rate: float = 1e-5
    train_negatives: int | None = None  # None: every pool member but the target
    probe_candidates: int | None = None  # None: the full candidate pool
    stop_at_perfect: bool = True  # stop once validation accuracy reaches 1.0

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError("epochs must be non-negative")
        if self.patience < 1 or self.batch_size < 1:
            raise ConfigError("patience and batch_size must be positive")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.train_negatives is not None and self.train_negatives < 1:
            raise ConfigError("train_negatives must be positive when set")


@dataclass(frozen=True)
class AgentConfig:
    hidden_size: int | None = None  # recurrent only; instant derives from word length
    embedding_size: int | None = None


@dataclass(frozen=True)
class SweepConfig:
    alphabet_sizes: tuple[int, ...] = (2, 4, 6, 8, 10)
    word_lengths: tuple[int, ...] = (1, 2, 5, 10, 25, 50, 100)
    regimes: tuple[str, ...] = ("train_and_infer",)


@dataclass(frozen=True)
class ExperimentConfig:
    game: str = "object_referential"
    world: WorldConfig = field(default_factory=WorldConfig)
    classes: ClassesConfig = field(default_factory=ClassesConfig)
    channel: ChannelSpec = field(default_factory=lambda: ChannelSpec(mode="continuous"))
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    agents: AgentConfig = field(default_factory=AgentConfig)
    eval_candidates: tuple[int, ...] = tuple(DEFAULT_EVAL_CANDIDATES)
    seeds: tuple[int, ...] = (1, 2, 3)
    output_dir: str = "runs/experiment"
    sweep: SweepConfig | None = None

    def __post_init__(self):
        if self.game not in GAMES:
            raise ConfigError(f"unknown game {self.game!r}; expected one of {GAMES}")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if not self.eval_candidates or any(n < 1 for n in self.eval_candidates):
            raise ConfigError("eval_candidates must be positive")


def _parse_section(raw, section: str, fields: dict):
    """Build kwargs for one config section, rejecting unknown keys."""
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ConfigError(f"section {section!r} must be an object")
    unknown = sorted(set(raw) - set(fields))
    if unknown:
        raise ConfigError(f"unknown keys in {section!r}: {unknown}")
    out = {}
    for key, value in raw.items():
        caster = fields[key]
        try:
            out[key] = caster(value) if value is not None else None
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {section}.{key}: {value!r} ({exc})") from exc
    return out


def _int_list(value):
    return tuple(int(v) for v in value)


def _str_list(value):
    return tuple(str(v) for v in value)


_TOP_LEVEL = {
    "schema_version",
    "game",
    "world",
    "classes",
    "channel",
    "trainer",
    "agents",
    "eval_candidates",
    "seeds",
    "output_dir",
    "sweep",
}


def config_from_dict(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    unknown = sorted(set(raw) - _TOP_LEVEL)
    if unknown:
        raise ConfigError(f"unknown top-level keys: {unknown}")
    version = raw.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")

    world = WorldConfig(
        **_parse_section(raw.get("world"), "world", {"num_attributes": int, "values_per_attribute": int})
    )
    classes = ClassesConfig(
        **_parse_section(raw.get("classes"), "classes", {"scheme": str, "num_classes": int})
    )
    channel = ChannelSpec(
        **_parse_section(
            raw.get("channel"),
            "channel",
            {
                "mode": str,
                "architecture": str,
                "alphabet_size": int,
                "word_length": int,
                "message_length": int,
                "quantize_regime": str,
                "quantizer_scheme": str,
                "gs_temperature": float,
                "gs_straight_through": bool,
            },
        )
    )
    trainer = TrainerConfig(
        **_parse_section(
            raw.get("trainer"),
            "trainer",
            {
                "epochs": int,
                "patience": int,
                "batch_size": int,
                "learning_rate": float,
                "train_negatives": int,
                "probe_candidates": int,
                "stop_at_perfect": bool,
            },
        )
    )
    agents = AgentConfig(
        **_parse_section(
            raw.get("agents"), "agents", {"hidden_size": int, "embedding_size": int}
        )
    )
    sweep = None
    if raw.get("sweep") is not None:
        sweep = SweepConfig(
            **_parse_section(
                raw.get("sweep"),
                "sweep",
                {"alphabet_sizes": _int_list, "word_lengths": _int_list, "regimes": _str_list},
            )
        )
    kwargs = {}
    if "game" in raw:
        kwargs["game"] = str(raw["game"])
    if "eval_candidates" in raw:
        kwargs["eval_candidates"] = _int_list(raw["eval_candidates"])
    if "seeds" in raw:
        kwargs["seeds"] = _int_list(raw["seeds"])
    if "output_dir" in raw:
        kwargs["output_dir"] = str(raw["output_dir"])
    return ExperimentConfig(
        world=world,
        classes=classes,
        channel=channel,
        trainer=trainer,
        agents=agents,
        sweep=sweep,
        **kwargs,
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return config_from_dict(raw)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    """Fully resolved echo of the config, suitable for reports."""
    out = {
        "schema_version": SCHEMA_VERSION,
        "game": cfg.game,
        "world": asdict(cfg.world),
        "classes": asdict(cfg.classes),
        "channel": asdict(cfg.channel),
        "trainer": asdict(cfg.trainer),
        "agents": asdict(cfg.agents),
        "eval_candidates": list(cfg.eval_candidates),
        "seeds": list(cfg.seeds),
        "output_dir": cfg.output_dir,
        "sweep": asdict(cfg.sweep) if cfg.sweep is not None else None,
    }
    if out["sweep"] is not None:
        out["sweep"] = {k: list(v) for k, v in out["sweep"].items()}
    return out


def with_overrides(
    cfg: ExperimentConfig,
    seeds=None,
    output_dir=None,
    full_scale: bool = False,
) -> ExperimentConfig:
    """Apply command-line overrides (flags beat config values)."""
    if seeds is not None:
        cfg = replace(cfg, seeds=tuple(int(s) for s in seeds))
    if output_dir is not None:
        cfg = replace(cfg, output_dir=str(output_dir))
    if full_scale:
        cfg = replace(cfg, world=WorldConfig(num_attributes=4, values_per_attribute=10))
    return cfg
