"""Experiment configuration: one human-readable INI file, sections per module.

CLI flags override individual keys; the file is otherwise authoritative.
"""

from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

from avsep.dsp import DspConfig
from avsep.embedders import EmbedderConfig
from avsep.errors import ConfigurationError
from avsep.separator import FusionMode, SeparatorConfig


@dataclass
class SynthConfig:
    catalog: str = "default"  # 'default' or a catalog file path
    clip_seconds: float = 1.5
    n_sources: int = 2


@dataclass
class TrainConfig:
    steps: int = 2000
    batch: int = 16
    lr: float = 1e-3
    decay_factor: float = 0.1
    decay_at: float = 0.7  # fraction of steps where lr is multiplied once
    align_weight: float = 0.1  # 0 disables representation alignment
    seed: int = 0
    checkpoint_every: int = 500

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigurationError("lr must be positive")
        if not (0 < self.decay_factor <= 1):
            raise ConfigurationError("decay_factor must be in (0, 1]")
        if self.batch < 1:
            raise ConfigurationError("batch must be >= 1")
        if self.align_weight < 0:
            raise ConfigurationError("align_weight must be >= 0")


@dataclass
class EvalConfig:
    n_test_mixtures: int = 200
    filter_len: int = 32
    test_seed: int = 7777


@dataclass
class ExperimentConfig:
    dsp: DspConfig = field(default_factory=DspConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    embedders: EmbedderConfig = field(default_factory=EmbedderConfig)
    model: SeparatorConfig = field(default_factory=SeparatorConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def __post_init__(self):
        if self.model.frames != self.dsp.frames or self.model.bins != self.dsp.n_log_bins:
            raise ConfigurationError(
                "model frames/bins must match the dsp grid "
                f"({self.dsp.frames}x{self.dsp.n_log_bins})"
            )

    @classmethod
    def full_scale(cls) -> "ExperimentConfig":
        """Large preset: 256x256 grid, deeper net, long schedule."""
        dsp = DspConfig.full()
        return cls(
            dsp=dsp,
            synth=SynthConfig(clip_seconds=6.0),
            embedders=EmbedderConfig(dim=32, frame=1024, hop=256),
            model=SeparatorConfig(depth=7, frames=dsp.frames, bins=dsp.n_log_bins),
            train=TrainConfig(steps=20000, batch=32, lr=1e-4, decay_at=0.6),
        )


_SECTIONS = {
    "dsp": DspConfig,
    "synth": SynthConfig,
    "embedders": EmbedderConfig,
    "model": SeparatorConfig,
    "train": TrainConfig,
    "eval": EvalConfig,
}

_BOOL_TRUE = {"1", "true", "yes", "on"}
_BOOL_FALSE = {"0", "false", "no", "off"}


def _coerce(raw: str, current):
    if isinstance(current, bool):
        low = raw.strip().lower()
        if low in _BOOL_TRUE:
            return True
        if low in _BOOL_FALSE:
            return False
        raise ConfigurationError(f"not a boolean: {raw!r}")
    if isinstance(current, int):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    if isinstance(current, FusionMode):
        return FusionMode(raw.strip().lower())
    return raw


def save_config(path, cfg: ExperimentConfig):
    cp = configparser.ConfigParser()
    for section, sub in (
        ("dsp", cfg.dsp),
        ("synth", cfg.synth),
        ("embedders", cfg.embedders),
        ("model", cfg.model),
        ("train", cfg.train),
        ("eval", cfg.eval),
    ):
        cp[section] = {}
        for key, value in asdict(sub).items():
            if isinstance(value, FusionMode):
                value = value.value
            cp[section][key] = str(value)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        cp.write(fh)
    return path


def apply_overrides(cfg: ExperimentConfig, overrides: dict[str, str]) -> ExperimentConfig:
    """Return a copy of cfg with 'section.key' -> value overrides applied."""
    from dataclasses import replace

    by_section: dict[str, dict] = {}
    for dotted, raw in overrides.items():
        if "." not in dotted:
            raise ConfigurationError(f"override must be section.key, got {dotted!r}")
        section, key = dotted.split(".", 1)
        if section not in _SECTIONS:
            raise ConfigurationError(f"unknown config section {section!r}")
        sub = getattr(cfg, section)
        if not hasattr(sub, key):
            raise ConfigurationError(f"unknown key [{section}] {key}")
        by_section.setdefault(section, {})[key] = _coerce(str(raw), getattr(sub, key))
    return replace(
        cfg,
        **{
            section: replace(getattr(cfg, section), **vals)
            for section, vals in by_section.items()
        },
    )


def load_config(path, overrides: Optional[dict[str, str]] = None) -> ExperimentConfig:
    """Read an experiment config; ``overrides`` maps 'section.key' to values."""
    cp = configparser.ConfigParser()
    read = cp.read(path)
    if not read:
        raise ConfigurationError(f"cannot read config file {path}")
    kwargs = {}
    for section, cls in _SECTIONS.items():
        defaults = cls()
        values = {}
        if cp.has_section(section):
            for key, raw in cp[section].items():
                if not hasattr(defaults, key):
                    raise ConfigurationError(f"unknown key [{section}] {key}")
                values[key] = _coerce(raw, getattr(defaults, key))
        kwargs[section] = values
    for dotted, raw in (overrides or {}).items():
        if "." not in dotted:
            raise ConfigurationError(f"override must be section.key, got {dotted!r}")
        section, key = dotted.split(".", 1)
        if section not in _SECTIONS:
            raise ConfigurationError(f"unknown config section {section!r}")
        defaults = _SECTIONS[section]()
        if not hasattr(defaults, key):
            raise ConfigurationError(f"unknown key [{section}] {key}")
        kwargs[section][key] = _coerce(str(raw), getattr(defaults, key))
    # model grid defaults follow the dsp grid unless explicitly set
    dsp_kwargs = kwargs["dsp"]
    model_kwargs = kwargs["model"]
    model_kwargs.setdefault("frames", dsp_kwargs.get("frames", DspConfig().frames))
    model_kwargs.setdefault(
        "bins", dsp_kwargs.get("n_log_bins", DspConfig().n_log_bins)
    )
    return ExperimentConfig(
        dsp=DspConfig(**dsp_kwargs),
        synth=SynthConfig(**kwargs["synth"]),
        embedders=EmbedderConfig(**kwargs["embedders"]),
        model=SeparatorConfig(**model_kwargs),
        train=TrainConfig(**kwargs["train"]),
        eval=EvalConfig(**kwargs["eval"]),
    )
