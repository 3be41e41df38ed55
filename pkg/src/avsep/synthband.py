"""Procedural instrument bank and mix-and-separate batch sampling.

Eight default classes cover the transient/sustained x simple/rich-harmonic
plane: plucked and struck envelopes retrigger every few hundred ms so any
training crop contains energy, sustained classes hold one note per clip.
Fundamental ranges are staggered across registers so most class pairs do
not collide spectrally, mirroring how real instrument sections divide the
spectrum.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from avsep.dsp import DspConfig, Waveform
from avsep.errors import ConfigurationError, InputError

MAX_HARMONICS = 8


@dataclass
class InstrumentSpec:
    name: str
    class_id: int
    envelope: str  # pluck | sustain | burst
    harmonic_amplitudes: Sequence[float]
    f0_range: tuple[float, float]
    decay: float = 0.1  # pluck/burst decay time constant, seconds
    attack: float = 0.03  # sustain attack, seconds
    release: float = 0.08  # sustain release, seconds
    vibrato_rate: float = 0.0  # Hz
    vibrato_depth: float = 0.0  # cents
    noise_frac: float = 0.0  # burst only
    noise_band: tuple[float, float] = (300.0, 1600.0)

    def __post_init__(self):
        amps = list(self.harmonic_amplitudes)
        if len(amps) > MAX_HARMONICS:
            raise ConfigurationError(
                f"{self.name}: at most {MAX_HARMONICS} harmonic amplitudes"
            )
        if any(a < 0 for a in amps):
            raise ConfigurationError(f"{self.name}: negative harmonic amplitude")
        if self.envelope not in ("pluck", "sustain", "burst"):
            raise ConfigurationError(f"{self.name}: unknown envelope {self.envelope!r}")
        tonal = self.envelope != "burst" or self.noise_frac < 1.0
        if tonal and (not amps or amps[0] <= 0):
            raise ConfigurationError(f"{self.name}: first harmonic must be positive")
        lo, hi = self.f0_range
        if not (20.0 < lo < hi):
            raise ConfigurationError(f"{self.name}: bad f0 range {self.f0_range}")
        self.harmonic_amplitudes = amps


@dataclass
class Clip:
    waveform: Waveform
    class_id: int
    seed: int


@dataclass
class MixturePair:
    mixture: Waveform
    sources: list[Clip]
    gain: float = 1.0

    @property
    def class_ids(self) -> list[int]:
        return [c.class_id for c in self.sources]


class Catalog:
    def __init__(self, specs: Sequence[InstrumentSpec]):
        ids = [s.class_id for s in specs]
        if len(set(ids)) != len(ids):
            raise ConfigurationError("duplicate class ids in catalog")
        self.specs = sorted(specs, key=lambda s: s.class_id)
        self.by_id = {s.class_id: s for s in self.specs}
        self.by_name = {s.name: s for s in self.specs}

    def __len__(self):
        return len(self.specs)

    def __iter__(self):
        return iter(self.specs)

    def spec(self, class_id: int) -> InstrumentSpec:
        if class_id not in self.by_id:
            raise InputError(f"unknown class id {class_id}")
        return self.by_id[class_id]


# -- catalog file format ------------------------------------------------------


def save_catalog(path, catalog: Catalog):
    cp = configparser.ConfigParser()
    for s in catalog:
        cp[s.name] = {
            "class_id": str(s.class_id),
            "envelope": s.envelope,
            "harmonics": " ".join(f"{a:g}" for a in s.harmonic_amplitudes),
            "f0_min": f"{s.f0_range[0]:g}",
            "f0_max": f"{s.f0_range[1]:g}",
            "decay": f"{s.decay:g}",
            "attack": f"{s.attack:g}",
            "release": f"{s.release:g}",
            "vibrato_rate": f"{s.vibrato_rate:g}",
            "vibrato_depth": f"{s.vibrato_depth:g}",
            "noise_frac": f"{s.noise_frac:g}",
            "noise_band": f"{s.noise_band[0]:g} {s.noise_band[1]:g}",
        }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        cp.write(fh)


def load_catalog(path) -> Catalog:
    cp = configparser.ConfigParser()
    read = cp.read(path)
    if not read:
        raise InputError(f"cannot read catalog file {path}")
    specs = []
    for name in cp.sections():
        sec = cp[name]
        band = [float(v) for v in sec.get("noise_band", "300 1600").split()]
        specs.append(
            InstrumentSpec(
                name=name,
                class_id=sec.getint("class_id"),
                envelope=sec.get("envelope"),
                harmonic_amplitudes=[float(v) for v in sec.get("harmonics").split()],
                f0_range=(sec.getfloat("f0_min"), sec.getfloat("f0_max")),
                decay=sec.getfloat("decay", 0.1),
                attack=sec.getfloat("attack", 0.03),
                release=sec.getfloat("release", 0.08),
                vibrato_rate=sec.getfloat("vibrato_rate", 0.0),
                vibrato_depth=sec.getfloat("vibrato_depth", 0.0),
                noise_frac=sec.getfloat("noise_frac", 0.0),
                noise_band=(band[0], band[1]),
            )
        )
    return Catalog(specs)


def default_catalog() -> Catalog:
    with resources.as_file(
        resources.files("avsep.data").joinpath("default_catalog.cfg")
    ) as p:
        return load_catalog(p)


# -- rendering ----------------------------------------------------------------


def _strike_times(rng, duration: float) -> np.ndarray:
    """Onsets for retriggered envelopes; gaps keep every ~0.5 s crop covered."""
    times = [rng.uniform(0.01, 0.09)]
    while times[-1] < duration - 0.35:
        times.append(times[-1] + rng.uniform(0.30, 0.48))
    return np.asarray(times)


def _pluck_env(rng, t, decay: float, duration: float) -> np.ndarray:
    env = np.zeros_like(t)
    for onset in _strike_times(rng, duration):
        active = t >= onset
        seg = (t[active] - onset) / decay
        ramp = np.minimum((t[active] - onset) / 0.002, 1.0)  # 2 ms anti-click
        env[active] += ramp * np.exp(-seg)
    return np.minimum(env, 1.5)


def _sustain_env(t, attack: float, release: float, duration: float) -> np.ndarray:
    env = np.minimum(t / max(attack, 1e-4), 1.0)
    tail = np.minimum((duration - t) / max(release, 1e-4), 1.0)
    return np.clip(np.minimum(env, tail), 0.0, 1.0)


def _band_noise(rng, n: int, sr: int, band: tuple[float, float]) -> np.ndarray:
    white = rng.normal(size=n)
    spec = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(n, 1.0 / sr)
    spec[(freqs < band[0]) | (freqs > band[1])] = 0.0
    shaped = np.fft.irfft(spec, n=n)
    peak = np.abs(shaped).max()
    return shaped / peak if peak > 0 else shaped


def render_clip(
    spec: InstrumentSpec,
    seed: int,
    duration: float = 1.5,
    sample_rate: int = 8000,
) -> Clip:
    """Additive synthesis of one labeled clip; bit-deterministic per (spec, seed)."""
    if duration * sample_rate < 1:
        raise InputError("duration too short")
    rng = np.random.default_rng(np.random.SeedSequence([spec.class_id, seed]))
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate
    f0 = rng.uniform(*spec.f0_range)
    assert spec.f0_range[0] <= f0 <= spec.f0_range[1]

    # vibrato-modulated phase ramp, shared by all harmonics
    if spec.vibrato_rate > 0 and spec.vibrato_depth > 0:
        d = spec.vibrato_depth * np.log(2.0) / 1200.0
        r = spec.vibrato_rate
        phase_t = t + d / (2 * np.pi * r) * (1.0 - np.cos(2 * np.pi * r * t))
    else:
        phase_t = t

    nyq = sample_rate / 2.0
    tone = np.zeros(n)
    for i, amp in enumerate(spec.harmonic_amplitudes, start=1):
        if amp <= 0 or i * f0 >= nyq:
            continue
        tone += amp * np.sin(2 * np.pi * i * f0 * phase_t + rng.uniform(0, 2 * np.pi))

    if spec.envelope == "pluck":
        x = tone * _pluck_env(rng, t, spec.decay, duration)
    elif spec.envelope == "sustain":
        x = tone * _sustain_env(t, spec.attack, spec.release, duration)
    else:  # burst
        env = _pluck_env(rng, t, spec.decay, duration)
        noise = _band_noise(rng, n, sample_rate, spec.noise_band)
        x = (1.0 - spec.noise_frac) * tone * env + spec.noise_frac * noise * env

    peak = np.abs(x).max()
    if peak > 0:
        x = 0.9 * x / peak
    if not np.isfinite(x).all():
        raise InputError(f"render produced non-finite samples for {spec.name}")
    return Clip(Waveform(x, sample_rate), spec.class_id, seed)


def make_mixture(clips: Sequence[Clip]) -> MixturePair:
    """Samplewise sum with a shared rescale when the sum would clip."""
    if len(clips) < 2:
        raise InputError("a mixture needs at least two sources")
    ids = [c.class_id for c in clips]
    if len(set(ids)) != len(ids):
        raise InputError("mixture sources must have distinct classes")
    lengths = {len(c.waveform) for c in clips}
    rates = {c.waveform.sample_rate for c in clips}
    if len(lengths) != 1 or len(rates) != 1:
        raise InputError("mixture sources must share length and sample rate")
    total = np.sum([c.waveform.samples for c in clips], axis=0)
    gain = 1.0
    peak = np.abs(total).max()
    if peak > 0.99:
        gain = 0.99 / peak
    sr = rates.pop()
    sources = [
        Clip(Waveform(c.waveform.samples * gain, sr), c.class_id, c.seed)
        for c in clips
    ]
    return MixturePair(Waveform(total * gain, sr), sources, gain=gain)


def _crop(clip: Clip, start: int, length: int) -> Clip:
    return Clip(
        Waveform(clip.waveform.samples[start : start + length], clip.waveform.sample_rate),
        clip.class_id,
        clip.seed,
    )


def sample_pair(
    rng: np.random.Generator,
    catalog: Catalog,
    dsp_cfg: DspConfig,
    split: str = "train",
    n_sources: int = 2,
    clip_seconds: float = 1.5,
) -> MixturePair:
    """Draw distinct classes, render fresh clips, crop, and mix.

    Training uses a random crop position, testing the fixed center crop.
    """
    if len(catalog) < n_sources:
        raise ConfigurationError(
            f"catalog has {len(catalog)} classes, need {n_sources}"
        )
    ids = rng.choice([s.class_id for s in catalog], size=n_sources, replace=False)
    seg = dsp_cfg.segment_samples
    clips = []
    for cid in ids:
        seed = int(rng.integers(0, 2**31 - 1))
        clip = render_clip(
            catalog.spec(int(cid)), seed, clip_seconds, dsp_cfg.sample_rate
        )
        total = len(clip.waveform)
        if total < seg:
            raise ConfigurationError("clip shorter than one analysis segment")
        if split == "train":
            start = int(rng.integers(0, total - seg + 1))
        else:
            start = (total - seg) // 2
        clips.append(_crop(clip, start, seg))
    return make_mixture(clips)


def sample_batch(
    rng: np.random.Generator,
    catalog: Catalog,
    batch: int,
    dsp_cfg: Optional[DspConfig] = None,
    split: str = "train",
    n_sources: int = 2,
    clip_seconds: float = 1.5,
) -> list[MixturePair]:
    cfg = dsp_cfg or DspConfig()
    return [
        sample_pair(rng, catalog, cfg, split, n_sources, clip_seconds)
        for _ in range(batch)
    ]
