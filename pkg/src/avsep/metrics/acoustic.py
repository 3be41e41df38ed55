"""Acoustic-characteristic metrics: peak-to-RMS transience, YIN pitch, and
harmonically weighted spectral complexity, plus the per-class catalog map."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from avsep.dsp import Waveform, hann_periodic
from avsep.errors import ConfigurationError, InputError, NoPitchError

YIN_THRESHOLD = 0.1
SPECTRUM_FFT = 4096
N_HARMONICS = 8


@dataclass
class AcousticProfile:
    amplitude_ratio: float
    harmonic_complexity: Optional[float]
    f0_hz: Optional[float]


def amplitude_ratio(w: Waveform) -> float:
    """Peak over RMS; >= 1, high for percussive signals."""
    x = w.samples
    rms = float(np.sqrt(np.mean(x * x)))
    if rms == 0.0:
        raise InputError("amplitude_ratio of an all-zero signal")
    return float(np.abs(x).max()) / rms


def _cmndf(frame: np.ndarray, tau_max: int) -> np.ndarray:
    """Cumulative-mean-normalized difference function for one frame."""
    w = len(frame) - tau_max
    # d(tau) = sum_j (x_j - x_{j+tau})^2 over a window of w samples
    n_fft = int(2 ** np.ceil(np.log2(len(frame) + w)))
    fx = np.fft.rfft(frame, n_fft)
    fw = np.fft.rfft(frame[:w][::-1], n_fft)
    cross = np.fft.irfft(fx * fw, n_fft)[w - 1 : w + tau_max]
    sq = frame * frame
    csum = np.concatenate([[0.0], np.cumsum(sq)])
    e0 = csum[w]
    etau = csum[np.arange(tau_max + 1) + w] - csum[np.arange(tau_max + 1)]
    diff = e0 + etau - 2.0 * cross
    diff = np.maximum(diff, 0.0)
    out = np.ones(tau_max + 1)
    running = np.cumsum(diff[1:])
    nz = running > 0
    out[1:][nz] = diff[1:][nz] * np.arange(1, tau_max + 1)[nz] / running[nz]
    return out


def _parabolic(values: np.ndarray, i: int) -> float:
    if i <= 0 or i >= len(values) - 1:
        return float(i)
    a, b, c = values[i - 1], values[i], values[i + 1]
    denom = a - 2 * b + c
    if denom == 0:
        return float(i)
    return i + 0.5 * (a - c) / denom


def yin_frame_f0s(
    w: Waveform,
    fmin: float = 60.0,
    fmax: float = 600.0,
    hop: Optional[int] = None,
) -> list[Optional[float]]:
    """Per-frame YIN estimates; None marks unvoiced frames."""
    sr = w.sample_rate
    if not (0 < fmin < fmax < sr / 2):
        raise ConfigurationError(f"need 0 < fmin < fmax < Nyquist, got {fmin}, {fmax}")
    tau_max = int(np.ceil(sr / fmin))
    tau_min = max(int(np.floor(sr / fmax)), 2)
    frame_len = 2 * tau_max
    if len(w) < frame_len:
        raise ConfigurationError(
            f"signal too short ({len(w)}) for fmin {fmin} (needs {frame_len})"
        )
    hop = hop or tau_max
    out: list[Optional[float]] = []
    for start in range(0, len(w) - frame_len + 1, hop):
        frame = w.samples[start : start + frame_len]
        d = _cmndf(frame, tau_max)
        tau = None
        for k in range(tau_min, tau_max + 1):
            if d[k] < YIN_THRESHOLD:
                while k + 1 <= tau_max and d[k + 1] < d[k]:
                    k += 1
                tau = k
                break
        if tau is None:
            out.append(None)
        else:
            out.append(sr / _parabolic(d, tau))
    return out


def yin_f0(
    w: Waveform, fmin: float = 60.0, fmax: float = 600.0
) -> Optional[float]:
    """Clip-level pitch: median over voiced frames, None when none are voiced."""
    voiced = [f for f in yin_frame_f0s(w, fmin, fmax) if f is not None]
    if not voiced:
        return None
    return float(np.median(voiced))


def _mean_power_spectrum(x: np.ndarray) -> np.ndarray:
    n = SPECTRUM_FFT
    win = hann_periodic(n)
    if len(x) < n:
        frame = np.zeros(n)
        frame[: len(x)] = x
        return np.abs(np.fft.rfft(frame * win)) ** 2
    hop = n // 2
    frames = [
        x[s : s + n] * win for s in range(0, len(x) - n + 1, hop)
    ]
    return np.mean([np.abs(np.fft.rfft(f)) ** 2 for f in frames], axis=0)


def harmonic_complexity(
    w: Waveform, fmin: float = 60.0, fmax: float = 600.0,
    f0: Optional[float] = None,
) -> float:
    """One minus the harmonically weighted energy ratio over 8 overtones.

    0 for a pure tone, towards 1 when energy sits in high harmonics. The
    fundamental is estimated with YIN unless ``f0`` is given.
    """
    if f0 is None:
        f0 = yin_f0(w, fmin, fmax)
    if f0 is None:
        raise NoPitchError("no pitch detected; harmonic complexity undefined")
    spectrum = _mean_power_spectrum(w.samples)
    df = w.sample_rate / SPECTRUM_FFT
    nyq_bin = len(spectrum) - 1
    energies = []
    n_used = N_HARMONICS
    for i in range(1, N_HARMONICS + 1):
        k = int(round(i * f0 / df))
        if k + 1 > nyq_bin:
            n_used = i - 1
            warnings.warn(
                f"harmonics above {n_used} exceed Nyquist; truncating"
            )
            break
        energies.append(spectrum[k - 1 : k + 2].mean())
    if not energies:
        raise NoPitchError("fundamental above Nyquist")
    e = np.asarray(energies)
    weights = 1.0 / np.arange(1, n_used + 1)
    hcr = float((weights * e).sum() / e.sum())
    return 1.0 - hcr


def profile(w: Waveform, fmin: float = 60.0, fmax: float = 600.0) -> AcousticProfile:
    ar = amplitude_ratio(w)
    f0 = yin_f0(w, fmin, fmax)
    hc = None
    if f0 is not None:
        try:
            hc = harmonic_complexity(w, fmin, fmax)
        except NoPitchError:
            hc = None
    return AcousticProfile(ar, hc, f0)


def acoustic_map(catalog, seeds_per_class: int = 20, sample_rate: int = 8000,
                 clip_seconds: float = 1.5):
    """Per-class mean (AR, harmonic complexity) over rendered clips.

    Returns rows of (name, class_id, mean_ar, mean_complexity, n_voiced).
    """
    from avsep.synthband import render_clip

    rows = []
    for spec in catalog:
        ars, hcs = [], []
        for seed in range(seeds_per_class):
            clip = render_clip(spec, seed, clip_seconds, sample_rate)
            p = profile(clip.waveform)
            ars.append(p.amplitude_ratio)
            if p.harmonic_complexity is not None:
                hcs.append(p.harmonic_complexity)
        rows.append(
            (
                spec.name,
                spec.class_id,
                float(np.mean(ars)),
                float(np.mean(hcs)) if hcs else float("nan"),
                len(hcs),
            )
        )
    return rows
