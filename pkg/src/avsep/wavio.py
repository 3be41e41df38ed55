"""Mono 16-bit PCM WAV read/write (standard RIFF header)."""

from __future__ import annotations

import wave
from pathlib import Path

import numpy as np

from avsep.dsp import Waveform
from avsep.errors import InputError


def write_wav(path, w: Waveform):
    samples = np.clip(w.samples, -1.0, 1.0)
    pcm = np.round(samples * 32767.0).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(w.sample_rate)
        fh.writeframes(pcm.tobytes())


def read_wav(path) -> Waveform:
    path = Path(path)
    if not path.exists():
        raise InputError(f"no such wav file: {path}")
    with wave.open(str(path), "rb") as fh:
        if fh.getnchannels() != 1:
            raise InputError(f"{path}: expected mono, got {fh.getnchannels()} channels")
        if fh.getsampwidth() != 2:
            raise InputError(f"{path}: expected 16-bit PCM")
        rate = fh.getframerate()
        raw = fh.readframes(fh.getnframes())
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32767.0
    return Waveform(samples, rate)
