"""Frozen deterministic embedders standing in for pretrained vision/audio encoders.

The visual side is an oracle: each source class gets a fixed random unit
vector, isolating the fusion and alignment machinery from recognition
quality. The audio side is a frozen filterbank pipeline with no learnable
parameters: log energies of 16 triangular bands on a geometric grid,
(mean, std) pooled over frames, rotated by a fixed orthonormal matrix and
L2-normalized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from avsep.dsp import Waveform, hann_periodic
from avsep.errors import InputError

_NORM_TOL = 1e-9


@dataclass
class EmbedderConfig:
    dim: int = 32  # both d_v and d_a
    seed: int = 2024
    n_bands: int = 16
    band_lo_hz: float = 50.0
    frame: int = 512
    hop: int = 128


class OracleVisualEmbedder:
    """Per-class fixed random unit vectors, pairwise well-separated."""

    def __init__(self, class_ids, cfg: EmbedderConfig | None = None):
        self.cfg = cfg or EmbedderConfig()
        self._table = {}
        for cid in class_ids:
            rng = np.random.default_rng(
                np.random.SeedSequence([self.cfg.seed, 7919, int(cid)])
            )
            v = rng.normal(size=self.cfg.dim)
            self._table[int(cid)] = v / np.linalg.norm(v)

    def embed(self, class_id: int) -> np.ndarray:
        if class_id not in self._table:
            raise InputError(f"unknown class id {class_id}")
        return self._table[class_id].copy()

    def max_pairwise_abs_cos(self) -> float:
        ids = sorted(self._table)
        worst = 0.0
        for i, a in enumerate(ids):
            for b in ids[i + 1 :]:
                worst = max(worst, abs(float(self._table[a] @ self._table[b])))
        return worst


def _triangular_bank(n_bands, lo, hi, n_fft, sr):
    """Triangular filters on geometrically spaced centers, [n_bands, n_fft//2+1]."""
    edges = np.geomspace(lo, hi, n_bands + 2)
    freqs = np.linspace(0, sr / 2.0, n_fft // 2 + 1)
    bank = np.zeros((n_bands, len(freqs)))
    for b in range(n_bands):
        l, c, r = edges[b], edges[b + 1], edges[b + 2]
        up = (freqs - l) / (c - l)
        down = (r - freqs) / (r - c)
        bank[b] = np.clip(np.minimum(up, down), 0.0, None)
        s = bank[b].sum()
        if s > 0:
            bank[b] /= s
    return bank


class ProxyClapEmbedder:
    """Frozen semantic audio embedding from filterbank statistics."""

    def __init__(self, cfg: EmbedderConfig | None = None, sample_rate: int = 8000):
        self.cfg = cfg or EmbedderConfig()
        self.sample_rate = sample_rate
        if 2 * self.cfg.n_bands != self.cfg.dim:
            raise InputError("embedding dim must equal 2 x n_bands")
        self.bank = _triangular_bank(
            self.cfg.n_bands, self.cfg.band_lo_hz, sample_rate / 2.0,
            self.cfg.frame, sample_rate,
        )
        rng = np.random.default_rng(np.random.SeedSequence([self.cfg.seed, 104729]))
        gauss = rng.normal(size=(self.cfg.dim, self.cfg.dim))
        q, r = np.linalg.qr(gauss)
        self.rotation = q * np.sign(np.diag(r))  # sign-canonical orthonormal basis

    def embed(self, w: Waveform) -> np.ndarray:
        x = w.samples
        frame, hop = self.cfg.frame, self.cfg.hop
        if len(x) < frame:
            raise InputError(f"waveform shorter than one analysis frame ({frame})")
        n_frames = 1 + (len(x) - frame) // hop
        win = hann_periodic(frame)
        idx = np.arange(frame)[None, :] + hop * np.arange(n_frames)[:, None]
        spectra = np.abs(np.fft.rfft(x[idx] * win, axis=1)) ** 2
        energies = spectra @ self.bank.T  # [frames, bands]
        # silent input degrades to the fixed floor embedding, never NaN
        logs = np.log(energies + 1e-10)
        feat = np.concatenate([logs.mean(axis=0), logs.std(axis=0)])
        # remove the shared loudness component so embeddings spread by
        # spectral shape rather than clustering along one direction
        feat = feat - feat.mean()
        z = self.rotation @ feat
        norm = np.linalg.norm(z)
        if norm == 0.0:
            z = self.rotation @ np.full(self.cfg.dim, 1e-6)
            norm = np.linalg.norm(z)
        return z / norm


def unit_norm(v: np.ndarray, tol: float = _NORM_TOL) -> bool:
    return abs(float(np.linalg.norm(v)) - 1.0) <= tol
