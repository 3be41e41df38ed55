"""Representation diagnostics: modality gap and linear probing."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from avsep.errors import InputError


@dataclass
class ModalityGapReport:
    gap: float
    audio_mean: np.ndarray
    visual_mean: np.ndarray


@dataclass
class ProbeReport:
    accuracy: float
    confusion: np.ndarray  # [n_classes, n_classes], rows = true class

    @property
    def n_total(self) -> int:
        return int(self.confusion.sum())


def _normalize_rows(vectors) -> np.ndarray:
    arr = np.asarray(vectors, dtype=np.float64)
    if arr.ndim != 2:
        raise InputError("embeddings must form a 2-d array")
    norms = np.linalg.norm(arr, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise InputError("zero-norm embedding")
    return arr / norms


def modality_gap(audio_embs, visual_embs) -> ModalityGapReport:
    """Euclidean norm of the difference of per-modality means (unit sphere)."""
    a = _normalize_rows(audio_embs)
    v = _normalize_rows(visual_embs)
    if a.shape[1] != v.shape[1]:
        raise InputError(
            f"dimension mismatch: audio {a.shape[1]} vs visual {v.shape[1]}"
        )
    am = a.mean(axis=0)
    vm = v.mean(axis=0)
    return ModalityGapReport(float(np.linalg.norm(am - vm)), am, vm)


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def linear_probe(features, split_seed: int = 0, max_iters: int = 3000,
                 lr: float = 2.0, tol: float = 1e-7) -> ProbeReport:
    """Multinomial logistic regression on an 80/20 split, full-batch GD.

    ``features`` is a sequence of (vector, class_id) pairs. Deterministic
    given the split seed.
    """
    vecs = np.asarray([np.asarray(v, dtype=np.float64) for v, _ in features])
    labels = np.asarray([int(c) for _, c in features])
    classes = np.unique(labels)
    if len(classes) < 2:
        raise InputError("need at least two classes to probe")
    counts = {c: int((labels == c).sum()) for c in classes}
    if min(counts.values()) < 10:
        raise InputError(f"need >= 10 samples per class, got {counts}")
    class_index = {c: i for i, c in enumerate(classes)}
    y = np.asarray([class_index[c] for c in labels])

    # stratified 80/20 split
    rng = np.random.default_rng(split_seed)
    train_idx, test_idx = [], []
    for c in classes:
        idx = np.flatnonzero(labels == c)
        idx = idx[rng.permutation(len(idx))]
        cut = int(round(0.8 * len(idx)))
        train_idx.extend(idx[:cut])
        test_idx.extend(idx[cut:])
    train_idx = np.asarray(sorted(train_idx))
    test_idx = np.asarray(sorted(test_idx))

    mu = vecs[train_idx].mean(axis=0)
    sd = vecs[train_idx].std(axis=0)
    sd[sd == 0] = 1.0
    xtr = (vecs[train_idx] - mu) / sd
    xte = (vecs[test_idx] - mu) / sd
    xtr = np.hstack([xtr, np.ones((len(xtr), 1))])
    xte = np.hstack([xte, np.ones((len(xte), 1))])
    ytr = y[train_idx]

    k = len(classes)
    w = np.zeros((xtr.shape[1], k))
    onehot = np.eye(k)[ytr]
    n = len(xtr)
    for _ in range(max_iters):
        p = _softmax(xtr @ w)
        g = xtr.T @ (p - onehot) / n
        w -= lr * g
        if np.abs(g).max() < tol:
            break

    pred = np.argmax(xte @ w, axis=1)
    confusion = np.zeros((k, k), dtype=int)
    for truth, hyp in zip(y[test_idx], pred):
        confusion[truth, hyp] += 1
    accuracy = float(np.trace(confusion)) / len(test_idx)
    return ProbeReport(accuracy, confusion)
