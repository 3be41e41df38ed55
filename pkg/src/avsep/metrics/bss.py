"""BSS-eval separation metrics: orthogonal decomposition into target,
interference and artifact components via least-squares projection onto
delayed reference copies, plus the scale-invariant single-coefficient SDR."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from avsep.dsp import Waveform
from avsep.errors import InputError, NumericError

REPORT_CAP_DB = 60.0
_REG = 1e-10


@dataclass
class BssEvalResult:
    sdr_db: float
    sir_db: float
    sar_db: float

    def capped(self, cap: float = REPORT_CAP_DB) -> "BssEvalResult":
        return BssEvalResult(
            min(self.sdr_db, cap), min(self.sir_db, cap), min(self.sar_db, cap)
        )


def _delay_matrix(signals: Sequence[np.ndarray], filter_len: int) -> np.ndarray:
    """Columns are 0..filter_len-1 sample delays of each signal."""
    n = len(signals[0])
    d = np.zeros((n, len(signals) * filter_len))
    for j, s in enumerate(signals):
        for l in range(filter_len):
            d[l:, j * filter_len + l] = s[: n - l]
    return d


def _project(design: np.ndarray, target: np.ndarray) -> np.ndarray:
    gram = design.T @ design + _REG * np.eye(design.shape[1])
    try:
        coef = np.linalg.solve(gram, design.T @ target)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"projection system singular: {exc}") from exc
    if not np.isfinite(coef).all():
        raise NumericError("projection produced non-finite coefficients")
    return design @ coef


def bss_decompose(
    references: Sequence[Waveform],
    estimate: Waveform,
    target_index: int,
    filter_len: int = 32,
):
    """Split an estimate into (s_target, e_interf, e_artif)."""
    if filter_len < 1:
        raise InputError("filter_len must be >= 1")
    if not references:
        raise InputError("need at least one reference")
    if not (0 <= target_index < len(references)):
        raise InputError(f"target_index {target_index} out of range")
    n = len(estimate)
    refs = []
    for r in references:
        if len(r) != n:
            raise InputError(
                f"reference length {len(r)} != estimate length {n}"
            )
        if not np.any(r.samples):
            raise InputError("all-zero reference is ambiguous for decomposition")
        refs.append(r.samples)
    est = estimate.samples

    s_target = _project(_delay_matrix([refs[target_index]], filter_len), est)
    p_all = _project(_delay_matrix(refs, filter_len), est)
    e_interf = p_all - s_target
    e_artif = est - p_all
    return s_target, e_interf, e_artif


def _ratio_db(num: float, den: float) -> float:
    if den <= 0.0:
        return np.inf
    if num <= 0.0:
        return -np.inf
    return 10.0 * np.log10(num / den)


def bss_eval(
    references: Sequence[Waveform],
    estimate: Waveform,
    target_index: int,
    filter_len: int = 32,
) -> BssEvalResult:
    """SDR/SIR/SAR of an estimate against references (uncapped decibels)."""
    s_t, e_i, e_a = bss_decompose(references, estimate, target_index, filter_len)
    es_t = float(s_t @ s_t)
    e_ia = e_i + e_a
    return BssEvalResult(
        sdr_db=_ratio_db(es_t, float(e_ia @ e_ia)),
        sir_db=_ratio_db(es_t, float(e_i @ e_i)),
        sar_db=_ratio_db(float((s_t + e_i) @ (s_t + e_i)), float(e_a @ e_a)),
    )


def si_sdr(reference: Waveform, estimate: Waveform) -> float:
    """Scale-invariant SDR: optimal scalar projection onto the reference."""
    if len(reference) != len(estimate):
        raise InputError("reference/estimate length mismatch")
    r = reference.samples
    e = estimate.samples
    rr = float(r @ r)
    if rr == 0.0:
        raise InputError("zero reference")
    s = (float(e @ r) / rr) * r
    noise = e - s
    return _ratio_db(float(s @ s), float(noise @ noise))
