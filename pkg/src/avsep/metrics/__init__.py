"""Evaluation machinery: separation metrics, acoustic characteristics,
and representation diagnostics."""

from avsep.metrics.acoustic import (
    AcousticProfile,
    acoustic_map,
    amplitude_ratio,
    harmonic_complexity,
    profile,
    yin_f0,
    yin_frame_f0s,
)
from avsep.metrics.bss import (
    REPORT_CAP_DB,
    BssEvalResult,
    bss_decompose,
    bss_eval,
    si_sdr,
)
from avsep.metrics.probes import (
    ModalityGapReport,
    ProbeReport,
    linear_probe,
    modality_gap,
)

__all__ = [
    "AcousticProfile",
    "BssEvalResult",
    "ModalityGapReport",
    "ProbeReport",
    "REPORT_CAP_DB",
    "acoustic_map",
    "amplitude_ratio",
    "bss_decompose",
    "bss_eval",
    "harmonic_complexity",
    "linear_probe",
    "modality_gap",
    "profile",
    "si_sdr",
    "yin_f0",
    "yin_frame_f0s",
]
