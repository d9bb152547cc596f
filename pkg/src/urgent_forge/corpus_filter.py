"""Activity- and score-based filtering of candidate speech corpora.

Quality scores (OVRL/SIG/BAK, typically MOS-like values in [1, 5]) are
ingested from TSV sidecars produced by external scorers; only the
energy-based activity ratio is computed here.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .audio_io import AudioBuffer
from .dsp import round_half_up
from .exceptions import MissingScoreError

VAD_FRAME_S = 0.030
VAD_HOP_S = 0.010
ABSOLUTE_GATE_DBFS = -60.0
RELATIVE_GATE_DB = 10.0
NOISE_FLOOR_PERCENTILE = 10.0


@dataclass
class ScoreRecord:
    path: str
    ovrl: Optional[float] = None
    sig: Optional[float] = None
    bak: Optional[float] = None


@dataclass
class FilterPolicy:
    """Keep thresholds; a score threshold <= 0 is inactive (MOS scores
    live in [1, 5], so 0.0 keeps everything)."""

    min_speech_ratio: float = 0.0
    min_ovrl: float = 0.0
    min_sig: float = 0.0
    min_bak: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.min_speech_ratio <= 1.0:
            raise ValueError("min_speech_ratio must lie in [0, 1]")


def active_frame_mask(
    x: AudioBuffer,
    absolute_gate_dbfs: float = ABSOLUTE_GATE_DBFS,
    relative_gate_db: float = RELATIVE_GATE_DB,
) -> np.ndarray:
    """Per-frame activity decisions over 30 ms frames at a 10 ms hop.

    A frame counts as active when its RMS clears the absolute gate
    (default -60 dBFS), or sits more than relative_gate_db above the
    noise floor (10th-percentile frame RMS). Digital silence activates
    nothing; any steady signal above the absolute gate activates all
    frames.
    """
    sf = x.sample_rate_hz
    frame = round_half_up(VAD_FRAME_S * sf)
    hop = round_half_up(VAD_HOP_S * sf)
    if len(x) < frame:
        raise ValueError(f"need at least {frame} samples ({VAD_FRAME_S*1e3:.0f} ms)")

    n_frames = 1 + (len(x) - frame) // hop
    idx = np.arange(frame)[None, :] + hop * np.arange(n_frames)[:, None]
    rms = np.sqrt(np.mean(x.samples[idx] ** 2, axis=1))
    with np.errstate(divide="ignore"):
        rms_db = 20 * np.log10(rms)

    finite = rms_db[np.isfinite(rms_db)]
    floor_db = np.percentile(finite, NOISE_FLOOR_PERCENTILE) if len(finite) else -np.inf
    return (rms_db > absolute_gate_dbfs) | (rms_db > floor_db + relative_gate_db)


def active_sample_mask(
    x: AudioBuffer,
    absolute_gate_dbfs: float = ABSOLUTE_GATE_DBFS,
    relative_gate_db: float = RELATIVE_GATE_DB,
) -> np.ndarray:
    """Boolean per-sample mask: a sample is active when any frame
    containing it is active."""
    sf = x.sample_rate_hz
    frame = round_half_up(VAD_FRAME_S * sf)
    hop = round_half_up(VAD_HOP_S * sf)
    frames = active_frame_mask(x, absolute_gate_dbfs, relative_gate_db)
    mask = np.zeros(len(x), dtype=bool)
    for t in np.flatnonzero(frames):
        mask[t * hop : t * hop + frame] = True
    return mask


def speech_activity_ratio(
    x: AudioBuffer,
    absolute_gate_dbfs: float = ABSOLUTE_GATE_DBFS,
    relative_gate_db: float = RELATIVE_GATE_DB,
) -> float:
    """Fraction of active frames; see active_frame_mask for the rule."""
    return float(np.mean(active_frame_mask(x, absolute_gate_dbfs, relative_gate_db)))


def filter_corpus(
    records: Sequence[ScoreRecord],
    ratios: Mapping[str, float],
    policy: FilterPolicy,
) -> tuple[list[ScoreRecord], list[tuple[ScoreRecord, str]]]:
    """Partition records into (kept, rejected-with-reason).

    A record is kept iff its activity ratio and every score clear the
    policy thresholds; the rejection reason names the first failed
    criterion in the fixed order speech_ratio, ovrl, sig, bak. Raises
    MissingScoreError when an active threshold has no value to test.
    """
    kept: list[ScoreRecord] = []
    rejected: list[tuple[ScoreRecord, str]] = []

    for rec in records:
        checks = [
            ("speech_ratio", ratios.get(rec.path), policy.min_speech_ratio),
            ("ovrl", rec.ovrl, policy.min_ovrl),
            ("sig", rec.sig, policy.min_sig),
            ("bak", rec.bak, policy.min_bak),
        ]
        reason = None
        for name, value, threshold in checks:
            if threshold <= 0.0:
                continue
            if value is None:
                raise MissingScoreError(f"{rec.path}: no {name} available but threshold is active")
            if value < threshold:
                reason = name
                break
        if reason is None:
            kept.append(rec)
        else:
            rejected.append((rec, reason))
    return kept, rejected


def read_score_tsv(path: str | Path) -> list[ScoreRecord]:
    """Read `path \\t ovrl \\t sig \\t bak` rows; missing columns stay None."""
    records = []
    for line in Path(path).read_text().splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.rstrip("\n").split("\t")
        scores = [float(p) if p not in ("", "-") else None for p in parts[1:4]]
        scores += [None] * (3 - len(scores))
        records.append(ScoreRecord(parts[0], *scores))
    return records


def write_partition_tsvs(
    kept: Sequence[ScoreRecord],
    rejected: Sequence[tuple[ScoreRecord, str]],
    kept_path: str | Path,
    rejected_path: str | Path,
) -> None:
    def fmt(v: Optional[float]) -> str:
        return "-" if v is None else repr(v)

    with open(kept_path, "w") as fh:
        for r in kept:
            fh.write(f"{r.path}\t{fmt(r.ovrl)}\t{fmt(r.sig)}\t{fmt(r.bak)}\n")
    with open(rejected_path, "w") as fh:
        for r, reason in rejected:
            fh.write(f"{r.path}\t{fmt(r.ovrl)}\t{fmt(r.sig)}\t{fmt(r.bak)}\t{reason}\n")
