"""Effective-bandwidth estimation and resampling to the best matching SF.

A recording's container rate often exceeds the bandwidth its microphone
or upstream processing actually delivered. The estimator looks for the
highest frequency still carrying energy within a relative threshold of
the spectral peak, and the normalizer moves the file to the lowest
supported rate that covers that band.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio_io import AudioBuffer
from .dsp import SUPPORTED_SFS, resample, round_half_up
from .exceptions import SilentSignalError

ANALYSIS_WINDOW_S = 0.050
ANALYSIS_OVERLAP = 0.75
SILENCE_FLOOR_DBFS = -100.0
HYSTERESIS_BINS = 3


@dataclass
class BandwidthEstimate:
    effective_bw_hz: float
    confidence_db: float
    analyzed_frames: int


def estimate_effective_bandwidth(
    x: AudioBuffer,
    threshold_db: float = -50.0,
    hysteresis_bins: int = HYSTERESIS_BINS,
    loudest_fraction: float = 0.5,
) -> BandwidthEstimate:
    """Estimate the highest frequency carrying genuine signal energy.

    Mean power spectrum over 50 ms hann frames (75% overlap) of the
    loudest fraction of frames; scanning down from Nyquist, the estimate
    is the top of the first run of hysteresis_bins consecutive bins
    whose mean power lies within threshold_db of the spectral peak.
    Amplitude-invariant by construction.
    """
    if hysteresis_bins < 1:
        raise ValueError("hysteresis_bins must be >= 1")
    if not 0.0 < loudest_fraction <= 1.0:
        raise ValueError("loudest_fraction must lie in (0, 1]")
    sf = x.sample_rate_hz
    frame = round_half_up(ANALYSIS_WINDOW_S * sf)
    hop = max(1, round_half_up(frame * (1 - ANALYSIS_OVERLAP)))
    if len(x) < frame:
        raise ValueError(f"need at least {frame} samples ({ANALYSIS_WINDOW_S*1e3:.0f} ms) at {sf} Hz")

    peak = np.abs(x.samples).max()
    if peak <= 0 or 20 * np.log10(peak) < SILENCE_FLOOR_DBFS:
        raise SilentSignalError("input is (near-)digital silence")

    window = np.hanning(frame)
    n_frames = 1 + (len(x) - frame) // hop
    idx = np.arange(frame)[None, :] + hop * np.arange(n_frames)[:, None]
    frames = x.samples[idx] * window

    energies = np.sum(frames**2, axis=1)
    order = np.argsort(energies)
    n_keep = max(1, round_half_up(n_frames * loudest_fraction))
    keep = order[n_frames - n_keep :]
    spectrum = np.mean(np.abs(np.fft.rfft(frames[keep], axis=1)) ** 2, axis=0)

    freqs = np.fft.rfftfreq(frame, 1 / sf)
    floor = spectrum.max() * 10 ** (threshold_db / 10)
    mask = spectrum >= floor

    bw_bin = 0
    for i in range(len(mask) - 1, hysteresis_bins - 2, -1):
        if mask[i - hysteresis_bins + 1 : i + 1].all():
            bw_bin = i
            break
    effective_bw = float(freqs[bw_bin])

    rolloff = spectrum[bw_bin + 1 :]
    if len(rolloff):
        confidence = float(10 * np.log10(spectrum.max() / max(rolloff.mean(), 1e-300)))
    else:
        confidence = 0.0
    return BandwidthEstimate(effective_bw, confidence, int(len(keep)))


def best_matching_sf(bw_hz: float, allowed=SUPPORTED_SFS) -> int:
    """Lowest allowed SF whose Nyquist covers bw_hz; max(allowed) if none."""
    if not allowed:
        raise ValueError("allowed SF set must be non-empty")
    for sf in sorted(allowed):
        if sf / 2 >= bw_hz:
            return sf
    return max(allowed)


def normalize_to_effective_sf(
    x: AudioBuffer, threshold_db: float = -50.0, allowed=SUPPORTED_SFS
) -> AudioBuffer:
    """Resample x to the lowest allowed SF covering its effective band."""
    estimate = estimate_effective_bandwidth(x, threshold_db)
    return resample(x, best_matching_sf(estimate.effective_bw_hz, allowed))
