"""Distortion generators and their composition.

Each simulated utterance is built as: optional reverberation of the dry
speech, additive noise at a target SNR, then at most one extra
distortion (bandwidth limitation or clipping) applied to the mixture
only. Every generator also yields the aligned clean reference so the
pair can drive supervised training or intrusive metrics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .audio_io import AudioBuffer
from .dsp import convolve, design_lowpass, resample, round_half_up
from .exceptions import DegenerateSignalError

DISTORTION_KINDS = ("none", "bandwidth_limitation", "clipping")
PEAK_CEILING = 0.99
TILE_CROSSFADE_S = 0.010


@dataclass
class DistortionSpec:
    """Fully-specified recipe for degrading one utterance."""

    kind: str = "none"
    snr_db: float = 10.0
    cutoff_hz: Optional[float] = None
    clip_ratio: Optional[float] = None
    rir_path: Optional[str] = None
    noise_path: Optional[str] = None
    noise_offset_s: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in DISTORTION_KINDS:
            raise ValueError(f"kind must be one of {DISTORTION_KINDS}, got {self.kind!r}")
        if not math.isfinite(self.snr_db):
            raise ValueError("snr_db must be finite")
        if self.kind == "bandwidth_limitation":
            if self.cutoff_hz is None or self.clip_ratio is not None:
                raise ValueError("bandwidth_limitation takes cutoff_hz and no clip_ratio")
        elif self.kind == "clipping":
            if self.clip_ratio is None or self.cutoff_hz is not None:
                raise ValueError("clipping takes clip_ratio and no cutoff_hz")
            if not 0.0 < self.clip_ratio <= 1.0:
                raise ValueError("clip_ratio must lie in (0, 1]")
        elif self.cutoff_hz is not None or self.clip_ratio is not None:
            raise ValueError("kind 'none' takes neither cutoff_hz nor clip_ratio")


@dataclass
class DegradedPair:
    """Degraded signal plus its aligned, level-matched clean reference."""

    degraded: AudioBuffer
    reference: AudioBuffer

    def __post_init__(self) -> None:
        if self.degraded.sample_rate_hz != self.reference.sample_rate_hz:
            raise ValueError("degraded and reference must share a sampling rate")
        if len(self.degraded) != len(self.reference):
            raise ValueError("degraded and reference must have equal length")


def _tile_noise(noise: np.ndarray, offset: int, length: int, sf: int) -> np.ndarray:
    """Cyclic tiling from offset with a 10 ms linear crossfade per seam."""
    if len(noise) == 0:
        raise DegenerateSignalError("noise sample is empty")
    out = noise[offset % len(noise) :]
    xf = min(round_half_up(TILE_CROSSFADE_S * sf), len(noise) // 2)
    ramp = np.linspace(0.0, 1.0, xf, endpoint=False) if xf > 0 else None
    while len(out) < length:
        if xf > 0 and len(out) >= xf:
            blended = out[-xf:] * (1.0 - ramp) + noise[:xf] * ramp
            out = np.concatenate([out[:-xf], blended, noise[xf:]])
        else:
            out = np.concatenate([out, noise])
    return out[:length]


def _signal_power(samples: np.ndarray, sf: int, vad_gated: bool) -> float:
    """Mean power, optionally over VAD-active samples only."""
    if vad_gated:
        from .corpus_filter import active_sample_mask

        mask = active_sample_mask(AudioBuffer(samples, sf))
        if mask.any():
            return float(np.mean(samples[mask] ** 2))
    return float(np.mean(samples**2))


def _mix_components(
    speech: np.ndarray,
    noise: np.ndarray,
    snr_db: float,
    offset_s: float,
    sf: int,
    vad_gated: bool = False,
) -> tuple[np.ndarray, float]:
    """Return (mixture, rescale) with the noise gain set so that
    10*log10(P_speech / P_(g*noise_seg)) == snr_db exactly; powers are
    full-length by default, per-signal VAD-gated when requested."""
    if len(speech) == 0:
        raise DegenerateSignalError("speech carries no energy")
    seg = _tile_noise(noise, round_half_up(offset_s * sf), len(speech), sf)
    p_speech = _signal_power(speech, sf, vad_gated)
    p_noise = _signal_power(seg, sf, vad_gated)
    if p_speech <= 0.0:
        raise DegenerateSignalError("speech carries no energy")
    if p_noise <= 0.0:
        raise DegenerateSignalError("noise segment carries no energy")

    gain = math.sqrt(p_speech / p_noise * 10.0 ** (-snr_db / 10.0))
    mixture = speech + gain * seg
    peak = float(np.abs(mixture).max())
    rescale = PEAK_CEILING / peak if peak > 1.0 else 1.0
    return mixture * rescale, rescale


def mix_noise_at_snr(
    speech: AudioBuffer,
    noise: AudioBuffer,
    snr_db: float,
    offset_s: float = 0.0,
    vad_gated: bool = False,
) -> AudioBuffer:
    """Add noise at an exact SNR (power ratio over the full length, or
    over VAD-active samples with vad_gated).

    Noise shorter than the speech is tiled cyclically from offset_s. If
    the mixture peak exceeds 1.0 the whole mixture is rescaled to peak
    0.99; the SNR is unaffected (callers tracking the clean reference
    must apply the same factor, as degrade() does).
    """
    if speech.sample_rate_hz != noise.sample_rate_hz:
        raise ValueError("speech and noise must share a sampling rate")
    mixture, _ = _mix_components(
        speech.samples, noise.samples, snr_db, offset_s, speech.sample_rate_hz, vad_gated
    )
    return speech.replace_samples(mixture)


def apply_reverb(
    speech: AudioBuffer, rir: AudioBuffer, early_reflections_s: Optional[float] = None
) -> tuple[AudioBuffer, AudioBuffer]:
    """Convolve with an RIR; return (reverberant, aligned reference).

    The pre-direct-path delay (direct path = largest |tap|) is discarded
    so the reverberant signal stays time-aligned with the dry speech.
    The default reference is the dry speech scaled by the direct-path
    coefficient (full dereverberation target); with early_reflections_s
    set, the reference instead keeps the RIR's first reflections up to
    that horizon after the direct path.
    """
    if speech.sample_rate_hz != rir.sample_rate_hz:
        rir = resample(rir, speech.sample_rate_hz)
    taps = rir.samples
    if not np.any(taps):
        raise DegenerateSignalError("RIR is all zeros")

    direct = int(np.argmax(np.abs(taps)))
    wet = convolve(speech, taps, mode="full").samples[direct : direct + len(speech)]

    if early_reflections_s is None:
        ref = speech.samples * taps[direct]
    else:
        horizon = direct + max(1, round_half_up(early_reflections_s * speech.sample_rate_hz))
        early = taps[direct:horizon]
        ref = convolve(speech, early, mode="full").samples[: len(speech)]
    return speech.replace_samples(wet), speech.replace_samples(ref)


def apply_clipping(x: AudioBuffer, clip_ratio: float) -> AudioBuffer:
    """Saturate at clip_ratio times the peak magnitude."""
    if not 0.0 < clip_ratio <= 1.0:
        raise ValueError("clip_ratio must lie in (0, 1]")
    peak = float(np.abs(x.samples).max()) if len(x) else 0.0
    if peak == 0.0:
        return x.replace_samples(x.samples.copy())
    c = clip_ratio * peak
    return x.replace_samples(np.clip(x.samples, -c, c))


def apply_bandwidth_limitation(x: AudioBuffer, cutoff_hz: float) -> AudioBuffer:
    """Low-pass at cutoff_hz keeping the container SF and length.

    The degraded file keeps its sampling rate: the band above cutoff is
    emptied rather than the signal being downsampled. Cutoff at Nyquist
    is a no-op.
    """
    nyquist = x.sample_rate_hz / 2
    if not 0 < cutoff_hz <= nyquist:
        raise ValueError(f"cutoff {cutoff_hz} Hz outside (0, {nyquist}]")
    if cutoff_hz == nyquist:
        return x
    fir = design_lowpass(cutoff_hz, x.sample_rate_hz, 0.05 * cutoff_hz)
    return convolve(x, fir.taps, mode="same_delay_compensated")


def degrade(
    speech: AudioBuffer,
    spec: DistortionSpec,
    rir: Optional[AudioBuffer],
    noise: AudioBuffer,
    *,
    early_reflections_s: Optional[float] = None,
    vad_gated_snr: bool = False,
    reverberate_noise: bool = False,
) -> DegradedPair:
    """Compose the full distortion chain for one utterance.

    Order: (1) reverberation when an RIR is given (the reference becomes
    the direct-path-aligned dry speech, or keeps the early reflections
    when early_reflections_s is set); (2) additive noise at spec.snr_db,
    measured against the, possibly reverberant, speech component (noise
    is added dry unless reverberate_noise); (3) the kind-specific
    distortion on the mixture only. Bitwise reproducible for fixed
    inputs.
    """
    sf = speech.sample_rate_hz
    if noise.sample_rate_hz != sf:
        noise = resample(noise, sf)

    if rir is not None:
        current, reference = apply_reverb(speech, rir, early_reflections_s)
        if reverberate_noise:
            noise, _ = apply_reverb(noise, rir)
    else:
        current, reference = speech, speech

    mixture, rescale = _mix_components(
        current.samples, noise.samples, spec.snr_db, spec.noise_offset_s, sf, vad_gated_snr
    )
    degraded = speech.replace_samples(mixture)
    reference = reference.replace_samples(reference.samples * rescale)

    if spec.kind == "bandwidth_limitation":
        degraded = apply_bandwidth_limitation(degraded, spec.cutoff_hz)
    elif spec.kind == "clipping":
        degraded = apply_clipping(degraded, spec.clip_ratio)
    return DegradedPair(degraded=degraded, reference=reference)
