"""Numeric kernels: resampling, FIR design, convolution, and the
duration-parameterized STFT/iSTFT that works identically at every
supported sampling frequency.

All operations are pure and operate on float64; callers may parallelize
freely over independent buffers.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import gcd

import numpy as np
from scipy.signal import fftconvolve, firwin, kaiserord, resample_poly

from .audio_io import AudioBuffer
from .exceptions import ConfigError

STOPBAND_ATTEN_DB = 80.0
FFT_CONV_MIN_TAPS = 64

SUPPORTED_SFS = (8000, 16000, 22050, 24000, 32000, 44100, 48000)


def round_half_up(x: float) -> int:
    """Deterministic rounding, half away from zero for positive x."""
    return int(np.floor(x + 0.5))


@dataclass
class FirFilter:
    """Linear-phase FIR filter; odd tap count, group delay (n-1)/2."""

    taps: np.ndarray

    def __post_init__(self) -> None:
        self.taps = np.asarray(self.taps, dtype=np.float64)
        if self.taps.ndim != 1 or len(self.taps) % 2 == 0:
            raise ValueError("linear-phase designs require an odd 1-D tap vector")
        if not np.all(np.isfinite(self.taps)):
            raise ValueError("filter taps must be finite")

    @property
    def delay_samples(self) -> int:
        return (len(self.taps) - 1) // 2


def design_lowpass(cutoff_hz: float, sf: int, transition_hz: float) -> FirFilter:
    """Kaiser-windowed sinc low-pass with >= 80 dB stopband attenuation.

    cutoff_hz is the -6 dB point; the transition band of full width
    transition_hz is centered on it, so the response is <= -80 dB from
    cutoff_hz + transition_hz/2 up and ripple-free (<= 0.1 dB) below
    cutoff_hz - transition_hz/2.
    """
    nyquist = sf / 2
    if not 0 < cutoff_hz < nyquist:
        raise ValueError(f"cutoff {cutoff_hz} Hz outside (0, {nyquist}) Hz")
    if transition_hz <= 0:
        raise ValueError("transition width must be positive")
    numtaps, beta = kaiserord(STOPBAND_ATTEN_DB, transition_hz / nyquist)
    numtaps |= 1
    taps = firwin(numtaps, cutoff_hz, window=("kaiser", beta), fs=sf)
    return FirFilter(taps=taps)


@lru_cache(maxsize=64)
def _resample_filter(up: int, down: int, sf: int) -> np.ndarray:
    """Anti-alias/anti-image prototype at the upsampled rate sf*up.

    Cutoff sits at 0.95x the smaller Nyquist so both conversion
    directions keep >= 80 dB alias suppression at the band edge.
    """
    nyq_min = min(sf, sf * up // down) / 2
    fir = design_lowpass(0.95 * nyq_min, sf * up, 0.1 * nyq_min)
    return fir.taps


def resample(x: AudioBuffer, target_sf: int) -> AudioBuffer:
    """Band-limited polyphase resampling to target_sf.

    Output length is round(len(x) * target_sf / sf). Identical rates
    return the input unchanged; empty input stays empty.
    """
    if target_sf <= 0:
        raise ValueError(f"target_sf must be positive, got {target_sf}")
    sf = x.sample_rate_hz
    if target_sf == sf:
        return x
    if len(x) == 0:
        return AudioBuffer(np.zeros(0), target_sf)

    g = gcd(sf, target_sf)
    up, down = target_sf // g, sf // g
    taps = _resample_filter(up, down, sf)
    y = resample_poly(x.samples, up, down, window=taps)
    out_len = round_half_up(len(x) * target_sf / sf)
    return AudioBuffer(y[:out_len], target_sf)


def convolve(x: AudioBuffer, h, mode: str = "full") -> AudioBuffer:
    """Exact linear convolution, FFT-based for kernels >= 64 taps.

    mode 'full' returns len(x)+len(h)-1 samples; 'same_delay_compensated'
    trims the (len(h)-1)//2 group delay from the front and pads or
    truncates to len(x).
    """
    h = np.asarray(h, dtype=np.float64)
    if h.ndim != 1 or len(h) == 0:
        raise ValueError("kernel must be a non-empty 1-D sequence")
    if len(h) >= FFT_CONV_MIN_TAPS and len(x) >= FFT_CONV_MIN_TAPS:
        y = fftconvolve(x.samples, h, mode="full")
    else:
        y = np.convolve(x.samples, h, mode="full")

    if mode == "full":
        return x.replace_samples(y)
    if mode == "same_delay_compensated":
        delay = (len(h) - 1) // 2
        y = y[delay : delay + len(x)]
        if len(y) < len(x):
            y = np.pad(y, (0, len(x) - len(y)))
        return x.replace_samples(y)
    raise ValueError(f"unknown mode {mode!r}")


# --- duration-parameterized STFT -------------------------------------------

_WINDOW_FNS = ("hann", "sqrt_hann", "rect")


def _make_window(name: str, n: int) -> np.ndarray:
    # periodic windows: exact COLA at hop = n/2
    if name == "hann":
        return 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n) / n)
    if name == "sqrt_hann":
        return np.sqrt(0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n) / n))
    if name == "rect":
        return np.ones(n)
    raise ValueError(f"window_fn must be one of {_WINDOW_FNS}, got {name!r}")


@dataclass(frozen=True)
class SfiStftConfig:
    """Fixed-duration window and hop sizes, resolved to sample counts
    per sampling rate.

    Frames are always center-padded (n_fft/2 reflected samples each
    side) so the frame count depends only on signal length and hop.
    """

    window_duration_s: float = 0.020
    hop_duration_s: float = 0.010
    window_fn: str = "hann"

    def __post_init__(self) -> None:
        if not 0 < self.hop_duration_s <= self.window_duration_s:
            raise ConfigError("need 0 < hop_duration_s <= window_duration_s")
        if self.window_fn not in _WINDOW_FNS:
            raise ConfigError(f"window_fn must be one of {_WINDOW_FNS}")

    def n_fft(self, sf: int) -> int:
        """Window length in samples; odd roundings are bumped to the next
        even integer (22.05 kHz at 20 ms gives 441 -> 442)."""
        n = round_half_up(self.window_duration_s * sf)
        if n <= 0:
            raise ConfigError(f"window duration resolves to {n} samples at {sf} Hz")
        return n + (n & 1)

    def hop_samples(self, sf: int) -> int:
        hop = round_half_up(self.hop_duration_s * sf)
        if hop <= 0:
            raise ConfigError(f"hop duration resolves to {hop} samples at {sf} Hz")
        return hop


@dataclass
class Spectrogram:
    """T x F complex STFT frames with the geometry that produced them."""

    frames: np.ndarray
    sample_rate_hz: int
    n_fft: int
    hop_samples: int

    @property
    def n_bins(self) -> int:
        return self.n_fft // 2 + 1


def _frame_signal(padded: np.ndarray, n_fft: int, hop: int, n_frames: int) -> np.ndarray:
    idx = np.arange(n_fft)[None, :] + hop * np.arange(n_frames)[:, None]
    return padded[idx]


def stft(samples: np.ndarray, sf: int, n_fft: int, hop: int, window_fn: str = "hann") -> Spectrogram:
    """Center-padded STFT with T = 1 + floor(len/hop) frames."""
    samples = np.asarray(samples, dtype=np.float64)
    if len(samples) == 0:
        raise ValueError("cannot transform a zero-length signal")
    window = _make_window(window_fn, n_fft)
    pad = n_fft // 2
    padded = np.pad(samples, pad, mode="reflect" if len(samples) > 1 else "edge")
    n_frames = 1 + len(samples) // hop
    frames = _frame_signal(padded, n_fft, hop, n_frames) * window
    return Spectrogram(np.fft.rfft(frames, axis=1), sf, n_fft, hop)


def istft(spec: Spectrogram, target_len: int, window_fn: str = "hann") -> np.ndarray:
    """Weighted overlap-add inverse with squared-window normalization.

    Perfect reconstruction holds whenever the overlapped squared window
    sum is bounded away from zero over the signal span (true for hann,
    sqrt-hann, and rect at hop <= n_fft/2).
    """
    n_fft, hop = spec.n_fft, spec.hop_samples
    window = _make_window(window_fn, n_fft)
    n_frames = spec.frames.shape[0]
    out_len = n_fft + hop * (n_frames - 1)

    segments = np.fft.irfft(spec.frames, n=n_fft, axis=1) * window
    window_sq = window**2
    acc = np.zeros(out_len)
    wss = np.zeros(out_len)
    for t in range(n_frames):
        s = hop * t
        acc[s : s + n_fft] += segments[t]
        wss[s : s + n_fft] += window_sq
    np.divide(acc, wss, out=acc, where=wss > 1e-11)

    pad = n_fft // 2
    core = acc[pad : pad + target_len]
    span = wss[pad : pad + target_len]
    if len(core) < target_len:
        raise ConfigError("spectrogram too short for the requested length")
    if np.any(span <= 1e-11):
        raise ConfigError("window/hop combination leaves uncovered samples (COLA violated)")
    return core


def sfi_stft(x: AudioBuffer, cfg: SfiStftConfig) -> Spectrogram:
    """STFT with window/hop resolved from durations at x's sampling rate."""
    if len(x) == 0:
        raise ValueError("cannot transform an empty buffer")
    sf = x.sample_rate_hz
    return stft(x.samples, sf, cfg.n_fft(sf), cfg.hop_samples(sf), cfg.window_fn)


def sfi_istft(spec: Spectrogram, cfg: SfiStftConfig, target_len: int) -> AudioBuffer:
    """Inverse of sfi_stft; round trip is exact to ~1e-6 at every SF."""
    expected = (cfg.n_fft(spec.sample_rate_hz), cfg.hop_samples(spec.sample_rate_hz))
    if (spec.n_fft, spec.hop_samples) != expected:
        raise ConfigError(
            f"spectrogram geometry {(spec.n_fft, spec.hop_samples)} does not match "
            f"config resolution {expected} at {spec.sample_rate_hz} Hz"
        )
    samples = istft(spec, target_len, cfg.window_fn)
    return AudioBuffer(samples, spec.sample_rate_hz)
