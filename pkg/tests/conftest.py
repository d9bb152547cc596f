import numpy as np
import pytest

from urgent_forge.audio_io import AudioBuffer, save_wav
from urgent_forge.dsp import convolve, design_lowpass


def white_noise(sf, duration_s, seed=0, amp=0.2):
    rng = np.random.default_rng(seed)
    return AudioBuffer(amp * rng.standard_normal(int(sf * duration_s)), sf)


def speech_like(sf, duration_s, seed=0, peak=0.25):
    """AM tone complex over a low noise floor: a crude but broadband-
    modulated stand-in for speech, enough for envelope-based metrics."""
    rng = np.random.default_rng(seed)
    t = np.arange(int(sf * duration_s)) / sf
    envelope = 0.5 * (1.0 + np.sin(2 * np.pi * 3.1 * t + rng.uniform(0, 2 * np.pi)))
    x = np.zeros_like(t)
    for f0, a in ((210, 1.0), (430, 0.7), (870, 0.5), (1700, 0.3), (3100, 0.2)):
        if f0 < sf / 2:
            x += a * np.sin(2 * np.pi * f0 * t + rng.uniform(0, 2 * np.pi))
    x = envelope * x + 0.01 * rng.standard_normal(len(t))
    return AudioBuffer(peak * x / np.abs(x).max(), sf)


def band_limited_noise(sf, duration_s, cutoff_hz, seed=0, amp=0.2):
    noise = white_noise(sf, duration_s, seed=seed, amp=amp)
    fir = design_lowpass(cutoff_hz, sf, 0.05 * cutoff_hz)
    return convolve(noise, fir.taps, mode="same_delay_compensated")


def simple_rir(sf, seed=0, direct_at=30, direct_gain=0.9, tail_len=800):
    rng = np.random.default_rng(seed)
    taps = np.zeros(direct_at + tail_len)
    taps[direct_at] = direct_gain
    tail = 0.2 * rng.standard_normal(tail_len) * np.exp(-np.arange(tail_len) / (tail_len / 4))
    taps[direct_at:] += tail * (np.arange(tail_len) > 0)
    return AudioBuffer(taps, sf)


@pytest.fixture
def tiny_corpus(tmp_path):
    """Small synthetic corpus on disk: speech at mixed rates, noise, RIRs."""
    speech, noise, rirs = [], [], []
    for i, sf in enumerate((16000, 48000, 22050)):
        p = tmp_path / f"speech{i}.wav"
        save_wav(speech_like(sf, 5.0, seed=10 + i), p)
        speech.append(str(p))
    for i in range(2):
        p = tmp_path / f"noise{i}.wav"
        save_wav(white_noise(16000, 2.0, seed=20 + i, amp=0.05), p)
        noise.append(str(p))
    for i in range(2):
        p = tmp_path / f"rir{i}.wav"
        save_wav(simple_rir(16000, seed=30 + i), p)
        rirs.append(str(p))
    return {"speech": speech, "noise": noise, "rir": rirs, "root": tmp_path}
