import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from urgent_forge.audio_io import AudioBuffer
from urgent_forge.dsp import (
    SUPPORTED_SFS,
    FirFilter,
    SfiStftConfig,
    convolve,
    design_lowpass,
    resample,
    sfi_istft,
    sfi_stft,
)
from urgent_forge.exceptions import ConfigError

from conftest import band_limited_noise, white_noise


def central(x, fraction=0.8):
    n = len(x)
    cut = int(n * (1 - fraction) / 2)
    return x[cut : n - cut]


# --- resample ---------------------------------------------------------------


def test_resample_identity():
    buf = white_noise(16000, 0.5, seed=1)
    out = resample(buf, 16000)
    assert out is buf


def test_resample_sine_amplitude():
    t48 = np.arange(96000) / 48000
    x = AudioBuffer(np.sin(2 * np.pi * 1000 * t48), 48000)
    y = resample(x, 16000)
    assert len(y) == 32000
    t16 = np.arange(32000) / 16000
    ref = np.sin(2 * np.pi * 1000 * t16)
    got = central(y.samples)
    amp_err_db = abs(20 * np.log10(np.abs(got).max()))
    assert amp_err_db < 0.1
    assert np.abs(got - central(ref)).max() < 1e-3


def test_resample_round_trip_band_limited():
    x = band_limited_noise(8000, 2.0, cutoff_hz=3500, seed=2)
    back = resample(resample(x, 48000), 8000)
    ref, got = central(x.samples), central(back.samples)
    ratio = 10 * np.log10(np.sum(ref**2) / np.sum((ref - got) ** 2))
    assert ratio >= 60.0


def test_resample_linearity():
    a = white_noise(16000, 0.5, seed=3).samples
    b = white_noise(16000, 0.5, seed=4).samples
    lhs = resample(AudioBuffer(2.0 * a + 0.5 * b, 16000), 24000).samples
    rhs = 2.0 * resample(AudioBuffer(a, 16000), 24000).samples + 0.5 * resample(
        AudioBuffer(b, 16000), 24000
    ).samples
    assert np.abs(lhs - rhs).max() < 1e-9


def test_resample_edge_cases():
    empty = resample(AudioBuffer(np.zeros(0), 8000), 16000)
    assert len(empty) == 0 and empty.sample_rate_hz == 16000
    with pytest.raises(ValueError):
        resample(white_noise(8000, 0.1), 0)


def test_resample_output_length_rounding():
    # round(len * target / sf), half away from zero: 8000.5 -> 8001
    buf = AudioBuffer(np.zeros(16001), 16000)
    assert len(resample(buf, 8000)) == 8001
    assert len(resample(AudioBuffer(np.zeros(999), 44100), 16000)) == int(
        np.floor(999 * 16000 / 44100 + 0.5)
    )


# --- design_lowpass ---------------------------------------------------------


def _magnitude_db(taps, freq_hz, sf):
    n = 1 << 18
    response = np.fft.rfft(taps, n)
    freqs = np.fft.rfftfreq(n, 1 / sf)
    return 20 * np.log10(np.abs(response[np.argmin(np.abs(freqs - freq_hz))]) + 1e-300)


def test_lowpass_meets_specs():
    fir = design_lowpass(4000, 48000, 200)
    assert abs(_magnitude_db(fir.taps, 2000, 48000)) <= 0.1
    assert _magnitude_db(fir.taps, 4200, 48000) <= -80.0
    assert abs(fir.taps.sum() - 1.0) < 1e-3
    assert len(fir.taps) % 2 == 1


def test_lowpass_rejects_bad_cutoff():
    with pytest.raises(ValueError):
        design_lowpass(4000, 8000, 100)
    with pytest.raises(ValueError):
        design_lowpass(5000, 8000, 100)
    with pytest.raises(ValueError):
        design_lowpass(1000, 8000, 0.0)


def test_fir_filter_invariants():
    with pytest.raises(ValueError):
        FirFilter(np.ones(4))
    assert FirFilter(np.ones(5)).delay_samples == 2


# --- convolve ----------------------------------------------------------------


def _direct_convolve(x, h):
    out = np.zeros(len(x) + len(h) - 1)
    for k, tap in enumerate(h):
        out[k : k + len(x)] += tap * x
    return out


def test_convolve_identity_kernel():
    buf = white_noise(8000, 0.1, seed=5)
    out = convolve(buf, [1.0], mode="full")
    assert np.array_equal(out.samples, buf.samples)


def test_convolve_small_example():
    out = convolve(AudioBuffer(np.array([1.0, 2.0, 3.0]), 8000), [1.0, 1.0], mode="full")
    assert out.samples.tolist() == [1.0, 3.0, 5.0, 3.0]


def test_convolve_fft_matches_direct():
    rng = np.random.default_rng(6)
    x = AudioBuffer(rng.standard_normal(10_000), 16000)
    h = rng.standard_normal(512)
    got = convolve(x, h, mode="full").samples
    assert np.abs(got - _direct_convolve(x.samples, h)).max() <= 1e-10


def test_convolve_delay_compensated():
    buf = white_noise(8000, 0.1, seed=7)
    fir = design_lowpass(2000, 8000, 400)
    out = convolve(buf, fir.taps, mode="same_delay_compensated")
    assert len(out) == len(buf)
    full = convolve(buf, fir.taps, mode="full").samples
    assert np.array_equal(out.samples, full[fir.delay_samples : fir.delay_samples + len(buf)])


def test_convolve_rejects_empty_kernel():
    with pytest.raises(ValueError):
        convolve(white_noise(8000, 0.1), [], mode="full")


# --- SFI STFT -----------------------------------------------------------------


def test_config_resolution_examples():
    cfg = SfiStftConfig()
    assert (cfg.n_fft(16000), cfg.hop_samples(16000)) == (320, 160)
    assert (cfg.n_fft(48000), cfg.hop_samples(48000)) == (960, 480)
    # 20 ms at 22.05 kHz rounds to odd 441 and is bumped even
    assert cfg.n_fft(22050) == 442


def test_config_even_n_fft_everywhere():
    cfg = SfiStftConfig()
    for sf in SUPPORTED_SFS:
        assert cfg.n_fft(sf) % 2 == 0


def test_config_validation():
    with pytest.raises(ConfigError):
        SfiStftConfig(window_duration_s=0.02, hop_duration_s=0.03)
    with pytest.raises(ConfigError):
        SfiStftConfig(window_fn="blackman")


def test_stft_shape():
    cfg = SfiStftConfig()
    x = white_noise(16000, 1.0, seed=8)
    spec = sfi_stft(x, cfg)
    assert spec.frames.shape == (1 + len(x) // 160, 161)
    assert spec.n_bins == 161


def test_stft_rejects_empty():
    with pytest.raises(ValueError):
        sfi_stft(AudioBuffer(np.zeros(0), 16000), SfiStftConfig())


def test_parseval_single_frame_rect():
    # direct DFT oracle on one frame: full-spectrum energy equals
    # n_fft times the windowed time-domain energy
    cfg = SfiStftConfig(window_fn="rect")
    rng = np.random.default_rng(9)
    x = AudioBuffer(rng.standard_normal(320), 16000)
    spec = sfi_stft(x, cfg)
    n_fft = spec.n_fft
    frame = np.pad(x.samples, n_fft // 2, mode="reflect")[:n_fft]
    direct = np.array([np.sum(frame * np.exp(-2j * np.pi * k * np.arange(n_fft) / n_fft))
                       for k in range(n_fft // 2 + 1)])
    assert np.abs(spec.frames[0] - direct).max() < 1e-8
    spectral = np.abs(direct[0]) ** 2 + 2 * np.sum(np.abs(direct[1:-1]) ** 2) + np.abs(direct[-1]) ** 2
    assert abs(spectral - n_fft * np.sum(frame**2)) / spectral < 1e-6


@pytest.mark.parametrize("sf", SUPPORTED_SFS)
def test_round_trip_all_rates(sf):
    cfg = SfiStftConfig()
    x = white_noise(sf, 1.0, seed=sf)
    y = sfi_istft(sfi_stft(x, cfg), cfg, len(x))
    assert np.abs(y.samples - x.samples).max() <= 1e-6


def test_round_trip_sqrt_hann():
    cfg = SfiStftConfig(window_fn="sqrt_hann")
    x = white_noise(24000, 0.7, seed=11)
    y = sfi_istft(sfi_stft(x, cfg), cfg, len(x))
    assert np.abs(y.samples - x.samples).max() <= 1e-6


def test_zero_spectrogram_gives_zero_signal():
    cfg = SfiStftConfig()
    x = white_noise(8000, 0.5, seed=12)
    spec = sfi_stft(x, cfg)
    spec.frames[:] = 0
    y = sfi_istft(spec, cfg, len(x))
    assert np.abs(y.samples).max() == 0.0


def test_istft_rejects_mismatched_geometry():
    cfg = SfiStftConfig()
    x = white_noise(16000, 0.5, seed=13)
    spec = sfi_stft(x, cfg)
    spec.hop_samples = 100
    with pytest.raises(ConfigError):
        sfi_istft(spec, cfg, len(x))


@settings(max_examples=15, deadline=None)
@given(st.integers(200, 4000), st.sampled_from(SUPPORTED_SFS), st.integers(0, 2**31))
def test_round_trip_property(n, sf, seed):
    rng = np.random.default_rng(seed)
    cfg = SfiStftConfig()
    x = AudioBuffer(rng.uniform(-0.8, 0.8, n), sf)
    y = sfi_istft(sfi_stft(x, cfg), cfg, len(x))
    assert np.abs(y.samples - x.samples).max() <= 1e-6
