"""Signal-level objective metrics and batch evaluation.

Implemented here: SDR (plain energy ratio), ESTOI, MCD, LSD, and the
time+frequency multi-resolution L1 loss. Learned metrics (MOS
predictors, ASR-based scores, ...) are out of scope; their externally
computed values can be merged into reports but are never produced here.

Directions: higher is better for SDR and ESTOI, lower is better for
MCD, LSD, and the loss.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.fft import dct

from .audio_io import AudioBuffer, load_wav
from .dsp import resample, round_half_up, stft
from .exceptions import ShortSignalError, SilentSignalError

LOG_EPS = 1e-10
SDR_CAP_DB = 60.0

METRIC_DIRECTIONS = {
    "sdr_db": "higher",
    "estoi": "higher",
    "mcd_db": "lower",
    "lsd_db": "lower",
    "multires_l1": "lower",
}

VARIANT_NOTES = {
    "sdr_db": "plain energy ratio, no allowed-distortion filter, capped at +60 dB",
    "estoi": "10 kHz, 15 one-third-octave bands from 150 Hz, 30-frame segments",
    "mcd_db": "13 cepstra excluding c0, 80-band mel filterbank, no DTW",
    "lsd_db": "2048/512 STFT (1024/256 below 32 kHz), eps 1e-10",
    "multires_l1": "time L1 + mean magnitude L1 over windows {256,512,768,1024}",
}


def _match_lengths(reference: AudioBuffer, estimate: AudioBuffer) -> tuple[np.ndarray, np.ndarray]:
    ref, est = reference.samples, estimate.samples
    if len(ref) != len(est):
        warnings.warn(
            f"length mismatch ({len(ref)} vs {len(est)}): zero-padding the shorter signal",
            stacklevel=3,
        )
        n = max(len(ref), len(est))
        ref = np.pad(ref, (0, n - len(ref)))
        est = np.pad(est, (0, n - len(est)))
    return ref, est


def sdr(reference: AudioBuffer, estimate: AudioBuffer) -> float:
    """Signal-to-distortion ratio: 10*log10(||ref||^2 / ||ref - est||^2),
    capped at +60 dB for vanishing residuals."""
    if reference.sample_rate_hz != estimate.sample_rate_hz:
        raise ValueError("reference and estimate must share a sampling rate")
    ref, est = _match_lengths(reference, estimate)
    ref_energy = float(np.sum(ref**2))
    if ref_energy <= 0.0:
        raise SilentSignalError("SDR is undefined for a silent reference")
    residual = float(np.sum((ref - est) ** 2))
    ratio = ref_energy / max(residual, 1e-12 * ref_energy)
    return min(10.0 * np.log10(ratio), SDR_CAP_DB)


# --- ESTOI -------------------------------------------------------------------

_ESTOI_FS = 10000
_ESTOI_FRAME = 256
_ESTOI_HOP = 128
_ESTOI_NFFT = 512
_ESTOI_BANDS = 15
_ESTOI_FIRST_CF = 150.0
_ESTOI_SEG = 30
_ESTOI_DYN_RANGE_DB = 40.0
_EPS = 1e-15


def _third_octave_matrix() -> np.ndarray:
    freqs = np.linspace(0, _ESTOI_FS / 2, _ESTOI_NFFT // 2 + 1)
    k = np.arange(_ESTOI_BANDS)
    cf = _ESTOI_FIRST_CF * 2 ** (k / 3)
    lo = cf * 2 ** (-1 / 6)
    hi = cf * 2 ** (1 / 6)
    h = np.zeros((_ESTOI_BANDS, len(freqs)))
    for b in range(_ESTOI_BANDS):
        lo_bin = int(np.argmin((freqs - lo[b]) ** 2))
        hi_bin = int(np.argmin((freqs - hi[b]) ** 2))
        h[b, lo_bin:hi_bin] = 1.0
    return h


def _frames(x: np.ndarray, frame: int, hop: int) -> np.ndarray:
    n = 1 + (len(x) - frame) // hop
    idx = np.arange(frame)[None, :] + hop * np.arange(n)[:, None]
    return x[idx]


def _normalize_rows_then_cols(seg: np.ndarray) -> np.ndarray:
    seg = seg - seg.mean(axis=1, keepdims=True)
    seg = seg / (np.linalg.norm(seg, axis=1, keepdims=True) + _EPS)
    seg = seg - seg.mean(axis=0, keepdims=True)
    return seg / (np.linalg.norm(seg, axis=0, keepdims=True) + _EPS)


def estoi(reference: AudioBuffer, estimate: AudioBuffer) -> float:
    """Extended short-time objective intelligibility in [-1, 1].

    Both signals are resampled to 10 kHz and framed with 25.6 ms hann
    windows at 50% overlap; frames more than 40 dB below the loudest
    reference frame are dropped. One-third-octave band energies are
    grouped into 30-frame segments whose band-rows and frame-columns are
    mean/norm normalized; the score is the mean over segments of the
    normalized inner products divided by the segment length.
    """
    if reference.sample_rate_hz != estimate.sample_rate_hz:
        raise ValueError("reference and estimate must share a sampling rate")
    ref = resample(reference, _ESTOI_FS).samples
    est = resample(estimate, _ESTOI_FS).samples
    n = min(len(ref), len(est))
    ref, est = ref[:n], est[:n]
    if n < _ESTOI_FRAME:
        raise ShortSignalError("signal shorter than one analysis frame")

    window = np.hanning(_ESTOI_FRAME + 2)[1:-1]
    ref_frames = _frames(ref, _ESTOI_FRAME, _ESTOI_HOP) * window
    est_frames = _frames(est, _ESTOI_FRAME, _ESTOI_HOP) * window

    energies_db = 20 * np.log10(np.linalg.norm(ref_frames, axis=1) + _EPS)
    keep = energies_db > energies_db.max() - _ESTOI_DYN_RANGE_DB
    ref_frames, est_frames = ref_frames[keep], est_frames[keep]
    if ref_frames.shape[0] < _ESTOI_SEG:
        raise ShortSignalError(
            f"need at least {_ESTOI_SEG} frames after silence trimming, got {ref_frames.shape[0]}"
        )

    h = _third_octave_matrix()
    ref_bands = np.sqrt(h @ (np.abs(np.fft.rfft(ref_frames, _ESTOI_NFFT, axis=1)) ** 2).T)
    est_bands = np.sqrt(h @ (np.abs(np.fft.rfft(est_frames, _ESTOI_NFFT, axis=1)) ** 2).T)

    scores = []
    for m in range(_ESTOI_SEG, ref_bands.shape[1] + 1):
        x_seg = _normalize_rows_then_cols(ref_bands[:, m - _ESTOI_SEG : m])
        y_seg = _normalize_rows_then_cols(est_bands[:, m - _ESTOI_SEG : m])
        scores.append(float(np.sum(x_seg * y_seg)) / _ESTOI_SEG)
    return float(np.mean(scores))


# --- MCD ---------------------------------------------------------------------

_MCD_FRAME_S = 0.025
_MCD_HOP_S = 0.010
_MCD_N_MELS = 80
_MCD_N_CEPS = 13  # c1..c13, c0 excluded


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)


def _mel_filterbank(n_mels: int, n_fft: int, sf: int) -> np.ndarray:
    """Triangular filters, equally spaced on the mel scale up to Nyquist."""
    mel_pts = np.linspace(0.0, _hz_to_mel(sf / 2), n_mels + 2)
    hz_pts = _mel_to_hz(mel_pts)
    bins = np.fft.rfftfreq(n_fft, 1 / sf)
    bank = np.zeros((n_mels, len(bins)))
    for m in range(n_mels):
        left, center, right = hz_pts[m], hz_pts[m + 1], hz_pts[m + 2]
        up = (bins - left) / max(center - left, 1e-12)
        down = (right - bins) / max(right - center, 1e-12)
        bank[m] = np.clip(np.minimum(up, down), 0.0, None)
    return bank


def _mel_cepstra(samples: np.ndarray, sf: int) -> np.ndarray:
    frame = round_half_up(_MCD_FRAME_S * sf)
    hop = round_half_up(_MCD_HOP_S * sf)
    if len(samples) < frame:
        raise ShortSignalError("signal shorter than one MCD analysis frame")
    n_fft = 1 << int(np.ceil(np.log2(frame)))
    window = np.hanning(frame)
    frames = _frames(samples, frame, hop) * window
    power = np.abs(np.fft.rfft(frames, n_fft, axis=1)) ** 2
    mel_energy = power @ _mel_filterbank(_MCD_N_MELS, n_fft, sf).T
    # floor (not add) eps so a pure gain shift cancels exactly in c1..c13
    log_mel = np.log(np.maximum(mel_energy, LOG_EPS))
    return dct(log_mel, type=2, norm="ortho", axis=1)


def mcd(reference: AudioBuffer, estimate: AudioBuffer) -> float:
    """Mel cepstral distortion in dB over c1..c13 (gain-invariant: the
    c0 term that carries overall level is excluded). Signals are assumed
    time-aligned; no dynamic time warping is applied."""
    if reference.sample_rate_hz != estimate.sample_rate_hz:
        raise ValueError("reference and estimate must share a sampling rate")
    ref, est = _match_lengths(reference, estimate)
    sf = reference.sample_rate_hz
    c_ref = _mel_cepstra(ref, sf)[:, 1 : _MCD_N_CEPS + 1]
    c_est = _mel_cepstra(est, sf)[:, 1 : _MCD_N_CEPS + 1]
    dist = np.sqrt(2.0 * np.sum((c_ref - c_est) ** 2, axis=1))
    return float(np.mean(10.0 / np.log(10.0) * dist))


# --- LSD ---------------------------------------------------------------------


def lsd(reference: AudioBuffer, estimate: AudioBuffer) -> float:
    """Log-spectral distance in dB: per frame the RMS over bins of
    10*log10 power ratios (eps-floored), averaged over frames."""
    if reference.sample_rate_hz != estimate.sample_rate_hz:
        raise ValueError("reference and estimate must share a sampling rate")
    ref, est = _match_lengths(reference, estimate)
    sf = reference.sample_rate_hz
    n_fft, hop = (2048, 512) if sf >= 32000 else (1024, 256)
    p_ref = np.abs(stft(ref, sf, n_fft, hop).frames) ** 2
    p_est = np.abs(stft(est, sf, n_fft, hop).frames) ** 2
    ratio_db = 10.0 * np.log10((p_ref + LOG_EPS) / (p_est + LOG_EPS))
    return float(np.mean(np.sqrt(np.mean(ratio_db**2, axis=1))))


# --- multi-resolution L1 loss --------------------------------------------------

MULTIRES_WINDOWS = (256, 512, 768, 1024)


def multires_l1_loss(reference: AudioBuffer, estimate: AudioBuffer) -> float:
    """Time-domain L1 plus the mean magnitude-spectrogram L1 over four
    STFT resolutions (hann, hop = window/2). Phase-blind in the
    frequency terms."""
    if reference.sample_rate_hz != estimate.sample_rate_hz:
        raise ValueError("reference and estimate must share a sampling rate")
    ref, est = _match_lengths(reference, estimate)
    sf = reference.sample_rate_hz
    loss = float(np.mean(np.abs(ref - est)))
    for win in MULTIRES_WINDOWS:
        mag_ref = np.abs(stft(ref, sf, win, win // 2).frames)
        mag_est = np.abs(stft(est, sf, win, win // 2).frames)
        loss += float(np.mean(np.abs(mag_ref - mag_est))) / len(MULTIRES_WINDOWS)
    return loss


# --- batch evaluation ----------------------------------------------------------

_METRIC_FNS: dict[str, Callable[[AudioBuffer, AudioBuffer], float]] = {
    "sdr_db": sdr,
    "estoi": estoi,
    "mcd_db": mcd,
    "lsd_db": lsd,
    "multires_l1": multires_l1_loss,
}


@dataclass
class MetricReport:
    per_file: dict[str, dict[str, Optional[float]]] = field(default_factory=dict)
    failures: dict[str, dict[str, str]] = field(default_factory=dict)
    directions: dict[str, str] = field(default_factory=lambda: dict(METRIC_DIRECTIONS))
    variants: dict[str, str] = field(default_factory=lambda: dict(VARIANT_NOTES))
    durations_s: dict[str, float] = field(default_factory=dict)
    duration_weighted: bool = False

    @property
    def aggregate(self) -> dict[str, Optional[float]]:
        """Per-metric mean over successful files; unweighted unless the
        report was built with duration weighting."""
        out: dict[str, Optional[float]] = {}
        for name in self.directions:
            pairs = [
                (m[name], self.durations_s.get(fid, 1.0) if self.duration_weighted else 1.0)
                for fid, m in self.per_file.items()
                if m.get(name) is not None
            ]
            if pairs:
                values, weights = zip(*pairs)
                out[name] = float(np.average(values, weights=weights))
            else:
                out[name] = None
        return out

    @property
    def n_files(self) -> int:
        return len(self.per_file)

    def merge_external_scores(self, name: str, values: dict[str, float], direction: str = "higher") -> list[str]:
        """Attach externally computed per-file scores (e.g. MOS
        predictions) as an extra column; returns ids that matched no
        file in the report."""
        if direction not in ("higher", "lower"):
            raise ValueError("direction must be 'higher' or 'lower'")
        self.directions[name] = direction
        self.variants.setdefault(name, "externally computed, merged")
        unmatched = []
        for file_id, value in values.items():
            if file_id in self.per_file:
                self.per_file[file_id][name] = value
            else:
                unmatched.append(file_id)
        for scores in self.per_file.values():
            scores.setdefault(name, None)
        return unmatched

    def to_dict(self) -> dict:
        return {
            "per_file": self.per_file,
            "aggregate": self.aggregate,
            "n_files": self.n_files,
            "duration_weighted": self.duration_weighted,
            "failures": self.failures,
            "directions": self.directions,
            "variants": self.variants,
        }

    def render_table(self) -> str:
        """Aligned table with direction markers, one row per file plus
        the aggregate."""
        arrows = {"higher": "↑", "lower": "↓"}
        names = list(self.directions)
        headers = ["id"] + [f"{n}{arrows[self.directions[n]]}" for n in names]
        rows = []
        for file_id, values in self.per_file.items():
            row = [file_id]
            for n in names:
                v = values.get(n)
                row.append("failed" if v is None else f"{v:.4f}")
            rows.append(row)
        agg = self.aggregate
        rows.append(["MEAN"] + [("-" if agg[n] is None else f"{agg[n]:.4f}") for n in names])
        widths = [max(len(r[i]) for r in [headers] + rows) for i in range(len(headers))]
        lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
        lines += ["  ".join(c.ljust(w) for c, w in zip(r, widths)) for r in rows]
        return "\n".join(lines)


def evaluate_pair(reference: AudioBuffer, estimate: AudioBuffer) -> tuple[dict, dict]:
    """All metrics for one aligned pair; per-metric failures are recorded
    rather than raised."""
    values: dict[str, Optional[float]] = {}
    errors: dict[str, str] = {}
    for name, fn in _METRIC_FNS.items():
        try:
            values[name] = fn(reference, estimate)
        except Exception as exc:  # noqa: BLE001 - failures become report data
            values[name] = None
            errors[name] = f"{type(exc).__name__}: {exc}"
    return values, errors


def evaluate_pairlist(
    pairs: Sequence[tuple[str, str]],
    strict_sf: bool = False,
    duration_weighted: bool = False,
) -> MetricReport:
    """Evaluate (reference path, estimate path) pairs.

    Estimates at a different rate are resampled to the reference rate
    unless strict_sf is set, in which case the pair fails. Per-pair and
    per-metric failures never abort the batch. Aggregates are plain
    means unless duration_weighted (reference durations as weights).
    """
    report = MetricReport(duration_weighted=duration_weighted)
    seen: dict[str, int] = {}
    for ref_path, est_path in pairs:
        file_id = est_path
        if file_id in seen:
            seen[file_id] += 1
            file_id = f"{est_path}#{seen[est_path]}"
        else:
            seen[file_id] = 0
        try:
            reference = load_wav(ref_path)
            estimate = load_wav(est_path)
            if estimate.sample_rate_hz != reference.sample_rate_hz:
                if strict_sf:
                    raise ValueError(
                        f"sampling rates differ ({reference.sample_rate_hz} vs "
                        f"{estimate.sample_rate_hz}) and strict_sf is set"
                    )
                estimate = resample(estimate, reference.sample_rate_hz)
        except Exception as exc:  # noqa: BLE001
            report.per_file[file_id] = {name: None for name in METRIC_DIRECTIONS}
            report.failures[file_id] = {"load": f"{type(exc).__name__}: {exc}"}
            continue
        values, errors = evaluate_pair(reference, estimate)
        report.per_file[file_id] = values
        report.durations_s[file_id] = reference.duration_s
        if errors:
            report.failures[file_id] = errors
    return report


def sfi_wrapper_eval(
    enhance: Callable[[AudioBuffer], AudioBuffer], degraded: AudioBuffer
) -> AudioBuffer:
    """Run a 48 kHz-only enhancement function on audio at any rate:
    upsample to 48 kHz, enhance, downsample back, match length."""
    original_sf = degraded.sample_rate_hz
    if original_sf == 48000:
        enhanced = enhance(degraded)
    else:
        enhanced = resample(enhance(resample(degraded, 48000)), original_sf)
    out = enhanced.samples
    if len(out) < len(degraded):
        out = np.pad(out, (0, len(degraded) - len(out)))
    return AudioBuffer(out[: len(degraded)], original_sf)
