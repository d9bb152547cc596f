"""WAV file I/O and the canonical in-memory signal representation.

Only mono RIFF/WAVE files are handled: PCM 16-bit, PCM 24-bit, and IEEE
float-32. Samples live in memory as float64 so that downstream
log-spectral math keeps full precision.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import AudioFormatError, ChannelCountError, EncodingError

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_IEEE_FLOAT = 0x0003
WAVE_FORMAT_EXTENSIBLE = 0xFFFE


@dataclass
class AudioBuffer:
    """A mono signal: float64 samples plus its sampling frequency in Hz.

    Nominal amplitude range is [-1, 1]; values outside are permitted for
    intermediates (e.g. pre-clipping mixtures).
    """

    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError(f"samples must be 1-D, got shape {self.samples.shape}")
        if self.sample_rate_hz <= 0:
            raise ValueError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration_s(self) -> float:
        return len(self) / self.sample_rate_hz

    def replace_samples(self, samples: np.ndarray) -> "AudioBuffer":
        """New buffer with the same sampling frequency."""
        return AudioBuffer(samples=samples, sample_rate_hz=self.sample_rate_hz)


def _read_fmt_chunk(body: bytes) -> tuple[int, int, int, int]:
    """Return (format_code, channels, sample_rate, bits_per_sample)."""
    if len(body) < 16:
        raise AudioFormatError("fmt chunk too short")
    code, channels, rate, _byte_rate, _align, bits = struct.unpack("<HHIIHH", body[:16])
    if code == WAVE_FORMAT_EXTENSIBLE:
        # SubFormat GUID starts with the effective 16-bit format code.
        if len(body) < 40:
            raise AudioFormatError("extensible fmt chunk too short")
        code = struct.unpack("<H", body[24:26])[0]
    return code, channels, rate, bits


def load_wav(path: str | Path) -> AudioBuffer:
    """Load a mono WAV file.

    Integer PCM is scaled to [-1, 1) by 2^(bits-1); float samples pass
    through unchanged. Raises AudioFormatError for malformed containers,
    ChannelCountError for anything but mono, EncodingError for
    unsupported sample encodings.
    """
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise AudioFormatError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(raw):
        chunk_id = raw[pos : pos + 4]
        (chunk_size,) = struct.unpack("<I", raw[pos + 4 : pos + 8])
        body = raw[pos + 8 : pos + 8 + chunk_size]
        if chunk_id == b"fmt ":
            fmt = _read_fmt_chunk(body)
        elif chunk_id == b"data":
            data = body
        # chunks are word-aligned: odd sizes carry one pad byte
        pos += 8 + chunk_size + (chunk_size & 1)

    if fmt is None or data is None:
        raise AudioFormatError(f"{path}: missing fmt or data chunk")
    code, channels, sample_rate, bits = fmt
    if channels != 1:
        raise ChannelCountError(f"{path}: expected 1 channel, found {channels}")
    if sample_rate <= 0:
        raise AudioFormatError(f"{path}: non-positive sample rate")

    if code == WAVE_FORMAT_PCM and bits == 16:
        samples = np.frombuffer(data, dtype="<i2").astype(np.float64) / 2**15
    elif code == WAVE_FORMAT_PCM and bits == 24:
        triplets = np.frombuffer(data[: len(data) - len(data) % 3], dtype=np.uint8)
        triplets = triplets.reshape(-1, 3).astype(np.int32)
        vals = triplets[:, 0] | (triplets[:, 1] << 8) | (triplets[:, 2] << 16)
        vals = np.where(vals & 0x800000, vals - (1 << 24), vals)
        samples = vals.astype(np.float64) / 2**23
    elif code == WAVE_FORMAT_IEEE_FLOAT and bits == 32:
        samples = np.frombuffer(data, dtype="<f4").astype(np.float64)
    else:
        raise EncodingError(f"{path}: unsupported encoding (format {code}, {bits}-bit)")

    return AudioBuffer(samples=samples, sample_rate_hz=int(sample_rate))


def wav_sample_rate(path: str | Path) -> int:
    """Read just the sampling rate from a WAV header."""
    with open(path, "rb") as fh:
        head = fh.read(12)
        if len(head) < 12 or head[:4] != b"RIFF" or head[8:12] != b"WAVE":
            raise AudioFormatError(f"{path}: not a RIFF/WAVE file")
        while True:
            chunk = fh.read(8)
            if len(chunk) < 8:
                raise AudioFormatError(f"{path}: missing fmt chunk")
            chunk_id, size = chunk[:4], struct.unpack("<I", chunk[4:])[0]
            if chunk_id == b"fmt ":
                body = fh.read(size)
                return _read_fmt_chunk(body)[2]
            fh.seek(size + (size & 1), 1)


def _quantize_pcm16(samples: np.ndarray) -> np.ndarray:
    """Round half away from zero to int16, saturating at the integer limits."""
    scaled = samples * 2**15
    rounded = np.sign(scaled) * np.floor(np.abs(scaled) + 0.5)
    return np.clip(rounded, -32768, 32767).astype("<i2")


def save_wav(buffer: AudioBuffer, path: str | Path, encoding: str = "float32") -> None:
    """Write a buffer as mono WAV, either 'pcm16' or 'float32'.

    float32 round-trips samples exactly (at float32 precision); pcm16
    quantizes to within 1/2^15 per sample.
    """
    if encoding == "pcm16":
        payload = _quantize_pcm16(buffer.samples).tobytes()
        fmt_code, bits = WAVE_FORMAT_PCM, 16
    elif encoding == "float32":
        payload = buffer.samples.astype("<f4").tobytes()
        fmt_code, bits = WAVE_FORMAT_IEEE_FLOAT, 32
    else:
        raise ValueError(f"encoding must be 'pcm16' or 'float32', got {encoding!r}")

    sr = buffer.sample_rate_hz
    block_align = bits // 8
    header = b"".join(
        [
            b"RIFF",
            struct.pack("<I", 36 + len(payload)),
            b"WAVE",
            b"fmt ",
            struct.pack("<IHHIIHH", 16, fmt_code, 1, sr, sr * block_align, block_align, bits),
            b"data",
            struct.pack("<I", len(payload)),
        ]
    )
    Path(path).write_bytes(header + payload)
