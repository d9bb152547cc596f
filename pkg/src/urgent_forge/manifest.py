"""Deterministic simulation manifests and their parallel execution.

A manifest pins every random choice for every utterance up front, so
the actual rendering can run with any number of workers, in any order,
on any machine, and still produce byte-identical output trees. Entry
randomness comes from a counter-based generator keyed by
(master_seed, entry_index): no shared stream, no order dependence.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional, Sequence

import numpy as np
from numpy.random import Generator, Philox

from .audio_io import AudioBuffer, load_wav, save_wav, wav_sample_rate
from .bandwidth import best_matching_sf
from .distortion import DegradedPair, DistortionSpec, degrade
from .dsp import SUPPORTED_SFS, resample, round_half_up
from .exceptions import ConfigError

SEED_ENV_VAR = "URGENT_FORGE_SEED"

MANIFEST_FIELDS = (
    "id",
    "speech_path",
    "noise_path",
    "rir_path",
    "snr_db",
    "reverb",
    "kind",
    "cutoff_hz",
    "clip_ratio",
    "output_sf",
    "seed",
    "degraded_out",
    "reference_out",
)


@dataclass
class SimulationConfig:
    """Distribution over distortions for manifest generation."""

    snr_range_db: tuple[float, float] = (-5.0, 20.0)
    reverb_prob: float = 0.5
    allowed_sfs: tuple[int, ...] = SUPPORTED_SFS
    distortion_weights: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    clip_ratio_range: tuple[float, float] = (0.1, 0.9)
    chunk_duration_s: float = 4.0
    master_seed: int = 0

    def __post_init__(self) -> None:
        low, high = self.snr_range_db
        if low > high:
            raise ConfigError(f"snr_range_db low {low} exceeds high {high}")
        if not 0.0 <= self.reverb_prob <= 1.0:
            raise ConfigError("reverb_prob must lie in [0, 1]")
        if abs(sum(self.distortion_weights) - 1.0) > 1e-9 or min(self.distortion_weights) < 0:
            raise ConfigError("distortion_weights must be non-negative and sum to 1")
        if not self.allowed_sfs:
            raise ConfigError("allowed_sfs must be non-empty")
        self.allowed_sfs = tuple(sorted(self.allowed_sfs))
        if not 0.0 < self.clip_ratio_range[0] <= self.clip_ratio_range[1] <= 1.0:
            raise ConfigError("clip_ratio_range must satisfy 0 < low <= high <= 1")
        if not 0 <= self.master_seed < 2**64:
            raise ConfigError("master_seed must be an unsigned 64-bit integer")


@dataclass
class ManifestEntry:
    """One line of a manifest: a complete recipe for one utterance."""

    id: str
    speech_path: str
    noise_path: str
    rir_path: Optional[str]
    snr_db: float
    reverb: bool
    kind: str
    cutoff_hz: Optional[float]
    clip_ratio: Optional[float]
    output_sf: int
    seed: int
    degraded_out: str
    reference_out: str

    def to_json_line(self) -> str:
        record = {name: getattr(self, name) for name in MANIFEST_FIELDS}
        return json.dumps(record, separators=(", ", ": "))

    @classmethod
    def from_json_line(cls, line: str) -> "ManifestEntry":
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed manifest line: {exc}") from exc
        unknown = set(record) - set(MANIFEST_FIELDS)
        if unknown:
            raise ConfigError(f"unknown manifest fields: {sorted(unknown)}")
        missing = set(MANIFEST_FIELDS) - set(record)
        if missing:
            raise ConfigError(f"manifest line missing fields: {sorted(missing)}")
        return cls(**{name: record[name] for name in MANIFEST_FIELDS})


def _entry_rng(master_seed: int, index: int) -> Generator:
    # 2^64 counter blocks per entry: streams never overlap
    return Generator(Philox(key=master_seed, counter=index << 64))


def _output_sf_for(speech_path: str, allowed: tuple[int, ...]) -> int:
    file_sf = wav_sample_rate(speech_path)
    if file_sf in allowed:
        return file_sf
    return best_matching_sf(file_sf / 2, allowed)


def generate_manifest(
    speech_list: Sequence[str],
    noise_list: Sequence[str],
    rir_list: Sequence[str],
    cfg: SimulationConfig,
    count: int,
    output_dir: str | Path = "sim_out",
) -> list[ManifestEntry]:
    """Draw `count` fully-specified entries; byte-identical for identical
    inputs.

    Per entry, the draw order is fixed: speech pick, noise pick, SNR,
    reverb coin, RIR pick (when reverb), distortion kind, kind
    parameter, then the per-entry seed. The output SF is not random: it
    is the speech file's own rate when allowed, else the lowest allowed
    rate covering it. The URGENT_FORGE_SEED environment variable, when
    set, overrides cfg.master_seed.
    """
    if count < 1:
        raise ConfigError("count must be >= 1")
    if not speech_list or not noise_list:
        raise ConfigError("speech and noise lists must be non-empty")
    if cfg.reverb_prob > 0 and not rir_list:
        raise ConfigError("rir list must be non-empty when reverb_prob > 0")
    for path in (*speech_list, *noise_list, *rir_list):
        if not Path(path).exists():
            raise ConfigError(f"source file does not exist: {path}")

    master_seed = cfg.master_seed
    env_seed = os.environ.get(SEED_ENV_VAR)
    if env_seed is not None:
        master_seed = int(env_seed)

    output_dir = Path(output_dir)
    low, high = cfg.snr_range_db
    kinds = ("none", "bandwidth_limitation", "clipping")
    cum_weights = np.cumsum(cfg.distortion_weights)

    entries = []
    for i in range(count):
        rng = _entry_rng(master_seed, i)
        speech_path = speech_list[int(rng.integers(len(speech_list)))]
        noise_path = noise_list[int(rng.integers(len(noise_list)))]
        snr_db = float(rng.uniform(low, high))
        reverb = bool(rng.random() < cfg.reverb_prob)
        rir_path = rir_list[int(rng.integers(len(rir_list)))] if reverb else None

        kind = kinds[int(np.searchsorted(cum_weights, rng.random(), side="right"))]
        output_sf = _output_sf_for(speech_path, cfg.allowed_sfs)

        cutoff_hz = None
        clip_ratio = None
        if kind == "bandwidth_limitation":
            # cutoffs mirror the Nyquists of the allowed rates below output_sf
            options = [sf / 2 for sf in cfg.allowed_sfs if sf < output_sf]
            if options:
                cutoff_hz = options[int(rng.integers(len(options)))]
            else:
                kind = "none"  # already at the lowest allowed rate
        elif kind == "clipping":
            clip_ratio = float(rng.uniform(*cfg.clip_ratio_range))

        # high bits carry the index: seeds stay pairwise distinct for any
        # count up to 2^32
        seed = (i << 32) | int(rng.integers(0, 2**32))
        entry_id = f"{i:06d}"
        entries.append(
            ManifestEntry(
                id=entry_id,
                speech_path=str(speech_path),
                noise_path=str(noise_path),
                rir_path=str(rir_path) if rir_path is not None else None,
                snr_db=snr_db,
                reverb=reverb,
                kind=kind,
                cutoff_hz=cutoff_hz,
                clip_ratio=clip_ratio,
                output_sf=output_sf,
                seed=seed,
                degraded_out=str(output_dir / "degraded" / f"{entry_id}.wav"),
                reference_out=str(output_dir / "reference" / f"{entry_id}.wav"),
            )
        )
    return entries


def save_manifest(entries: Sequence[ManifestEntry], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for entry in entries:
            fh.write(entry.to_json_line() + "\n")


def load_manifest(path: str | Path) -> list[ManifestEntry]:
    entries = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            entries.append(ManifestEntry.from_json_line(line))
    ids = [e.id for e in entries]
    if len(set(ids)) != len(ids):
        raise ConfigError("manifest contains duplicate ids")
    return entries


# --- execution ---------------------------------------------------------------


@dataclass(frozen=True)
class RenderOptions:
    """Runtime choices for rendering entries (not recorded in the
    manifest; pass the same options to reproduce the same bytes)."""

    chunk_duration_s: float = 4.0
    early_reflections_s: Optional[float] = None
    vad_gated_snr: bool = False
    reverberate_noise: bool = False


@dataclass
class EntryResult:
    id: str
    ok: bool
    error: Optional[str] = None
    elapsed_s: float = 0.0


@dataclass
class SimulationReport:
    results: list[EntryResult] = field(default_factory=list)

    @property
    def n_ok(self) -> int:
        return sum(r.ok for r in self.results)

    @property
    def n_failed(self) -> int:
        return sum(not r.ok for r in self.results)


def realize_entry(entry: ManifestEntry, options: RenderOptions = RenderOptions()) -> DegradedPair:
    """Render one entry in memory: load, resample, chunk, degrade."""
    rng = Generator(Philox(key=entry.seed))

    speech = resample(load_wav(entry.speech_path), entry.output_sf)
    chunk = round_half_up(options.chunk_duration_s * entry.output_sf)
    if len(speech) > chunk:
        start = int(rng.integers(0, len(speech) - chunk + 1))
        speech = AudioBuffer(speech.samples[start : start + chunk], entry.output_sf)

    noise = load_wav(entry.noise_path)
    noise_offset_s = float(rng.uniform(0.0, max(noise.duration_s, 1e-9)))
    rir = load_wav(entry.rir_path) if entry.rir_path else None

    spec = DistortionSpec(
        kind=entry.kind,
        snr_db=entry.snr_db,
        cutoff_hz=entry.cutoff_hz,
        clip_ratio=entry.clip_ratio,
        rir_path=entry.rir_path,
        noise_path=entry.noise_path,
        noise_offset_s=noise_offset_s,
        seed=entry.seed,
    )
    return degrade(
        speech,
        spec,
        rir,
        noise,
        early_reflections_s=options.early_reflections_s,
        vad_gated_snr=options.vad_gated_snr,
        reverberate_noise=options.reverberate_noise,
    )


def simulate_entry(entry: ManifestEntry, options: RenderOptions = RenderOptions()) -> EntryResult:
    """Render one entry to its output files; failures become data."""
    t0 = time.perf_counter()
    try:
        pair = realize_entry(entry, options)
        for out_path, buf in ((entry.degraded_out, pair.degraded), (entry.reference_out, pair.reference)):
            Path(out_path).parent.mkdir(parents=True, exist_ok=True)
            save_wav(buf, out_path, encoding="float32")
        return EntryResult(entry.id, True, None, time.perf_counter() - t0)
    except Exception as exc:  # noqa: BLE001 - per-entry isolation is the contract
        detail = f"{type(exc).__name__}: {exc}"
        return EntryResult(entry.id, False, detail, time.perf_counter() - t0)


def _simulate_worker(args: tuple[ManifestEntry, RenderOptions]) -> EntryResult:
    return simulate_entry(*args)


def run_manifest(
    entries: Sequence[ManifestEntry],
    workers: int = 1,
    options: RenderOptions = RenderOptions(),
) -> SimulationReport:
    """Attempt every entry; outputs are independent of worker count and
    scheduling order. The report is ordered by id."""
    if workers < 1:
        raise ConfigError("workers must be >= 1")
    if workers == 1 or len(entries) <= 1:
        results = [simulate_entry(e, options) for e in entries]
    else:
        jobs = [(e, options) for e in entries]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_simulate_worker, jobs))
    return SimulationReport(results=sorted(results, key=lambda r: r.id))


def iter_dynamic_pairs(
    speech_list: Sequence[str],
    noise_list: Sequence[str],
    rir_list: Sequence[str],
    cfg: SimulationConfig,
    epoch_seed: int,
    count: int,
) -> Iterator[DegradedPair]:
    """On-the-fly mixing for training loops: a deterministic stream of
    DegradedPairs keyed by (cfg, epoch_seed), never touching disk."""
    epoch_cfg = SimulationConfig(
        snr_range_db=cfg.snr_range_db,
        reverb_prob=cfg.reverb_prob,
        allowed_sfs=cfg.allowed_sfs,
        distortion_weights=cfg.distortion_weights,
        clip_ratio_range=cfg.clip_ratio_range,
        chunk_duration_s=cfg.chunk_duration_s,
        master_seed=epoch_seed,
    )
    options = RenderOptions(chunk_duration_s=cfg.chunk_duration_s)
    for entry in generate_manifest(speech_list, noise_list, rir_list, epoch_cfg, count):
        yield realize_entry(entry, options)
