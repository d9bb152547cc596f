"""Command-line interface: one executable, five pipeline stages.

Subcommands mirror the pipeline: bandwidth -> filter -> manifest ->
simulate -> evaluate. Configuration precedence is flag > environment >
config file > default; the effective configuration is echoed into the
output directory as `config.resolved` and can be fed back via --config
to reproduce a run.

Exit codes: 0 success, 1 partial per-entry failures, 2 configuration
error.
"""

from __future__ import annotations

import json
import os
import sys
from dataclasses import asdict
from pathlib import Path

import click

from . import MANIFEST_FORMAT_VERSION, __version__
from .audio_io import load_wav
from .bandwidth import best_matching_sf, estimate_effective_bandwidth
from .corpus_filter import (
    FilterPolicy,
    filter_corpus,
    read_score_tsv,
    speech_activity_ratio,
    write_partition_tsvs,
)
from .exceptions import ConfigError, SilentSignalError, UrgentForgeError
from .manifest import (
    SEED_ENV_VAR,
    RenderOptions,
    SimulationConfig,
    generate_manifest,
    load_manifest,
    run_manifest,
    save_manifest,
)
from .metrics import evaluate_pairlist

_META_KEYS = {"command", "tool_version", "manifest_format_version"}


def _load_config_file(path: str | None, allowed_keys: set[str]) -> dict:
    if path is None:
        return {}
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    unknown = set(raw) - allowed_keys - _META_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys in {path}: {sorted(unknown)}")
    return {k: v for k, v in raw.items() if k not in _META_KEYS}


def _pick(flag_value, file_cfg: dict, key: str, default=None, required=False):
    """flag > config file > default."""
    if flag_value is not None:
        return flag_value
    if key in file_cfg and file_cfg[key] is not None:
        return file_cfg[key]
    if required:
        raise ConfigError(f"missing required setting: {key}")
    return default


def _write_resolved(out_dir: Path, command: str, effective: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {
        "command": command,
        "tool_version": __version__,
        "manifest_format_version": MANIFEST_FORMAT_VERSION,
        **effective,
    }
    (out_dir / "config.resolved").write_text(json.dumps(payload, indent=2) + "\n")


def _fail_config(exc: Exception) -> None:
    click.echo(f"configuration error: {exc}", err=True)
    sys.exit(2)


def _print_version(ctx, _param, value):
    if not value or ctx.resilient_parsing:
        return
    click.echo(f"urgent-forge {__version__} (manifest format {MANIFEST_FORMAT_VERSION})")
    ctx.exit(0)


@click.group()
@click.option("--version", is_flag=True, callback=_print_version, expose_value=False, is_eager=True,
              help="Print tool and manifest format versions.")
def main() -> None:
    """Speech degradation simulation and objective evaluation toolkit."""


# --- bandwidth -----------------------------------------------------------------

_BW_KEYS = {"threshold_db", "hysteresis_bins", "loudest_fraction", "paths", "list_file", "out"}


@main.command("bandwidth")
@click.argument("paths", nargs=-1, type=click.Path())
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--list-file", type=click.Path(exists=True), default=None,
              help="File with one audio path per line (appended to PATHS).")
@click.option("--threshold-db", type=float, default=None,
              help="Roll-off threshold relative to the spectral peak [default: -50].")
@click.option("--hysteresis-bins", type=int, default=None,
              help="Consecutive in-band bins required to stop the scan [default: 3].")
@click.option("--loudest-fraction", type=float, default=None,
              help="Fraction of loudest frames averaged into the spectrum [default: 0.5].")
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="Write the TSV here instead of stdout.")
def cmd_bandwidth(paths, config_path, list_file, threshold_db, hysteresis_bins,
                  loudest_fraction, out_path):
    """Estimate effective bandwidth per file: path, bw_hz, chosen SF."""
    try:
        file_cfg = _load_config_file(config_path, _BW_KEYS)
        threshold_db = _pick(threshold_db, file_cfg, "threshold_db", default=-50.0)
        hysteresis_bins = _pick(hysteresis_bins, file_cfg, "hysteresis_bins", default=3)
        loudest_fraction = _pick(loudest_fraction, file_cfg, "loudest_fraction", default=0.5)
        list_file = _pick(list_file, file_cfg, "list_file")
        out_path = _pick(out_path, file_cfg, "out")
        all_paths = list(paths) or list(file_cfg.get("paths", []))
    except ConfigError as exc:
        _fail_config(exc)
    if list_file:
        all_paths += [p for p in Path(list_file).read_text().splitlines() if p.strip()]

    rows = []
    failures = 0
    for path in all_paths:
        try:
            est = estimate_effective_bandwidth(
                load_wav(path), threshold_db, hysteresis_bins, loudest_fraction
            )
            rows.append(f"{path}\t{est.effective_bw_hz:.1f}\t{best_matching_sf(est.effective_bw_hz)}")
        except (UrgentForgeError, OSError, ValueError) as exc:
            kind = "silence" if isinstance(exc, SilentSignalError) else type(exc).__name__
            rows.append(f"{path}\tERROR\t{kind}")
            failures += 1

    text = "".join(r + "\n" for r in rows)
    if out_path:
        Path(out_path).write_text(text)
        _write_resolved(Path(out_path).parent, "bandwidth",
                        {"threshold_db": threshold_db, "hysteresis_bins": hysteresis_bins,
                         "loudest_fraction": loudest_fraction, "paths": all_paths,
                         "list_file": None, "out": str(out_path)})
    else:
        click.echo(text, nl=False)
    sys.exit(1 if failures else 0)


# --- filter --------------------------------------------------------------------

_FILTER_KEYS = {"min_speech_ratio", "min_ovrl", "min_sig", "min_bak",
                "vad_gate_dbfs", "vad_margin_db", "scores", "kept", "rejected"}


@main.command("filter")
@click.option("--scores", "scores_path", type=click.Path(), default=None,
              help="TSV of path, ovrl, sig, bak.")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--min-speech-ratio", type=float, default=None)
@click.option("--min-ovrl", type=float, default=None)
@click.option("--min-sig", type=float, default=None)
@click.option("--min-bak", type=float, default=None)
@click.option("--vad-gate-dbfs", type=float, default=None,
              help="Absolute activity gate [default: -60].")
@click.option("--vad-margin-db", type=float, default=None,
              help="Margin above the noise floor for frame activity [default: 10].")
@click.option("--kept", "kept_path", type=click.Path(), default=None)
@click.option("--rejected", "rejected_path", type=click.Path(), default=None)
def cmd_filter(scores_path, config_path, min_speech_ratio, min_ovrl, min_sig, min_bak,
               vad_gate_dbfs, vad_margin_db, kept_path, rejected_path):
    """Partition a score TSV into kept and rejected (with reasons)."""
    try:
        file_cfg = _load_config_file(config_path, _FILTER_KEYS)
        policy = FilterPolicy(
            min_speech_ratio=_pick(min_speech_ratio, file_cfg, "min_speech_ratio", 0.0),
            min_ovrl=_pick(min_ovrl, file_cfg, "min_ovrl", 0.0),
            min_sig=_pick(min_sig, file_cfg, "min_sig", 0.0),
            min_bak=_pick(min_bak, file_cfg, "min_bak", 0.0),
        )
        vad_gate_dbfs = _pick(vad_gate_dbfs, file_cfg, "vad_gate_dbfs", default=-60.0)
        vad_margin_db = _pick(vad_margin_db, file_cfg, "vad_margin_db", default=10.0)
        scores_path = _pick(scores_path, file_cfg, "scores", required=True)
        kept_path = _pick(kept_path, file_cfg, "kept", required=True)
        rejected_path = _pick(rejected_path, file_cfg, "rejected", required=True)
    except (ConfigError, ValueError) as exc:
        _fail_config(exc)

    records = read_score_tsv(scores_path)
    ratios = {}
    if policy.min_speech_ratio > 0:
        for rec in records:
            ratios[rec.path] = speech_activity_ratio(
                load_wav(rec.path), vad_gate_dbfs, vad_margin_db
            )

    try:
        kept, rejected = filter_corpus(records, ratios, policy)
    except UrgentForgeError as exc:
        _fail_config(exc)
    write_partition_tsvs(kept, rejected, kept_path, rejected_path)
    _write_resolved(Path(kept_path).parent, "filter",
                    {"min_speech_ratio": policy.min_speech_ratio, "min_ovrl": policy.min_ovrl,
                     "min_sig": policy.min_sig, "min_bak": policy.min_bak,
                     "vad_gate_dbfs": vad_gate_dbfs, "vad_margin_db": vad_margin_db,
                     "scores": str(scores_path), "kept": str(kept_path),
                     "rejected": str(rejected_path)})
    click.echo(f"kept {len(kept)}, rejected {len(rejected)}")


# --- manifest ------------------------------------------------------------------

_MANIFEST_KEYS = {"snr_range_db", "reverb_prob", "allowed_sfs", "distortion_weights",
                  "clip_ratio_range", "chunk_duration_s", "master_seed",
                  "count", "speech_list", "noise_list", "rir_list", "out"}


@main.command("manifest")
@click.option("--speech-list", type=click.Path(), default=None)
@click.option("--noise-list", type=click.Path(), default=None)
@click.option("--rir-list", type=click.Path(), default=None)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--count", type=int, default=None)
@click.option("--seed", type=int, default=None, help="Master seed (overrides env and config file).")
@click.option("--reverb-prob", type=float, default=None)
@click.option("--out", "out_path", type=click.Path(), default=None)
def cmd_manifest(speech_list, noise_list, rir_list, config_path, count, seed, reverb_prob, out_path):
    """Generate a deterministic simulation manifest (JSON lines)."""
    def read_list(p):
        return [line for line in Path(p).read_text().splitlines() if line.strip()]

    try:
        file_cfg = _load_config_file(config_path, _MANIFEST_KEYS)
        cfg_kwargs = {k: file_cfg[k] for k in
                      ("snr_range_db", "reverb_prob", "allowed_sfs", "distortion_weights",
                       "clip_ratio_range", "chunk_duration_s", "master_seed") if k in file_cfg}
        for key in ("snr_range_db", "allowed_sfs", "distortion_weights", "clip_ratio_range"):
            if key in cfg_kwargs:
                cfg_kwargs[key] = tuple(cfg_kwargs[key])
        cfg = SimulationConfig(**cfg_kwargs)
        if os.environ.get(SEED_ENV_VAR) is not None:
            cfg.master_seed = int(os.environ[SEED_ENV_VAR])
        if seed is not None:
            cfg.master_seed = seed
        if reverb_prob is not None:
            cfg.reverb_prob = reverb_prob

        speech_list = _pick(speech_list, file_cfg, "speech_list", required=True)
        noise_list = _pick(noise_list, file_cfg, "noise_list", required=True)
        rir_list = _pick(rir_list, file_cfg, "rir_list")
        count = _pick(count, file_cfg, "count", required=True)
        out_path = _pick(out_path, file_cfg, "out", required=True)

        entries = generate_manifest(
            read_list(speech_list), read_list(noise_list),
            read_list(rir_list) if rir_list else [],
            cfg, count, output_dir="",
        )
    except (ConfigError, ValueError, OSError) as exc:
        _fail_config(exc)
    save_manifest(entries, out_path)
    _write_resolved(Path(out_path).parent, "manifest",
                    {**asdict(cfg), "count": count,
                     "speech_list": str(speech_list), "noise_list": str(noise_list),
                     "rir_list": str(rir_list) if rir_list else None, "out": str(out_path)})
    click.echo(f"wrote {len(entries)} entries to {out_path}")


# --- simulate --------------------------------------------------------------------

_SIMULATE_KEYS = {"manifest", "workers", "chunk_duration_s", "early_reflections_ms",
                  "snr_vad_gated", "reverberate_noise", "out"}


@main.command("simulate")
@click.option("--manifest", "manifest_path", type=click.Path(), default=None)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--workers", type=int, default=None, help="Worker processes [default: 1].")
@click.option("--out", "out_dir", type=click.Path(), default=None,
              help="Directory the manifest's relative output paths resolve against [default: .].")
@click.option("--chunk-duration", type=float, default=None, help="Chunk length in seconds [default: 4].")
@click.option("--early-reflections", "early_ms", type=float, default=None,
              help="Keep this many ms of reflections after the direct path in the "
                   "dereverberation reference (default: fully dry reference).")
@click.option("--snr-vad-gated", is_flag=True, default=None,
              help="Measure mixing powers over VAD-active samples instead of the full signal.")
@click.option("--reverberate-noise", is_flag=True, default=None,
              help="Convolve the noise with the RIR too instead of adding it dry.")
def cmd_simulate(manifest_path, config_path, workers, out_dir, chunk_duration, early_ms,
                 snr_vad_gated, reverberate_noise):
    """Render a manifest to WAV pairs, in parallel, reproducibly."""
    try:
        file_cfg = _load_config_file(config_path, _SIMULATE_KEYS)
        manifest_path = _pick(manifest_path, file_cfg, "manifest", required=True)
        workers = _pick(workers, file_cfg, "workers", default=1)
        out_dir = _pick(out_dir, file_cfg, "out", default=".")
        early_ms = _pick(early_ms, file_cfg, "early_reflections_ms")
        options = RenderOptions(
            chunk_duration_s=_pick(chunk_duration, file_cfg, "chunk_duration_s", default=4.0),
            early_reflections_s=None if early_ms is None else early_ms / 1000.0,
            vad_gated_snr=bool(_pick(snr_vad_gated, file_cfg, "snr_vad_gated", default=False)),
            reverberate_noise=bool(_pick(reverberate_noise, file_cfg, "reverberate_noise", default=False)),
        )
        if workers < 1:
            raise ConfigError("workers must be >= 1")
        entries = load_manifest(manifest_path)
    except (ConfigError, ValueError, OSError) as exc:
        _fail_config(exc)

    out = Path(out_dir)
    for entry in entries:
        entry.degraded_out = str(out / entry.degraded_out)
        entry.reference_out = str(out / entry.reference_out)

    report = run_manifest(entries, workers=workers, options=options)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "report.tsv", "w") as fh:
        fh.write("id\tstatus\telapsed_s\terror\n")
        for r in report.results:
            fh.write(f"{r.id}\t{'ok' if r.ok else 'failed'}\t{r.elapsed_s:.3f}\t{r.error or '-'}\n")
    _write_resolved(out, "simulate",
                    {"manifest": str(manifest_path), "workers": workers,
                     "chunk_duration_s": options.chunk_duration_s,
                     "early_reflections_ms": early_ms,
                     "snr_vad_gated": options.vad_gated_snr,
                     "reverberate_noise": options.reverberate_noise,
                     "out": str(out_dir)})
    click.echo(f"{report.n_ok} ok, {report.n_failed} failed")
    sys.exit(1 if report.n_failed else 0)


# --- evaluate --------------------------------------------------------------------

_EVALUATE_KEYS = {"pairs", "strict_sf", "duration_weighted", "out"}


@main.command("evaluate")
@click.option("--pairs", "pairs_path", type=click.Path(), default=None,
              help="TSV of reference path, estimate path.")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--out", "out_dir", type=click.Path(), default=None)
@click.option("--strict-sf", is_flag=True, default=None,
              help="Error on SF mismatch instead of resampling.")
@click.option("--duration-weighted", is_flag=True, default=None,
              help="Weight aggregates by reference duration instead of per-file means.")
def cmd_evaluate(pairs_path, config_path, out_dir, strict_sf, duration_weighted):
    """Compute SDR/ESTOI/MCD/LSD/loss per pair plus aggregates."""
    try:
        file_cfg = _load_config_file(config_path, _EVALUATE_KEYS)
        pairs_path = _pick(pairs_path, file_cfg, "pairs", required=True)
        out_dir = _pick(out_dir, file_cfg, "out", required=True)
        strict_sf = bool(_pick(strict_sf or None, file_cfg, "strict_sf", default=False))
        duration_weighted = bool(
            _pick(duration_weighted or None, file_cfg, "duration_weighted", default=False)
        )
        pairs = []
        for line in Path(pairs_path).read_text().splitlines():
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) < 2:
                raise ConfigError(f"pairs file needs 2 tab-separated columns, got: {line!r}")
            pairs.append((parts[0], parts[1]))
    except (ConfigError, OSError) as exc:
        _fail_config(exc)

    report = evaluate_pairlist(pairs, strict_sf=strict_sf, duration_weighted=duration_weighted)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    table = report.render_table()
    (out / "report.txt").write_text(table + "\n")
    _write_resolved(out, "evaluate",
                    {"pairs": str(pairs_path), "strict_sf": strict_sf,
                     "duration_weighted": duration_weighted, "out": str(out_dir)})
    click.echo(table)
    sys.exit(1 if report.failures else 0)


if __name__ == "__main__":
    main()
