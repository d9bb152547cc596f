import hashlib
import json
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from urgent_forge.audio_io import AudioBuffer, save_wav
from urgent_forge.cli import main
from urgent_forge.dsp import convolve, design_lowpass

from conftest import speech_like, white_noise


@pytest.fixture
def runner():
    return CliRunner()


def _tree_hash(root):
    digest = hashlib.sha256()
    for path in sorted(Path(root).rglob("*.wav")):
        digest.update(str(path.relative_to(root)).encode())
        digest.update(path.read_bytes())
    return digest.hexdigest()


def _write_lists(corpus, root):
    speech_list = root / "speech.list"
    noise_list = root / "noise.list"
    rir_list = root / "rir.list"
    speech_list.write_text("\n".join(corpus["speech"]) + "\n")
    noise_list.write_text("\n".join(corpus["noise"]) + "\n")
    rir_list.write_text("\n".join(corpus["rir"]) + "\n")
    return speech_list, noise_list, rir_list


def test_version(runner):
    result = runner.invoke(main, ["--version"])
    assert result.exit_code == 0
    assert "urgent-forge" in result.output and "manifest format" in result.output


# --- bandwidth ------------------------------------------------------------------


def test_bandwidth_limited_file_row(runner, tmp_path):
    # content strictly confined below 4 kHz: stopband edge at 4 kHz
    noise = white_noise(48000, 2.0, seed=1)
    fir = design_lowpass(3900, 48000, 200)
    save_wav(convolve(noise, fir.taps, "same_delay_compensated"), tmp_path / "bl.wav")
    result = runner.invoke(main, ["bandwidth", str(tmp_path / "bl.wav")])
    assert result.exit_code == 0
    path, bw, sf = result.output.strip().split("\t")
    assert sf == "8000"


def test_bandwidth_silent_file_marks_error(runner, tmp_path):
    save_wav(AudioBuffer(np.zeros(48000), 48000), tmp_path / "quiet.wav")
    save_wav(white_noise(16000, 1.0, seed=2), tmp_path / "ok.wav")
    result = runner.invoke(
        main, ["bandwidth", str(tmp_path / "quiet.wav"), str(tmp_path / "ok.wav")]
    )
    assert result.exit_code == 1
    lines = result.output.strip().splitlines()
    assert "ERROR\tsilence" in lines[0]
    assert lines[1].endswith("16000")


def test_bandwidth_empty_list(runner, tmp_path):
    empty = tmp_path / "none.list"
    empty.write_text("")
    result = runner.invoke(main, ["bandwidth", "--list-file", str(empty)])
    assert result.exit_code == 0
    assert result.output == ""


# --- filter ---------------------------------------------------------------------


def _scores_tsv(tmp_path):
    path = tmp_path / "scores.tsv"
    path.write_text(
        "a.wav\t3.5\t3.6\t4.0\n"
        "b.wav\t2.0\t3.1\t3.8\n"
        "c.wav\t3.9\t2.2\t3.2\n"
    )
    return path


def test_filter_vacuous_policy_keeps_all(runner, tmp_path):
    scores = _scores_tsv(tmp_path)
    result = runner.invoke(main, [
        "filter", "--scores", str(scores),
        "--kept", str(tmp_path / "k.tsv"), "--rejected", str(tmp_path / "r.tsv"),
    ])
    assert result.exit_code == 0
    assert len((tmp_path / "k.tsv").read_text().splitlines()) == 3
    assert (tmp_path / "r.tsv").read_text() == ""


def test_filter_threshold_shrinks_and_partitions(runner, tmp_path):
    scores = _scores_tsv(tmp_path)
    result = runner.invoke(main, [
        "filter", "--scores", str(scores), "--min-ovrl", "3.0",
        "--kept", str(tmp_path / "k.tsv"), "--rejected", str(tmp_path / "r.tsv"),
    ])
    assert result.exit_code == 0
    kept = (tmp_path / "k.tsv").read_text().splitlines()
    rejected = (tmp_path / "r.tsv").read_text().splitlines()
    assert len(kept) + len(rejected) == 3
    assert len(kept) == 2
    assert rejected[0].split("\t")[-1] == "ovrl"


# --- manifest / simulate ----------------------------------------------------------


def test_manifest_deterministic_and_env_seed(runner, tmp_path, tiny_corpus, monkeypatch):
    speech_list, noise_list, rir_list = _write_lists(tiny_corpus, tmp_path)
    args = ["manifest", "--speech-list", str(speech_list), "--noise-list", str(noise_list),
            "--rir-list", str(rir_list), "--count", "8"]

    assert runner.invoke(main, args + ["--seed", "5", "--out", str(tmp_path / "a.jsonl")]).exit_code == 0
    assert runner.invoke(main, args + ["--seed", "5", "--out", str(tmp_path / "b.jsonl")]).exit_code == 0
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    assert len((tmp_path / "a.jsonl").read_text().splitlines()) == 8

    monkeypatch.setenv("URGENT_FORGE_SEED", "5")
    assert runner.invoke(main, args + ["--out", str(tmp_path / "c.jsonl")]).exit_code == 0
    assert (tmp_path / "c.jsonl").read_bytes() == (tmp_path / "a.jsonl").read_bytes()


def test_simulate_workers_identical_trees(runner, tmp_path, tiny_corpus):
    speech_list, noise_list, rir_list = _write_lists(tiny_corpus, tmp_path)
    manifest = tmp_path / "m.jsonl"
    assert runner.invoke(main, [
        "manifest", "--speech-list", str(speech_list), "--noise-list", str(noise_list),
        "--rir-list", str(rir_list), "--count", "6", "--seed", "3", "--out", str(manifest),
    ]).exit_code == 0

    r1 = runner.invoke(main, ["simulate", "--manifest", str(manifest), "--workers", "1",
                              "--out", str(tmp_path / "t1")])
    r2 = runner.invoke(main, ["simulate", "--manifest", str(manifest), "--workers", "2",
                              "--out", str(tmp_path / "t2")])
    assert r1.exit_code == 0 and r2.exit_code == 0
    assert _tree_hash(tmp_path / "t1") == _tree_hash(tmp_path / "t2")
    report = (tmp_path / "t1" / "report.tsv").read_text().splitlines()
    assert len(report) == 1 + 6  # header + one row per entry
    assert (tmp_path / "t1" / "config.resolved").exists()


def test_simulate_poisoned_entry_partial_failure(runner, tmp_path, tiny_corpus):
    speech_list, noise_list, rir_list = _write_lists(tiny_corpus, tmp_path)
    manifest = tmp_path / "m.jsonl"
    runner.invoke(main, [
        "manifest", "--speech-list", str(speech_list), "--noise-list", str(noise_list),
        "--rir-list", str(rir_list), "--count", "4", "--seed", "3", "--out", str(manifest),
    ])
    lines = manifest.read_text().splitlines()
    poisoned = json.loads(lines[1])
    poisoned["noise_path"] = "gone.wav"
    lines[1] = json.dumps(poisoned)
    manifest.write_text("\n".join(lines) + "\n")

    result = runner.invoke(main, ["simulate", "--manifest", str(manifest),
                                  "--out", str(tmp_path / "t3")])
    assert result.exit_code == 1
    report = (tmp_path / "t3" / "report.tsv").read_text()
    assert report.count("\tok\t") == 3 and report.count("\tfailed\t") == 1
    assert len(list((tmp_path / "t3" / "degraded").glob("*.wav"))) == 3


def test_config_resolved_reproduces_manifest(runner, tmp_path, tiny_corpus):
    speech_list, noise_list, rir_list = _write_lists(tiny_corpus, tmp_path)
    out_a = tmp_path / "ma" / "m.jsonl"
    out_a.parent.mkdir()
    assert runner.invoke(main, [
        "manifest", "--speech-list", str(speech_list), "--noise-list", str(noise_list),
        "--rir-list", str(rir_list), "--count", "5", "--seed", "11", "--out", str(out_a),
    ]).exit_code == 0
    resolved = out_a.parent / "config.resolved"
    assert resolved.exists()

    out_b = tmp_path / "mb" / "m.jsonl"
    out_b.parent.mkdir()
    assert runner.invoke(main, [
        "manifest", "--speech-list", str(speech_list), "--noise-list", str(noise_list),
        "--rir-list", str(rir_list), "--count", "5", "--config", str(resolved),
        "--out", str(out_b),
    ]).exit_code == 0
    assert out_a.read_bytes() == out_b.read_bytes()


def test_unknown_config_key_exits_2(runner, tmp_path, tiny_corpus):
    speech_list, noise_list, rir_list = _write_lists(tiny_corpus, tmp_path)
    bad = tmp_path / "bad.json"
    bad.write_text('{"volume": 11}')
    result = runner.invoke(main, [
        "manifest", "--speech-list", str(speech_list), "--noise-list", str(noise_list),
        "--rir-list", str(rir_list), "--count", "2", "--config", str(bad),
        "--out", str(tmp_path / "m.jsonl"),
    ])
    assert result.exit_code == 2


# --- evaluate ---------------------------------------------------------------------


def test_evaluate_self_pairs_and_markers(runner, tmp_path):
    wav = tmp_path / "x.wav"
    save_wav(speech_like(16000, 1.0, seed=50), wav)
    pairs = tmp_path / "pairs.tsv"
    pairs.write_text(f"{wav}\t{wav}\n")
    result = runner.invoke(main, ["evaluate", "--pairs", str(pairs), "--out", str(tmp_path / "ev")])
    assert result.exit_code == 0
    assert "↑" in result.output and "↓" in result.output
    report = json.loads((tmp_path / "ev" / "report.json").read_text())
    assert report["aggregate"]["sdr_db"] == 60.0
    assert abs(report["aggregate"]["estoi"] - 1.0) <= 1e-6


def test_evaluate_missing_estimate(runner, tmp_path):
    wav = tmp_path / "x.wav"
    save_wav(speech_like(16000, 1.0, seed=51), wav)
    pairs = tmp_path / "pairs.tsv"
    pairs.write_text(f"{wav}\t{tmp_path/'gone.wav'}\n")
    result = runner.invoke(main, ["evaluate", "--pairs", str(pairs), "--out", str(tmp_path / "ev2")])
    assert result.exit_code == 1
    report = json.loads((tmp_path / "ev2" / "report.json").read_text())
    assert report["failures"]
