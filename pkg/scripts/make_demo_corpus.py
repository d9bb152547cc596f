#!/usr/bin/env python3
"""Build a small synthetic corpus for exercising the pipeline.

Writes speech-like signals at mixed sampling rates (one deliberately
band-limited inside a 48 kHz container), noise, simple RIRs, source
list files, and a fake quality-score TSV.
"""

import argparse
from pathlib import Path

import numpy as np

from urgent_forge.audio_io import AudioBuffer, save_wav
from urgent_forge.dsp import convolve, design_lowpass


def speech_like(sf, duration_s, rng, peak=0.25):
    t = np.arange(int(sf * duration_s)) / sf
    envelope = 0.5 * (1.0 + np.sin(2 * np.pi * rng.uniform(2.0, 4.0) * t))
    x = np.zeros_like(t)
    for f0, a in ((200, 1.0), (420, 0.7), (860, 0.5), (1700, 0.3), (3200, 0.2)):
        if f0 < sf / 2:
            x += a * np.sin(2 * np.pi * f0 * t + rng.uniform(0, 2 * np.pi))
    x = envelope * x + 0.01 * rng.standard_normal(len(t))
    return AudioBuffer(peak * x / np.abs(x).max(), sf)


def make_corpus(out_dir: Path, seed: int = 0):
    rng = np.random.default_rng(seed)
    out_dir.mkdir(parents=True, exist_ok=True)

    speech_paths = []
    for i, sf in enumerate((16000, 48000, 22050, 44100)):
        path = out_dir / f"speech_{sf}hz_{i}.wav"
        save_wav(speech_like(sf, 6.0, rng), path)
        speech_paths.append(path)

    # full-rate container, content stops at 7 kHz: bandwidth stage should
    # land this one on 16 kHz
    limited = out_dir / "speech_limited7k.wav"
    noise48 = AudioBuffer(0.2 * rng.standard_normal(48000 * 6), 48000)
    fir = design_lowpass(7000, 48000, 350)
    save_wav(convolve(noise48, fir.taps, "same_delay_compensated"), limited)
    speech_paths.append(limited)

    noise_paths = []
    for i in range(3):
        path = out_dir / f"noise_{i}.wav"
        save_wav(AudioBuffer(0.05 * rng.standard_normal(16000 * 3), 16000), path)
        noise_paths.append(path)

    rir_paths = []
    for i in range(2):
        taps = np.zeros(2400)
        taps[40] = 0.9
        taps[41:] = 0.15 * rng.standard_normal(2359) * np.exp(-np.arange(2359) / 500)
        path = out_dir / f"rir_{i}.wav"
        save_wav(AudioBuffer(taps, 16000), path)
        rir_paths.append(path)

    (out_dir / "speech.list").write_text("".join(f"{p}\n" for p in speech_paths))
    (out_dir / "noise.list").write_text("".join(f"{p}\n" for p in noise_paths))
    (out_dir / "rir.list").write_text("".join(f"{p}\n" for p in rir_paths))
    (out_dir / "scores.tsv").write_text(
        "".join(f"{p}\t{rng.uniform(2.5, 4.5):.2f}\t{rng.uniform(2.5, 4.5):.2f}"
                f"\t{rng.uniform(2.5, 4.5):.2f}\n" for p in speech_paths)
    )
    return speech_paths, noise_paths, rir_paths


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=Path("demo_corpus"))
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    speech, noise, rirs = make_corpus(args.out, args.seed)
    print(f"wrote {len(speech)} speech, {len(noise)} noise, {len(rirs)} RIR files to {args.out}")


if __name__ == "__main__":
    main()
