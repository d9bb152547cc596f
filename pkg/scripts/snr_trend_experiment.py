#!/usr/bin/env python3
"""Metric behavior across SNR: mix one clean/noise pair at several SNRs
and tabulate SDR, ESTOI, MCD, LSD, and the multi-resolution loss.

SDR and ESTOI should rise with SNR; MCD and LSD should fall.
"""

import argparse

import numpy as np

from urgent_forge.audio_io import AudioBuffer
from urgent_forge.distortion import mix_noise_at_snr
from urgent_forge.metrics import estoi, lsd, mcd, multires_l1_loss, sdr


def speech_like(sf, duration_s, rng, peak=0.2):
    t = np.arange(int(sf * duration_s)) / sf
    envelope = 0.5 * (1.0 + np.sin(2 * np.pi * 3.1 * t))
    x = np.zeros_like(t)
    for f0, a in ((210, 1.0), (430, 0.7), (870, 0.5), (1700, 0.3), (3100, 0.2)):
        x += a * np.sin(2 * np.pi * f0 * t + rng.uniform(0, 2 * np.pi))
    x = envelope * x + 0.01 * rng.standard_normal(len(t))
    return AudioBuffer(peak * x / np.abs(x).max(), sf)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sf", type=int, default=16000)
    parser.add_argument("--duration", type=float, default=4.0)
    parser.add_argument("--snrs", type=float, nargs="+", default=[0, 5, 10, 15])
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    clean = speech_like(args.sf, args.duration, rng)
    noise = AudioBuffer(0.03 * rng.standard_normal(len(clean)), args.sf)

    print(f"{'SNR':>6}  {'SDR':>8}  {'ESTOI':>7}  {'MCD':>8}  {'LSD':>7}  {'loss':>8}")
    for snr in args.snrs:
        mix = mix_noise_at_snr(clean, noise, snr_db=snr)
        print(
            f"{snr:6.1f}  {sdr(clean, mix):8.3f}  {estoi(clean, mix):7.4f}  "
            f"{mcd(clean, mix):8.3f}  {lsd(clean, mix):7.3f}  "
            f"{multires_l1_loss(clean, mix):8.5f}"
        )


if __name__ == "__main__":
    main()
