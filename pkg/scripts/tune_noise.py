"""Fit the default scenario's chain-noise sigmas to target single-source errors.

Runs the calibration pipeline over a block of seeds and rescales each sigma
by target/measured until the seed-averaged single-source mean errors are
within tolerance. Prints the sigmas to freeze into ``poseforge.sim``.

    python scripts/tune_noise.py --seeds 20 --rounds 6
"""

import argparse
import math
from dataclasses import replace

import numpy as np

from poseforge.pipeline import calibrate
from poseforge.sim import NoiseSpec, default_calibration_scenario, generate

TARGET = {"KUKA": (2.429e-3, math.radians(0.637)), "VICON": (1.208e-3, math.radians(0.172))}


def measure(kuka: NoiseSpec, vicon: NoiseSpec, seeds):
    acc = {k: np.zeros(2) for k in TARGET}
    for s in seeds:
        sc = replace(default_calibration_scenario(s), kuka_noise=kuka, vicon_noise=vicon)
        out = generate(sc)
        run = calibrate(out.records, sc.camera, sc.board, seed=s)
        for k in TARGET:
            rep = run.reports[k]
            acc[k] += (rep.e_t, rep.e_r)
    return {k: v / len(seeds) for k, v in acc.items()}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--rounds", type=int, default=6)
    ap.add_argument("--first-seed", type=int, default=1000)
    args = ap.parse_args()
    seeds = range(args.first_seed, args.first_seed + args.seeds)
    sc = default_calibration_scenario()
    noise = {"KUKA": sc.kuka_noise, "VICON": sc.vicon_noise}
    for rnd in range(args.rounds):
        got = measure(noise["KUKA"], noise["VICON"], seeds)
        for k, (et, er) in TARGET.items():
            m_et, m_er = got[k]
            print(
                f"round {rnd} {k:5s} rot={noise[k].rot_noise_sigma:.6f} trans={noise[k].trans_noise_sigma:.6f}"
                f"  E_T={m_et * 1e3:.3f} mm ({m_et / et - 1:+.1%})  E_R={math.degrees(m_er):.3f} deg ({m_er / er - 1:+.1%})"
            )
            rot = noise[k].rot_noise_sigma * er / m_er
            trans = noise[k].trans_noise_sigma * (et / m_et) ** 1.5
            noise[k] = replace(noise[k], rot_noise_sigma=rot, trans_noise_sigma=trans)
    for k in TARGET:
        print(f"{k}: rot_noise_sigma={noise[k].rot_noise_sigma:.5f} trans_noise_sigma={noise[k].trans_noise_sigma:.5f}")


if __name__ == "__main__":
    main()
