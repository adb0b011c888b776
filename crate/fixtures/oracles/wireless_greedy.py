"""Greedy scheduler on the reference wireless simulator.

Each step draws per-user gains (distance path loss plus log-normal
shadowing, clipped to [-80, -30] dB) and schedules the user with the highest
Shannon rate. Writes a results file with one eval episode per seed.

    python3 wireless_greedy.py --first-seed 1000 --episodes 20 --out out.json
"""
import argparse
import json
import math
import random

BANDWIDTH_HZ = 5e6
POWER_DBM = 10 * math.log10(10_000)
NOISE_DBM_PER_HZ = -106.0
PATH_LOSS_COEFF = 3.76
SHADOWING_DB = 10.0
DISTANCES_M = [20.0, 50.0, 50.0, 80.0]
GAIN_RANGE_DB = (-80.0, -30.0)
STEPS = 50


def gains_db(rng):
    out = []
    for d in DISTANCES_M:
        loss = 128.1 + 10 * PATH_LOSS_COEFF * math.log10(d / 1000.0)
        g = -loss + rng.gauss(0.0, SHADOWING_DB)
        out.append(min(max(g, GAIN_RANGE_DB[0]), GAIN_RANGE_DB[1]))
    return out


def rate_mbps(gain_db):
    noise_dbm = NOISE_DBM_PER_HZ + 10 * math.log10(BANDWIDTH_HZ)
    snr = 10 ** ((POWER_DBM + gain_db - noise_dbm) / 10)
    return BANDWIDTH_HZ * math.log2(1 + snr) / 1e6


def greedy_episode(seed):
    rng = random.Random(seed)
    total = 0.0
    for _ in range(STEPS):
        rates = [rate_mbps(g) for g in gains_db(rng)]
        # ties go to the lowest index
        total += max(rates)
    return total


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--first-seed", type=int, default=1000)
    ap.add_argument("--episodes", type=int, default=20)
    ap.add_argument("--out", required=True)
    args = ap.parse_args()
    seeds = list(range(args.first_seed, args.first_seed + args.episodes))
    returns = [round(greedy_episode(s), 6) for s in seeds]
    doc = {
        "episode_returns": returns,
        "eval_returns": returns,
        "model_path": "",
        "eval_seeds": seeds,
    }
    with open(args.out, "w") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")


if __name__ == "__main__":
    main()
