"""Never-order baseline on the reference inventory simulator.

Ten items start with 20 units each; demand is Poisson(8) per item and step,
unmet demand is lost at a penalty of 2 per unit. Horizon 30 steps.

    python3 inventory_do_nothing.py --first-seed 1000 --episodes 20 --out out.json
"""
import argparse
import json
import math
import random

# (fixed, unit, holding, price)
ITEMS = [
    (20, 5.0, 0.50, 12.0),
    (18, 4.0, 0.40, 10.0),
    (25, 6.0, 0.60, 15.0),
    (22, 5.0, 0.50, 13.0),
    (19, 4.5, 0.45, 11.0),
    (21, 5.2, 0.52, 14.0),
    (15, 3.8, 0.38, 9.0),
    (28, 6.5, 0.65, 16.0),
    (16, 4.0, 0.40, 10.0),
    (24, 5.8, 0.58, 13.5),
]
INITIAL_STOCK = 20
DEMAND_MEAN = 8.0
LOST_SALE_PENALTY = 2.0
STEPS = 30


def poisson(rng, lam):
    limit, k, p = math.exp(-lam), 0, 1.0
    while True:
        p *= rng.random()
        if p <= limit:
            return k
        k += 1


def step(stock, orders, rng):
    reward = 0.0
    for i, (fixed, unit, holding, price) in enumerate(ITEMS):
        if orders[i] > 0:
            reward -= fixed + unit * orders[i]
            stock[i] += orders[i]
        demand = poisson(rng, DEMAND_MEAN)
        sold = min(stock[i], demand)
        stock[i] -= sold
        reward += price * sold - holding * stock[i] - LOST_SALE_PENALTY * (demand - sold)
    return reward


def episode(seed):
    rng = random.Random(seed)
    stock = [INITIAL_STOCK] * len(ITEMS)
    return sum(step(stock, [0] * len(ITEMS), rng) for _ in range(STEPS))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--first-seed", type=int, default=1000)
    ap.add_argument("--episodes", type=int, default=20)
    ap.add_argument("--out", required=True)
    args = ap.parse_args()
    seeds = list(range(args.first_seed, args.first_seed + args.episodes))
    returns = [round(episode(s), 6) for s in seeds]
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
