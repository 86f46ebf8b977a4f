"""Generate the shipped 200x200 ratings fixture: planted rank 6, 4 user groups.

    python scripts/make_ratings_fixture.py [--out data/ratings_200x200.csv] [--seed 7]
"""
import argparse
import csv

import numpy as np

RANK, GROUPS, N = 6, 4, 200


def planted(seed: int):
    rng = np.random.default_rng(seed)
    centers = 2.0 * np.linalg.qr(rng.standard_normal((RANK, RANK)))[0][:GROUPS]
    group = np.arange(N) % GROUPS
    users = centers[group] + 0.3 * rng.standard_normal((N, RANK))
    items = rng.standard_normal((N, RANK))
    ratings = users @ items.T + 0.01 * rng.standard_normal((N, N))
    return ratings, group


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="data/ratings_200x200.csv")
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()
    ratings, _ = planted(args.seed)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["user_id", "item_id", "rating"])
        for u in range(N):
            for i in range(N):
                w.writerow([f"u{u:03d}", f"i{i:03d}", f"{ratings[u, i]:.6f}"])


if __name__ == "__main__":
    main()
