"""Ratings-backed experiment: ingest a ratings CSV, sample users, compare protocols.

    python scripts/ratings_experiment.py data/ratings_200x200.csv \
        [--d 10] [--J 4] [--users 40] [--horizon 50000] [--out-dir results/ratings]
"""
import argparse
from pathlib import Path

from fedcascade import ingest
from fedcascade.agent import AlgorithmParams, Protocol
from fedcascade.cli import main as cli_main
from fedcascade.environment import SyntheticConfig
from fedcascade.runner import ExperimentConfig, run_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("ratings")
    ap.add_argument("--d", type=int, default=10)
    ap.add_argument("--J", type=int, default=4)
    ap.add_argument("--n-items", type=int, default=1000)
    ap.add_argument("--n-users", type=int, default=1000)
    ap.add_argument("--users", type=int, default=40, help="users sampled into the simulation")
    ap.add_argument("--items", type=int, default=50)
    ap.add_argument("--K", type=int, default=4)
    ap.add_argument("--horizon", type=int, default=50_000)
    ap.add_argument("--runs", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out-dir", default="results/ratings")
    args = ap.parse_args()

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    bundle = ingest.build_bundle(ingest.load_ratings(args.ratings), args.d, args.J, args.n_items,
                                 args.n_users, args.seed, sample_users=args.users)
    ingest.write_bundle(bundle, out / "embeddings.bin")
    print(f"min center distance {bundle.min_center_distance:.4f}")
    truth = ingest.truth_from_bundle(bundle)
    env = SyntheticConfig(num_users=truth.num_users, num_clusters=truth.num_clusters,
                          dim=truth.dim, items_per_round=args.items, K=args.K,
                          horizon=args.horizon)
    paths = []
    for proto in Protocol:
        params = AlgorithmParams(truth.num_users, truth.dim, args.K, args.horizon, lam=args.K + 1.0,
                                 alpha_c=0.05, alpha_d=2.0, beta=1.0, protocol=proto)
        path = out / f"{proto.value}.csv"
        run_experiment(ExperimentConfig(env, params, num_runs=args.runs, base_seed=args.seed,
                                        output_path=str(path), truth=truth))
        paths.append(str(path))
    cli_main(["report", *paths])


if __name__ == "__main__":
    main()
