"""Regret and communication comparison of all five protocols on one synthetic world.

Writes one CSV per protocol into --out-dir (runner schema) and prints the
final-value table.  Defaults are the scaled setting used by the acceptance
suite; pass --users 40 --clusters 10 --horizon 1000000 for the full scale.

    python scripts/run_comparison.py [--runs 3] [--jobs 3] [--out-dir results/comparison]
"""
import argparse
from pathlib import Path

from fedcascade.agent import AlgorithmParams, Protocol
from fedcascade.cli import main as cli_main
from fedcascade.environment import SyntheticConfig
from fedcascade.runner import ExperimentConfig, run_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--users", type=int, default=20)
    ap.add_argument("--clusters", type=int, default=5)
    ap.add_argument("--dim", type=int, default=10)
    ap.add_argument("--items", type=int, default=50)
    ap.add_argument("--K", type=int, default=4)
    ap.add_argument("--horizon", type=int, default=100_000)
    ap.add_argument("--lam", type=float, default=5.0)
    ap.add_argument("--alpha-c", type=float, default=0.05)
    ap.add_argument("--alpha-d", type=float, default=2.0)
    ap.add_argument("--beta", type=float, default=1.0,
                    help="shared confidence radius; pass a negative value for the theoretical radii")
    ap.add_argument("--runs", type=int, default=3)
    ap.add_argument("--base-seed", type=int, default=0)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out-dir", default="results/comparison")
    args = ap.parse_args()

    out = Path(args.out_dir)
    env = SyntheticConfig(num_users=args.users, num_clusters=args.clusters, dim=args.dim,
                          items_per_round=args.items, K=args.K, horizon=args.horizon)
    paths = []
    for proto in Protocol:
        params = AlgorithmParams(args.users, args.dim, args.K, args.horizon, lam=args.lam,
                                 alpha_c=args.alpha_c, alpha_d=args.alpha_d,
                                 beta=None if args.beta < 0 else args.beta, protocol=proto)
        path = out / f"{proto.value}.csv"
        run_experiment(ExperimentConfig(env, params, num_runs=args.runs,
                                        base_seed=args.base_seed, output_path=str(path)),
                       jobs=args.jobs)
        print(f"done {proto.value} -> {path}", flush=True)
        paths.append(str(path))
    cli_main(["report", *paths])


if __name__ == "__main__":
    main()
