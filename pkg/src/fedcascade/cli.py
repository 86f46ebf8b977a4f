"""``fedcascade`` command line: simulate, ingest, report."""
from __future__ import annotations

import argparse
import sys
import warnings

from . import config as config_mod
from . import ingest
from .runner import METRICS, SchemaError, read_csv, run_experiment


def _warn_to_stderr(message, category, filename, lineno, file=None, line=None):
    print(f"warning: {message}", file=sys.stderr)


def cmd_simulate(args) -> int:
    loaded = config_mod.from_file(args.config, args.seed)
    if args.dump_effective_config:
        sys.stdout.write(config_mod.dump(loaded.resolved))
        return 0
    series = run_experiment(loaded.experiment, jobs=args.jobs)
    reg, comm, err = (series.final(m) for m in METRICS)
    print(f"T={series.horizon} runs={loaded.experiment.num_runs} "
          f"cum_regret={reg[1]:.4f}±{reg[2]:.4f} cum_comm={comm[1]:.1f}±{comm[2]:.1f} "
          f"cluster_error={err[1]:.4f}±{err[2]:.4f} -> {loaded.experiment.output_path}")
    return 0


def cmd_ingest(args) -> int:
    table = ingest.load_ratings(args.ratings)
    bundle = ingest.build_bundle(table, args.d, args.J, args.n_items, args.n_users, args.seed,
                                 args.sample_users)
    ingest.write_bundle(bundle, args.out)
    print("singular values: " + " ".join(f"{s:.6g}" for s in bundle.singular_values))
    print(f"users={len(bundle.user_ids)} items={len(bundle.item_ids)} J={bundle.J} "
          f"min_center_distance={bundle.min_center_distance:.6g}"
          f"{' (centers rescaled)' if bundle.centers_rescaled else ''} -> {args.out}")
    return 0


def cmd_report(args) -> int:
    tables = [(path, read_csv(path)) for path in args.csv]
    first_path, first = tables[0]
    for path, s in tables[1:]:
        if s.horizon != first.horizon:
            raise SchemaError(f"horizon mismatch: {first_path} has T={first.horizon}, "
                              f"{path} has T={s.horizon}")
    width = max(len(p) for p, _ in tables)
    print(f"{'file':<{width}}  " + "  ".join(f"{m:>24}" for m in METRICS))
    for path, s in tables:
        cells = []
        for m in METRICS:
            last = s.final(m)
            cells.append(f"{last[1]:.4f} ± {last[2]:.4f}" if last else "-")
        print(f"{path:<{width}}  " + "  ".join(f"{c:>24}" for c in cells))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fedcascade", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run replications from a key=value config")
    sim.add_argument("config")
    sim.add_argument("--seed", type=int, default=None, help="override base_seed")
    sim.add_argument("--jobs", type=int, default=1, help="parallel replications")
    sim.add_argument("--dump-effective-config", action="store_true",
                     help="print the fully-defaulted config and exit")
    sim.set_defaults(func=cmd_simulate)

    ing = sub.add_parser("ingest", help="ratings CSV -> embedding bundle")
    ing.add_argument("ratings")
    ing.add_argument("--d", type=int, required=True)
    ing.add_argument("--J", type=int, required=True)
    ing.add_argument("--n-items", type=int, default=1000)
    ing.add_argument("--n-users", type=int, default=1000)
    ing.add_argument("--seed", type=int, default=0)
    ing.add_argument("--sample-users", type=int, default=None,
                     help="keep this many randomly drawn users before clustering")
    ing.add_argument("--out", required=True)
    ing.set_defaults(func=cmd_ingest)

    rep = sub.add_parser("report", help="compare final metrics of result CSVs")
    rep.add_argument("csv", nargs="+")
    rep.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    warnings.showwarning = _warn_to_stderr
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
