"""Command-line experiment runner.

    uavorbit train    [--uavs N] ...                 learning agents
    uavorbit baseline --policy KIND [--uavs N] ...   one heuristic
    uavorbit sweep    --uavs 2..20 --step 2 ...      fleet-size sweep
    uavorbit verify                                  numeric oracle suite

Every run writes ``episodes.csv``, ``aggregate.csv`` and ``manifest.json``
into the output directory (``--out``, else ``$UAVORBIT_OUT``, else
``./results``).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

from . import __version__
from .agent import save_checkpoint
from .config import ConfigError, ScenarioConfig, dump_config, load_config
from .harness import ALL_KINDS, LEARNING_KIND, ROW_FIELDS, LearningFleet, aggregate, run_experiment
from .oracles import run_all
from .policies import POLICY_KINDS

log = logging.getLogger("uavorbit")

AGGREGATE_FIELDS = ("fleet_size", "policy", "seed", "episodes", *ROW_FIELDS[4:])
OUT_ENV = "UAVORBIT_OUT"


def write_metrics(rows, path: str | Path, fields=ROW_FIELDS) -> None:
    """CSV with a fixed column order; floats use repr so they round-trip exactly."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(fields), extrasaction="ignore", lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


def read_metrics(path: str | Path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def parse_fleet_range(text: str, step: int = 1) -> list[int]:
    """``"2..20"`` with step 2 -> [2, 4, ..., 20]; a bare integer is a single size."""
    if ".." in text:
        lo, hi = (int(x) for x in text.split("..", 1))
    else:
        lo = hi = int(text)
    if lo < 1 or hi < lo or step < 1:
        raise argparse.ArgumentTypeError(f"bad fleet range {text!r} (step {step})")
    return list(range(lo, hi + 1, step))


def _resolve_out(arg: str | None) -> Path:
    return Path(arg or os.environ.get(OUT_ENV) or "results")


def run_cells(cfg: ScenarioConfig, kinds, fleet_sizes, seeds, episodes: int,
              checkpoint_dir: Path | None = None) -> list[dict]:
    def progress(row, _metrics):
        log.info("%s U=%d seed=%d ep=%d norm_ee=%.4f", row["policy"], row["fleet_size"],
                 row["seed"], row["episode"], row["norm_ee"])

    rows = []
    for kind in kinds:
        for seed in seeds:
            fleets: dict[int, LearningFleet] = {}
            rows.extend(run_experiment(cfg, kind, fleet_sizes, seed, episodes, progress, fleets=fleets))
            if checkpoint_dir is not None:
                checkpoint_dir.mkdir(parents=True, exist_ok=True)
                for n, fleet in fleets.items():
                    for i, agent in enumerate(fleet.unique_agents()):
                        save_checkpoint(agent.net, checkpoint_dir / f"n{n}_seed{seed}_uav{i}.npz")
    return rows


def write_outputs(out: Path, cfg: ScenarioConfig, rows, kinds, fleet_sizes, seeds, episodes) -> None:
    out.mkdir(parents=True, exist_ok=True)
    write_metrics(rows, out / "episodes.csv")
    agg = []
    for kind in kinds:
        for seed in seeds:
            subset = [r for r in rows if r["policy"] == kind and r["seed"] == seed]
            agg.extend(aggregate(subset, cfg.warmup_episodes))
    write_metrics(agg, out / "aggregate.csv", AGGREGATE_FIELDS)
    manifest = {
        "version": __version__,
        "policies": list(kinds),
        "fleet_sizes": list(fleet_sizes),
        "seeds": list(seeds),
        "episodes": episodes,
        "output_dir": str(out),
        "config": asdict(cfg),
        "config_text": dump_config(cfg),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key=value config file")
    common.add_argument("--seed", type=int, action="append", help="master seed (repeatable)")
    common.add_argument("--episodes", type=int, help="episodes per fleet size")
    common.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./results)")
    common.add_argument("-v", "--verbose", action="store_true", help="log every episode")

    parser = argparse.ArgumentParser(prog="uavorbit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", parents=[common], help="train the multi-agent DQN")
    train.add_argument("--uavs", type=int, default=10)

    base = sub.add_parser("baseline", parents=[common], help="run one heuristic policy")
    base.add_argument("--policy", choices=POLICY_KINDS, required=True)
    base.add_argument("--uavs", type=int, default=10)

    sweep = sub.add_parser("sweep", parents=[common], help="sweep over fleet sizes")
    sweep.add_argument("--uavs", default="2..20", help="fleet range, e.g. 2..20")
    sweep.add_argument("--step", type=int, default=2)
    sweep.add_argument("--policy", action="append", choices=ALL_KINDS,
                       help="policies to run (repeatable; default all)")

    sub.add_parser("verify", help="run the numeric oracle suite")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "verify":
        results = run_all()
        for r in results:
            print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}: {r.detail}")
        return 0 if all(r.passed for r in results) else 1

    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config) if args.config else ScenarioConfig()
    except (ConfigError, OSError) as exc:
        parser.error(str(exc))
    seeds = args.seed or [0]
    episodes = args.episodes if args.episodes is not None else cfg.episodes
    if episodes < 1:
        parser.error("--episodes must be positive")
    out = _resolve_out(args.out)

    if args.command == "train":
        kinds, sizes = [LEARNING_KIND], [args.uavs]
    elif args.command == "baseline":
        kinds, sizes = [args.policy], [args.uavs]
    else:
        try:
            sizes = parse_fleet_range(args.uavs, args.step)
        except (ValueError, argparse.ArgumentTypeError) as exc:
            parser.error(str(exc))
        kinds = args.policy or list(ALL_KINDS)
    if min(sizes) < 1:
        parser.error("--uavs must be positive")

    ckpt = out / "checkpoints" if LEARNING_KIND in kinds else None
    rows = run_cells(cfg, kinds, sizes, seeds, episodes, ckpt)
    write_outputs(out, cfg, rows, kinds, sizes, seeds, episodes)
    for row in (r for kind in kinds for seed in seeds
                for r in aggregate([x for x in rows if x["policy"] == kind and x["seed"] == seed],
                                   cfg.warmup_episodes)):
        print(f"{row['policy']:>13}  U={row['fleet_size']:<3} seed={row['seed']:<4} "
              f"norm_ee={row['norm_ee']:.4f} norm_thr={row['norm_throughput']:.4f} "
              f"norm_energy={row['norm_energy']:.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
