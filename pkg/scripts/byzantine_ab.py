#!/usr/bin/env python3
"""Compare honest-peer accuracy with and without coordinate trimming while
one peer broadcasts saturated updates."""
import argparse
import dataclasses
import statistics
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from gossipseg.aggregation import TrimConfig
from gossipseg.config import DataConfig, RunConfig
from gossipseg.orchestrator import run_full


def honest_mean(report, adversaries):
    accs = [a for pid, a in report.final_accuracy.items() if pid not in adversaries]
    return statistics.mean(accs)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--adversary", type=int, default=5)
    parser.add_argument("--scale", type=float, default=1000.0)
    parser.add_argument("--trim", type=float, default=0.2)
    parser.add_argument("--seeds", type=int, nargs="+", default=[3, 4, 5])
    parser.add_argument("--ticks", type=int, default=130)
    parser.add_argument("--out", default="runs/byzantine_ab")
    args = parser.parse_args()

    adversaries = {args.adversary}
    print(f"{'seed':>5}  {'clean':>6}  {'trimmed':>8}  {'untrimmed':>9}")
    for seed in args.seeds:
        base = RunConfig(
            num_peers=8,
            num_clusters=2,
            seed=seed,
            duration_ticks=args.ticks,
            leader_period=30,
            paillier_bits=512,
            byzantine_scale=args.scale,
            data=DataConfig(samples_per_class=200, test_per_class=50),
            out_dir=f"{args.out}/seed-{seed}/clean",
        )
        _, clean, _ = run_full(base)
        _, trimmed, _ = run_full(
            dataclasses.replace(
                base,
                byzantine_peers=(args.adversary,),
                trim=TrimConfig(trim_ratio=args.trim),
                out_dir=f"{args.out}/seed-{seed}/trimmed",
            )
        )
        _, untrimmed, _ = run_full(
            dataclasses.replace(
                base,
                byzantine_peers=(args.adversary,),
                trim=TrimConfig(trim_ratio=0.0),
                out_dir=f"{args.out}/seed-{seed}/untrimmed",
            )
        )
        print(
            f"{seed:>5}  {honest_mean(clean, adversaries):>6.3f}"
            f"  {honest_mean(trimmed, adversaries):>8.3f}"
            f"  {honest_mean(untrimmed, adversaries):>9.3f}"
        )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
