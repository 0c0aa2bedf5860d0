"""Shared bits for the experiment scripts."""
import argparse
import logging
from collections import defaultdict
from pathlib import Path

from flowredirect.analysis import POLICIES, emit_results, nearest_rank


def parser(description: str, replicates: int = 20, size: int = 30) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--replicates", type=int, default=replicates)
    p.add_argument("--size", type=int, default=size)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=Path("results"))
    p.add_argument("--quiet", action="store_true")
    return p


def setup(args) -> None:
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    args.out.mkdir(parents=True, exist_ok=True)


def report(records, path: Path, group=lambda r: ()) -> None:
    """Write CSV and summary, then print median [q20, q80] per group and policy."""
    emit_results(records, path)
    table = defaultdict(list)
    for r in records:
        table[(*group(r), r.policy)].append(r.relative_final_size)
    for key in sorted(table, key=lambda k: (k[:-1], POLICIES.index(k[-1]))):
        v = table[key]
        print(f"{' '.join(map(str, key)):<32} median {nearest_rank(v, .5):.3f} "
              f"[{nearest_rank(v, .2):.3f}, {nearest_rank(v, .8):.3f}]  n={len(v)}")
    print(f"wrote {path}")
