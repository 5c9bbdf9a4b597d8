"""Attention work per separator level for one toy forward pass.

    python3 scripts/attention_census.py --frames 64 --bins 64
"""

import argparse

from uniarray.verify import attention_census


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--frames", type=int, default=16)
    p.add_argument("--bins", type=int, default=16)
    args = p.parse_args()

    census = attention_census(args.frames, args.bins)
    print(f"{'block':<12}{'path':<6}{'seqs':>6}{'len':>6}{'scores':>10}")
    for (block, path), rec in census.items():
        print(f"{block:<12}{path:<6}{rec['sequences']:>6}{rec['length']:>6}{rec['scores']:>10}")
    full = sum(census[("enc0", p)]["scores"] for p in ("time", "freq"))
    for lvl in (1, 2):
        seq = sum(census[(f"enc{lvl}", p)]["length"] ** 2 for p in ("time", "freq"))
        seq0 = sum(census[("enc0", p)]["length"] ** 2 for p in ("time", "freq"))
        tot = sum(census[(f"enc{lvl}", p)]["scores"] for p in ("time", "freq"))
        print(f"level {lvl}: per-sequence {seq / seq0:.4f}, all entries {tot / full:.5f} of level 0")


if __name__ == "__main__":
    main()
