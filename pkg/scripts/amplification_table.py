#!/usr/bin/env python3
"""Print how shuffling amplifies local budgets at common cohort sizes."""
import sys

from privlabel.shuffle import amplification_validity_limit, amplify_forward, amplify_invert


def main() -> int:
    delta = 1e-6
    print(f"delta = {delta}")
    print(f"{'n':>9} {'eps0 limit':>11} {'forward(1.0)':>13} {'invert(0.5)':>12}")
    for n in (10_000, 100_000, 1_000_000):
        limit = amplification_validity_limit(n, delta)
        fwd = amplify_forward(1.0, n, delta)
        inv = amplify_invert(0.5, n, delta)
        print(f"{n:>9} {limit:>11.4f} {fwd:>13.6f} {inv:>12.6f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
