#!/usr/bin/env python3
"""Write the canonical config files used by the examples and studies."""

import argparse
import os

from contactmoc import fixtures


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="configs", help="directory for the config files")
    ap.add_argument("--eps", type=float, default=1e-3)
    args = ap.parse_args()

    os.makedirs(args.out, exist_ok=True)
    fixtures.write_fixture(os.path.join(args.out, "background.cfg"), eps=0.0)
    fixtures.write_fixture(os.path.join(args.out, "perturbed.cfg"), eps=args.eps)
    fixtures.write_blowup_fixture(os.path.join(args.out, "blowup.cfg"))
    print(f"wrote background.cfg, perturbed.cfg, blowup.cfg to {args.out}/")


if __name__ == "__main__":
    main()
