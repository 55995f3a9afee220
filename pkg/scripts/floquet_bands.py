#!/usr/bin/env python3
"""Band structure of Hill's equation for a cosine potential.

Scans the Hill discriminant over an energy window for several cosine
amplitudes.  At amplitude zero every gap is closed (double points at
(n pi / T)^2); turning the amplitude on opens the gaps, widest first.
"""

import argparse
import math
from pathlib import Path

import numpy as np

from melnikov_lab.cli import emit_plot_data
from melnikov_lab.floquet import PeriodicPotential, find_band_edges, scan_discriminant


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--period", type=float, default=2.0 * math.pi)
    parser.add_argument("--amplitudes", type=float, nargs="+",
                        default=[0.0, 0.1, 0.3])
    parser.add_argument("--e-min", type=float, default=-0.3)
    parser.add_argument("--e-max", type=float, default=2.6)
    parser.add_argument("--samples", type=int, default=201)
    parser.add_argument("--out", type=Path, default=Path("results/bands"))
    parser.add_argument("--svg", action="store_true")
    args = parser.parse_args()

    args.out.mkdir(parents=True, exist_ok=True)
    energies = np.linspace(args.e_min, args.e_max, args.samples)
    series = {"energy": energies}

    for amp in args.amplitudes:
        if amp == 0.0:
            pot = PeriodicPotential.zero(args.period)
        else:
            pot = PeriodicPotential.from_function(
                lambda x: amp * np.cos(2.0 * math.pi * x / args.period),
                args.period)
        scan = scan_discriminant(pot, energies)
        series[f"amp={amp:g}"] = [s.delta.real for s in scan]

        gaps = find_band_edges(pot, args.e_min, args.e_max)
        print(f"amplitude {amp:g}:")
        print(f"  band edges: "
              + ", ".join(f"{e:.5f}" for e in gaps.band_edges))
        if gaps.closed_gaps:
            print(f"  closed gaps at: "
                  + ", ".join(f"{e:.5f}" for e in gaps.closed_gaps))
        for lo, hi in gaps.open_gaps:
            print(f"  open gap [{lo:.5f}, {hi:.5f}]  width {hi - lo:.2e}")

    emit_plot_data(series, args.out / "discriminants.csv", svg=args.svg)
    print(f"wrote {args.out / 'discriminants.csv'}")


if __name__ == "__main__":
    main()
