#!/usr/bin/env python3
"""Closed-loop accuracy experiment: simulate, estimate, measure the error.

Draws a Haar-random qubit state, simulates symmetric-tetrahedron measurement
records at increasing shot counts, runs the estimator on each record, and
reports the trace distance back to the truth, averaged over seeds.  The mean
error should fall roughly like 1/sqrt(N).

Usage:
    python scripts/run_closed_loop.py --shots 100 1000 10000 --seeds 20
    python scripts/run_closed_loop.py --ancilla 2 --out loop.json
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from permtomo.haar import sample_haar_state
from permtomo.simulate import sample_record
from permtomo.tomography import estimate_mixed, estimate_pure
from permtomo.types import MeasurementModel, trace_distance


def tetrahedron_model() -> MeasurementModel:
    """Four-outcome qubit model whose directions form a regular tetrahedron.

    Informationally complete: the four outcome projectors span the full
    operator space, so every Bloch component is recoverable from counts.
    """
    directions = [(0.0, 0.0, 1.0)]
    for j in range(3):
        phi = 2.0 * math.pi * j / 3.0
        r = math.sqrt(8.0) / 3.0
        directions.append((r * math.cos(phi), r * math.sin(phi), -1.0 / 3.0))
    vectors = []
    for x, y, z in directions:
        theta = math.acos(max(-1.0, min(1.0, z)))
        phi = math.atan2(y, x)
        ket = np.array(
            [math.cos(theta / 2.0), np.exp(1j * phi) * math.sin(theta / 2.0)]
        )
        vectors.append(ket / math.sqrt(2.0))
    return MeasurementModel.from_group_vectors(2, [vectors])


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--shots", type=int, nargs="+", default=[100, 1000, 10000])
    parser.add_argument("--seeds", type=int, default=20, help="number of repetitions")
    parser.add_argument(
        "--ancilla",
        type=int,
        default=1,
        help="ancilla dimension for the estimator (1 = pure-state prior)",
    )
    parser.add_argument("--seed-base", type=int, default=7)
    parser.add_argument("--out", help="write the result table as JSON")
    args = parser.parse_args(argv)

    model = tetrahedron_model()
    rows = []
    print(f"{'shots':>8}  {'mean dist':>10}  {'std':>10}  {'mean*sqrt(N)':>12}")
    for shots in args.shots:
        dists = []
        for seed in range(args.seeds):
            rng = np.random.default_rng([args.seed_base, seed])
            truth = sample_haar_state(2, rng)
            record = sample_record(truth, model, shots, rng)
            if args.ancilla == 1:
                estimate = estimate_pure(model, record)
            else:
                estimate = estimate_mixed(model, record, args.ancilla)
            dists.append(trace_distance(truth.projector(), estimate.matrix))
        mean = float(np.mean(dists))
        std = float(np.std(dists))
        rows.append({"shots": shots, "mean": mean, "std": std})
        print(f"{shots:>8}  {mean:>10.5f}  {std:>10.5f}  {mean * math.sqrt(shots):>12.4f}")

    decreasing = all(a["mean"] > b["mean"] for a, b in zip(rows, rows[1:]))
    print(f"mean error strictly decreasing with N: {decreasing}")

    if args.out:
        payload = {
            "seeds": args.seeds,
            "ancilla_dim": args.ancilla,
            "rows": rows,
            "decreasing": decreasing,
        }
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
        print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
