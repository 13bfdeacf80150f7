"""Command-line front end: estimate, simulate, perm, verify, bench.

Every run writes a single JSON document (stdout by default, ``--out`` for a
file) that embeds a manifest: command, input paths, seed, flag overrides,
package version, and wall-clock duration.  Reruns with identical inputs and
seed produce byte-identical output except for the duration field.

Exit codes are part of the contract:

* 0 -- success
* 2 -- unusable input (bad JSON, schema violation, inconsistent flags)
* 3 -- a computed result violated its invariants, or a verify check failed
* 4 -- a resource guard refused the computation

The ``--threads`` flag (default from ``PERMTOMO_THREADS``) is recorded in
the manifest for provenance; the current implementation runs serially, so
the flag documents intent without changing numerics.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import time

import numpy as np

from . import __version__, gramkernel, haar, permanent, simulate, tomography
from .serialization import (
    SchemaError,
    complex_to_json,
    density_from_json,
    density_to_json,
    dumps_json,
    gram_from_json,
    load_json_file,
    manifest_to_json,
    matrix_from_json,
    model_from_json,
    pure_state_from_json,
    record_from_json,
    record_to_json,
    scaled_to_json,
)
from .types import (
    GramSpec,
    GuardLimitError,
    InvariantViolation,
    McConfig,
    MeasurementModel,
    OutcomeRecord,
    RunManifest,
    ScaledValue,
    scaled_rel_diff,
)

__all__ = ["main"]

_EXIT_OK = 0
_EXIT_INPUT = 2
_EXIT_RESULT = 3
_EXIT_GUARD = 4


def _default_threads() -> int:
    try:
        return max(1, int(os.environ.get("PERMTOMO_THREADS", "1")))
    except ValueError:
        return 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="permtomo",
        description="Bayesian mean-state estimation from counted measurement outcomes.",
    )
    parser.add_argument("--version", action="version", version=f"permtomo {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="posterior mean state from model + counts")
    est.add_argument("model", help="measurement model JSON")
    est.add_argument("record", help="outcome record JSON")
    est.add_argument(
        "--mixed",
        type=int,
        metavar="DA",
        help="use the ancilla-traced prior with this ancilla dimension",
    )
    est.add_argument(
        "--scan-da",
        action="store_true",
        help="also report sequence log-probabilities for ancilla dims 1..dim",
    )
    est.add_argument(
        "--bloch", action="store_true", help="include the Bloch vector (qubit models)"
    )
    est.set_defaults(handler=_cmd_estimate)

    sim = sub.add_parser("simulate", help="draw synthetic counts from a true state")
    sim.add_argument("model", help="measurement model JSON")
    sim.add_argument("state", help="true state JSON (pure or density matrix)")
    sim.add_argument(
        "--shots",
        required=True,
        help="shots per group: one integer, or comma-separated per group",
    )
    sim.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
    sim.set_defaults(handler=_cmd_simulate)

    perm = sub.add_parser("perm", help="permanent of a matrix or multiplicity spec")
    perm.add_argument("matrix", nargs="?", help="matrix JSON {\"rows\": [[...], ...]}")
    perm.add_argument("--gram", metavar="PATH", help="gram spec JSON instead of a matrix")
    perm.add_argument(
        "--alg",
        choices=("naive", "ryser", "mult"),
        help="algorithm (default: ryser for a matrix, mult for a gram spec)",
    )
    perm.add_argument(
        "--alpha",
        type=float,
        default=1.0,
        help="cycle weight; 1 is the plain permanent (default 1)",
    )
    perm.set_defaults(handler=_cmd_perm)

    ver = sub.add_parser("verify", help="internal consistency suites")
    ver.add_argument("suite", choices=("identities", "mc"), help="which suite to run")
    ver.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
    ver.add_argument(
        "--samples",
        type=int,
        default=100_000,
        help="Monte Carlo samples for the mc suite (default 100000)",
    )
    ver.set_defaults(handler=_cmd_verify)

    ben = sub.add_parser("bench", help="timing table for the permanent algorithms")
    ben.add_argument(
        "--sizes",
        default="12,16,20",
        help="comma-separated matrix sizes for dense Ryser timing",
    )
    ben.add_argument(
        "--profiles",
        default="2x40,4x24,4x32",
        help="comma-separated MxN multiplicity profiles",
    )
    ben.add_argument(
        "--alpha",
        type=float,
        default=1.0,
        help="time the cycle-weighted variant instead (integer alpha)",
    )
    ben.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
    ben.set_defaults(handler=_cmd_bench)

    for p in (est, sim, perm, ver, ben):
        p.add_argument("--out", metavar="PATH", help="write the JSON report here")
        p.add_argument(
            "--threads",
            type=int,
            default=_default_threads(),
            help="recorded thread budget (execution is serial; default $PERMTOMO_THREADS or 1)",
        )
    return parser


def _manifest(args, inputs: dict, seed, config: dict, started: float) -> dict:
    manifest = RunManifest(
        command=args.command,
        inputs=inputs,
        seed=seed,
        config={**config, "threads": args.threads},
        version=__version__,
        duration_s=round(time.perf_counter() - started, 6),
    )
    return manifest_to_json(manifest)


# ---------------------------------------------------------------------------
# estimate
# ---------------------------------------------------------------------------


def _cmd_estimate(args) -> tuple[dict, int]:
    started = time.perf_counter()
    model = model_from_json(load_json_file(args.model))
    record = record_from_json(load_json_file(args.record))
    config: dict = {}
    if args.mixed is not None:
        if args.mixed < 1:
            raise SchemaError("--mixed needs a positive ancilla dimension")
        config["mixed"] = args.mixed
        rho = tomography.estimate_mixed(model, record, args.mixed)
    else:
        rho = tomography.estimate_pure(model, record)
    payload: dict = {"estimate": density_to_json(rho)}

    if args.bloch:
        config["bloch"] = True
        if model.dim != 2:
            raise SchemaError("--bloch needs a qubit model (dim = 2)")
        if args.mixed is None and record.total:
            vec = tomography.bloch_estimate_qubit(model, record)
        else:
            # read the components off the estimate itself
            vec = np.array(
                [float(np.trace(rho.matrix @ s).real) for s in tomography._PAULI]
            )
        payload["bloch"] = [float(x) for x in vec]

    if args.scan_da:
        config["scan_da"] = True
        dims = list(range(1, model.dim + 1))
        totals = tomography.scan_ancilla_totals(model, record, dims)
        payload["ancilla_scan"] = [
            {"ancilla_dim": a, "log_probability": totals[a].log_abs} for a in dims
        ]

    payload["manifest"] = _manifest(
        args, {"model": args.model, "record": args.record}, None, config, started
    )
    return payload, _EXIT_OK


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def _parse_shots(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",")]
    except ValueError as exc:
        raise SchemaError(f"--shots must be integers, got {text!r}") from exc


def _cmd_simulate(args) -> tuple[dict, int]:
    started = time.perf_counter()
    model = model_from_json(load_json_file(args.model))
    state_obj = load_json_file(args.state)
    if isinstance(state_obj, dict) and "amplitudes" in state_obj:
        state = pure_state_from_json(state_obj)
    else:
        state = density_from_json(state_obj)
    shots = _parse_shots(args.shots)
    if len(shots) == 1 and model.n_groups > 1:
        shots = shots * model.n_groups
    rng = np.random.default_rng(args.seed)
    record = simulate.sample_record(state, model, shots, rng)
    payload = {
        "record": record_to_json(record),
        "shots": shots,
        "seed": args.seed,
        "manifest": _manifest(
            args,
            {"model": args.model, "state": args.state},
            args.seed,
            {"shots": shots},
            started,
        ),
    }
    return payload, _EXIT_OK


# ---------------------------------------------------------------------------
# perm
# ---------------------------------------------------------------------------


def _unit_spec(matrix: np.ndarray) -> GramSpec:
    ones = tuple([1] * matrix.shape[0])
    return GramSpec(matrix, ones, ones)


def _cmd_perm(args) -> tuple[dict, int]:
    started = time.perf_counter()
    if (args.matrix is None) == (args.gram is None):
        raise SchemaError("give exactly one of a matrix path or --gram")
    alpha = args.alpha
    alpha_int = int(alpha) if float(alpha) == int(alpha) else None

    if args.gram is not None:
        spec = gram_from_json(load_json_file(args.gram))
        alg = args.alg or "mult"
        inputs = {"gram": args.gram}
    else:
        obj = load_json_file(args.matrix)
        if not isinstance(obj, dict) or "rows" not in obj:
            raise SchemaError('matrix file must be {"rows": [[...], ...]}')
        mat = matrix_from_json(obj["rows"])
        if mat.shape[0] != mat.shape[1]:
            raise SchemaError(f"matrix must be square, got shape {mat.shape}")
        spec = _unit_spec(mat)
        alg = args.alg or "ryser"
        inputs = {"matrix": args.matrix}

    if alg == "mult":
        if alpha == 1.0:
            value = permanent.permanent_multiplicity(spec)
        elif alpha_int is not None and alpha_int >= 1:
            value = permanent.alpha_permanent_coloring(spec, alpha_int)
        else:
            value = permanent.alpha_permanent_cyclecover(
                permanent.expand_gram(spec), alpha
            )
    else:
        expanded = permanent.expand_gram(spec)
        if alg == "naive":
            if alpha == 1.0:
                value = permanent.permanent_naive(expanded)
            else:
                value = permanent.alpha_permanent_naive(expanded, alpha)
        else:  # ryser
            if alpha != 1.0:
                raise SchemaError("--alg ryser computes only the plain permanent (alpha 1)")
            value = permanent.permanent_ryser(expanded)

    payload = {
        "value": scaled_to_json(value),
        "algorithm": alg,
        "alpha": alpha,
        "size": spec.size,
        "manifest": _manifest(
            args, inputs, None, {"alg": alg, "alpha": alpha}, started
        ),
    }
    return payload, _EXIT_OK


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------


def _random_gram(rng, m: int, total: int) -> GramSpec:
    v = rng.normal(size=(m, m)) + 1j * rng.normal(size=(m, m))
    v /= np.linalg.norm(v, axis=1)[:, None]
    counts = rng.multinomial(total, np.full(m, 1.0 / m))
    return GramSpec(v.conj() @ v.T, tuple(counts), tuple(counts))


def _identity_checks(seed: int) -> list[dict]:
    rng = np.random.default_rng(seed)
    checks = []

    def residual_check(name: str, residual, tol: float = 1e-9) -> None:
        residual = float(residual)
        checks.append(
            {"name": name, "residual": residual, "tolerance": tol, "passed": residual <= tol}
        )

    worst = 0.0
    for _ in range(10):
        mat = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
        worst = max(
            worst,
            scaled_rel_diff(
                permanent.permanent_naive(mat), permanent.permanent_ryser(mat)
            ),
        )
    residual_check("permanent naive vs ryser (6x6 x10)", worst)

    worst = 0.0
    for _ in range(10):
        spec = _random_gram(rng, 3, 9)
        worst = max(
            worst,
            scaled_rel_diff(
                permanent.permanent_multiplicity(spec),
                permanent.permanent_ryser(permanent.expand_gram(spec)),
            ),
        )
    residual_check("multiplicity vs expanded ryser (M=3, N=9 x10)", worst)

    worst = 0.0
    for _ in range(5):
        spec = _random_gram(rng, 3, 6)
        expanded = permanent.expand_gram(spec)
        for a in (1, 2, 3):
            naive = permanent.alpha_permanent_naive(expanded, a)
            worst = max(
                worst,
                scaled_rel_diff(
                    naive, permanent.alpha_permanent_cyclecover(expanded, a)
                ),
                scaled_rel_diff(naive, permanent.alpha_permanent_coloring(spec, a)),
            )
    residual_check("cycle-weighted triple agreement (alpha 1..3 x5)", worst)

    worst = 0.0
    for _ in range(5):
        n = 5
        mat = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        signed_det = ScaledValue.from_complex(np.linalg.det(mat) * (-1) ** n)
        worst = max(
            worst,
            scaled_rel_diff(permanent.alpha_permanent_naive(mat, -1.0), signed_det),
        )
    residual_check("alpha=-1 equals signed determinant (5x5 x5)", worst)

    worst = 0.0
    for _ in range(10):
        spec = _random_gram(rng, 3, 10)
        worst = max(worst, permanent.laplace_expand_check(spec))
    residual_check("row-expansion residual (M=3, N=10 x10)", worst)

    worst = 0.0
    for _ in range(5):
        spec = _random_gram(rng, 3, 6)
        expanded = permanent.expand_gram(spec)
        n = spec.size
        brow = rng.normal(size=n) + 1j * rng.normal(size=n)
        bcol = rng.normal(size=n) + 1j * rng.normal(size=n)
        corner = complex(rng.normal() + 1j * rng.normal())
        bordered = np.zeros((n + 1, n + 1), dtype=complex)
        bordered[:n, :n] = expanded
        bordered[:n, n] = bcol
        bordered[n, :n] = brow
        bordered[n, n] = corner
        for a in (2, 3):
            worst = max(
                worst,
                scaled_rel_diff(
                    permanent.alpha_laplace_border_expand(spec, brow, bcol, corner, a),
                    permanent.alpha_permanent_naive(bordered, a),
                ),
            )
    residual_check("bordered expansion vs naive (alpha 2,3 x5)", worst)

    worst = 0.0
    for _ in range(5):
        m = 3
        v = rng.normal(size=(m, 2)) + 1j * rng.normal(size=(m, 2))
        counts = tuple(int(c) for c in rng.multinomial(8, np.full(m, 1 / m)))
        tab = gramkernel.pure_gram_tables(v, counts)
        base = v.conj() @ v.T
        total = sum(
            counts[k] * counts[l] * tab.ratios[(l, k)] * base[l, k]
            for (l, k) in tab.ratios
        )
        worst = max(worst, abs(total - sum(counts)) / max(1, sum(counts)))
    residual_check("pure ratio-table row expansion (N=8 x5)", worst)

    worst = 0.0
    for _ in range(5):
        m = 3
        d_a = 2
        v = rng.normal(size=(m, 2)) + 1j * rng.normal(size=(m, 2))
        counts = tuple(int(c) for c in rng.multinomial(8, np.full(m, 1 / m)))
        tab = gramkernel.mixed_gram_tables(v, counts, d_a)
        base = v.conj() @ v.T
        total = 0j
        for (l, k), ratio in tab.ratios.items():
            if l == k:
                total += counts[k] * (counts[k] - 1 + d_a) * ratio * base[k, k]
            else:
                total += counts[k] * counts[l] * ratio * base[l, k]
        worst = max(worst, abs(total - sum(counts)) / max(1, sum(counts)))
    residual_check("mixed ratio-table row expansion (N=8, dA=2 x5)", worst)

    return checks


def _entry_report(est, reference: np.ndarray) -> list[dict]:
    rows = []
    ref = np.asarray(reference)
    sig = est.sigma_distance(ref)
    for (i, j), analytic in np.ndenumerate(ref):
        rows.append(
            {
                "entry": [int(i), int(j)],
                "analytic": complex_to_json(analytic),
                "mc_mean": complex_to_json(est.mean[i, j]),
                "mc_stderr": float(est.stderr[i, j]),
                "sigma_distance": float(sig[i, j]),
            }
        )
    return rows


def _mc_checks(seed: int, samples: int) -> list[dict]:
    checks = []

    def sigma_check(name: str, sigma: float, detail=None) -> None:
        entry = {"name": name, "sigma_distance": sigma, "band": 3.0, "passed": sigma <= 3.0}
        if detail is not None:
            entry["entries"] = detail
        checks.append(entry)

    cfg = McConfig(samples, seed=seed)
    chk = haar.verify_main_identity([[1.0, 0.0]], [[1.0, 0.0]], cfg)
    sigma_check("overlap moment, one factor, qubit", chk.sigma_distance)

    rng = np.random.default_rng(seed + 1)
    xs = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    ys = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    chk = haar.verify_main_identity(xs, ys, McConfig(samples, seed=seed + 1))
    sigma_check("overlap moment, two random factors, qubit", chk.sigma_distance)

    trine = MeasurementModel(
        2,
        np.array(
            [
                math.sqrt(2 / 3)
                * np.array([math.cos(2 * math.pi * j / 3), math.sin(2 * math.pi * j / 3)])
                for j in range(3)
            ],
            dtype=complex,
        ),
    )
    record = OutcomeRecord((2, 1, 0))
    est = haar.mc_posterior_pure(trine, record, McConfig(samples, seed=seed + 2))
    ref = tomography.estimate_pure(trine, record).matrix
    sigma_check(
        "posterior mean, pure prior, trine counts (2,1,0)",
        float(np.max(est.sigma_distance(ref))),
        _entry_report(est, ref),
    )

    model = MeasurementModel(2, np.array([[1.0, 0.0], [0.6, 0.8]], dtype=complex))
    record = OutcomeRecord((1, 1))
    est = haar.mc_posterior_mixed(model, record, 2, McConfig(samples, seed=seed + 3))
    ref = tomography.estimate_mixed(model, record, 2).matrix
    sigma_check(
        "posterior mean, ancilla prior dA=2, counts (1,1)",
        float(np.max(est.sigma_distance(ref))),
        _entry_report(est, ref),
    )
    return checks


def _cmd_verify(args) -> tuple[dict, int]:
    started = time.perf_counter()
    if args.suite == "identities":
        checks = _identity_checks(args.seed)
    else:
        checks = _mc_checks(args.seed, args.samples)
    all_passed = all(c["passed"] for c in checks)
    payload = {
        "suite": args.suite,
        "checks": checks,
        "all_passed": all_passed,
        "manifest": _manifest(
            args, {}, args.seed, {"samples": args.samples}, started
        ),
    }
    return payload, (_EXIT_OK if all_passed else _EXIT_RESULT)


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------


def _parse_sizes(text: str) -> list[int]:
    try:
        return [int(p) for p in text.split(",") if p]
    except ValueError as exc:
        raise SchemaError(f"--sizes must be integers, got {text!r}") from exc


def _parse_profiles(text: str) -> list[tuple[int, int]]:
    out = []
    for part in text.split(","):
        if not part:
            continue
        try:
            m, n = part.lower().split("x")
            out.append((int(m), int(n)))
        except ValueError as exc:
            raise SchemaError(f"profiles look like MxN, got {part!r}") from exc
    return out


def _balanced_spec(rng, m: int, total: int) -> GramSpec:
    v = rng.normal(size=(m, m)) + 1j * rng.normal(size=(m, m))
    v /= np.linalg.norm(v, axis=1)[:, None]
    base, extra = divmod(total, m)
    counts = tuple(base + (1 if k < extra else 0) for k in range(m))
    return GramSpec(v.conj() @ v.T, counts, counts)


def _timed(fn, *fargs):
    t0 = time.perf_counter()
    value = fn(*fargs)
    return value, time.perf_counter() - t0


def _cmd_bench(args) -> tuple[dict, int]:
    started = time.perf_counter()
    alpha = args.alpha
    alpha_int = int(alpha) if float(alpha) == int(alpha) else None
    if alpha != 1.0 and (alpha_int is None or alpha_int < 1):
        raise SchemaError("bench --alpha needs a positive integer")
    rng = np.random.default_rng(args.seed)
    rows = []

    for n in _parse_sizes(args.sizes):
        mat = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        _, dt = _timed(permanent.permanent_ryser, mat / math.sqrt(n))
        rows.append({"algorithm": "ryser", "m": n, "n": n, "seconds": round(dt, 6)})

    speedups = []
    for m, total in _parse_profiles(args.profiles):
        spec = _balanced_spec(rng, m, total)
        if alpha == 1.0:
            mult_value, dt = _timed(permanent.permanent_multiplicity, spec)
            label = "multiplicity"
        else:
            mult_value, dt = _timed(permanent.alpha_permanent_coloring, spec, alpha_int)
            label = "coloring"
        rows.append({"algorithm": label, "m": m, "n": total, "seconds": round(dt, 6)})
        if alpha == 1.0 and m <= 4 and 24 <= total <= permanent.RYSER_MAX_N:
            expanded = permanent.expand_gram(spec)
            ryser_value, ryser_dt = _timed(permanent.permanent_ryser, expanded)
            rows.append(
                {"algorithm": "ryser-expanded", "m": m, "n": total, "seconds": round(ryser_dt, 6)}
            )
            speedups.append(
                {
                    "m": m,
                    "n": total,
                    "speedup": round(ryser_dt / max(dt, 1e-9), 2),
                    "agreement": scaled_rel_diff(mult_value, ryser_value),
                    "faster": ryser_dt > dt,
                }
            )

    all_faster = all(s["faster"] for s in speedups) if speedups else True
    payload = {
        "rows": rows,
        "speedup_checks": speedups,
        "multiplicity_beats_expanded": all_faster,
        "manifest": _manifest(
            args,
            {},
            args.seed,
            {"sizes": args.sizes, "profiles": args.profiles, "alpha": alpha},
            started,
        ),
    }
    return payload, (_EXIT_OK if all_faster else _EXIT_RESULT)


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        payload, code = args.handler(args)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_INPUT
    except GuardLimitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_GUARD
    except InvariantViolation as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_RESULT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_INPUT

    text = dumps_json(payload)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    raise SystemExit(main())
