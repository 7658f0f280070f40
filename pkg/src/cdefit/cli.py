"""Batch command-line front end: simulate, fit, density, replicate.

Every run writes a manifest next to its outputs recording the fully resolved
configuration and seeds; outputs are deterministic given the manifest.

Exit codes: 0 success/converged, 2 usage, 3 data error, 4 non-convergence,
5 internal assertion failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .dataset import (IDENTITY, LOGISTIC, REGULAR, UNIFORM_RANDOM, Dataset,
                      Domain, apply_logistic, load_csv, save_csv)
from .density import ConditionalDensity, default_quad_points
from .errors import CdeError, DataError, InternalAssertionError, SchemaError
from .feature_map import parse_kernel
from .optimizer import FitConfig, FitResult, fit
from .simgen import StudySpec, gen_model, run_study, summary_rows

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NONCONVERGENCE = 4
EXIT_INTERNAL = 5


def _manifest_path(out_path: str) -> str:
    return out_path + ".manifest.json"


def _write_manifest(out_path: str, subcommand: str, config: dict,
                    inputs: dict, outputs: list[str], seeds: dict,
                    started: float) -> None:
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "tool": "cdefit",
        "version": __version__,
        "subcommand": subcommand,
        "config": config,
        "inputs": inputs,
        "outputs": outputs,
        "seeds": seeds,
        "wall_seconds": time.monotonic() - started,
        "created_utc": datetime.now(timezone.utc).isoformat(),
    }
    with open(_manifest_path(out_path), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")


def fit_result_to_dict(result: FitResult, kernel: str, transform: str,
                       n: int, include_alpha: bool) -> dict:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "tool": "cdefit",
        "version": __version__,
        "kernel": kernel,
        "transform": transform,
        "n": n,
        "domain": {"lo": result.domain.lo, "hi": result.domain.hi},
        "config": result.config.to_dict(),
        "theta_hat": [float(v) for v in result.theta_hat],
        "converged": bool(result.converged),
        "outer_iters": result.outer_iters,
        "failure": result.failure,
        "trace": [
            {
                "k": r.k,
                "theta": [float(v) for v in r.theta],
                "target_loglik": r.target_loglik,
                "newton_iters": r.newton_iters,
                "grad_norm": _jsonable(r.grad_norm),
                "ridge": _jsonable(r.ridge),
                "step_sq": _jsonable(r.step_sq),
                "subsample_size": r.subsample_size,
            }
            for r in result.trace
        ],
    }
    if include_alpha:
        doc["alpha_hat"] = [float(v) for v in result.alpha_hat]
        doc["eta_hat"] = [float(v) for v in result.eta_hat]
    return doc


def _jsonable(v: float):
    return None if v is None or not np.isfinite(v) else float(v)


def load_fit_document(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise SchemaError(
            f"fit file {path} has schema_version {doc.get('schema_version')!r}, "
            f"this tool reads {SCHEMA_VERSION}"
        )
    return doc


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cde", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"cdefit {__version__}")
    sub = p.add_subparsers(dest="subcommand", required=True)

    sim = sub.add_parser("simulate", help="draw a synthetic dataset CSV")
    sim.add_argument("--model", required=True, choices=["I", "II"])
    sim.add_argument("--n", type=int, default=1000)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out", required=True)

    fitp = sub.add_parser("fit", help="fit a kernel to a dataset CSV")
    fitp.add_argument("data", help="input dataset CSV (header x1,...,xp,y)")
    fitp.add_argument("--kernel", required=True,
                      help='"A", "B" or "poly:<x_degree>,<y_degree>"')
    fitp.add_argument("--m", type=int, default=100)
    fitp.add_argument("--W", type=float, default=1e6)
    fitp.add_argument("--delta", type=float, default=1e-6)
    fitp.add_argument("--grid", choices=["regular", "random"], default="regular")
    fitp.add_argument("--seed", type=int, default=0, help="background grid seed")
    fitp.add_argument("--lcc", choices=["on", "off"], default="off")
    fitp.add_argument("--lcc-seed", type=int, default=0)
    fitp.add_argument("--transform", choices=[IDENTITY, LOGISTIC],
                      default=IDENTITY)
    fitp.add_argument("--max-outer", type=int, default=200)
    fitp.add_argument("--no-alpha", action="store_true",
                      help="omit per-observation intercepts from the output")
    fitp.add_argument("--out", required=True)

    den = sub.add_parser("density", help="evaluate a fitted conditional density")
    den.add_argument("fit", help="fit result JSON")
    den.add_argument("--x", required=True,
                     help='x values: scalars "0.2,0.5"; vectors ";"-separated')
    den.add_argument("--ny", type=int, default=200,
                     help="number of evaluation points over the domain")
    den.add_argument("--out", required=True)

    rep = sub.add_parser("replicate", help="run a replication study")
    rep.add_argument("--spec", help="study spec JSON; flags override its fields")
    rep.add_argument("--model", choices=["I", "II"])
    rep.add_argument("--kernel")
    rep.add_argument("--n", type=int)
    rep.add_argument("--m", type=int)
    rep.add_argument("--reps", type=int)
    rep.add_argument("--seed", type=int, help="base seed for replicate streams")
    rep.add_argument("--W", type=float)
    rep.add_argument("--delta", type=float)
    rep.add_argument("--lcc", choices=["on", "off"])
    rep.add_argument("--lcc-seed", type=int)
    rep.add_argument("--out", required=True, help="output directory")
    return p


def cmd_simulate(args) -> int:
    started = time.monotonic()
    data = gen_model(args.model, args.n, args.seed)
    save_csv(data, args.out)
    _write_manifest(args.out, "simulate",
                    {"model": args.model, "n": args.n},
                    {}, [args.out], {"seed": args.seed}, started)
    return EXIT_OK


def cmd_fit(args) -> int:
    started = time.monotonic()
    data = load_csv(args.data)
    if args.transform == LOGISTIC:
        ys, _ = apply_logistic(data.ys)
        data = Dataset(xs=data.xs, ys=ys, transform=LOGISTIC)
    fm = parse_kernel(args.kernel)
    scheme = REGULAR if args.grid == "regular" else UNIFORM_RANDOM
    config = FitConfig(W=args.W, m=args.m, grid_scheme=scheme,
                       grid_seed=args.seed, delta=args.delta,
                       max_outer_iters=args.max_outer,
                       lcc=(args.lcc == "on"), lcc_seed=args.lcc_seed)
    result = fit(data, fm, config)
    doc = fit_result_to_dict(result, args.kernel, args.transform, data.n,
                             include_alpha=not args.no_alpha)
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    _write_manifest(args.out, "fit", config.to_dict(),
                    {"data": args.data}, [args.out],
                    {"grid_seed": args.seed, "lcc_seed": args.lcc_seed}, started)
    if not result.converged:
        print(f"fit did not converge in {result.config.max_outer_iters} outer "
              f"iterations (result written to {args.out})", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    return EXIT_OK


def _parse_x_values(text: str, x_dim: int) -> list[np.ndarray]:
    xs = []
    for part in text.split(";"):
        vals = [float(v) for v in part.split(",") if v.strip() != ""]
        if len(vals) != x_dim:
            raise DataError(
                f"x value {part!r} has {len(vals)} coordinates, fit expects {x_dim}"
            )
        xs.append(np.array(vals))
    if not xs:
        raise DataError("no x values given")
    return xs


def cmd_density(args) -> int:
    started = time.monotonic()
    doc = load_fit_document(args.fit)
    fm = parse_kernel(doc["kernel"])
    domain = Domain(doc["domain"]["lo"], doc["domain"]["hi"])
    cd = ConditionalDensity(
        fm=fm, theta=np.array(doc["theta_hat"]), domain=domain,
        transform=doc["transform"],
        quad_points=default_quad_points(doc["config"]["m"]),
    )
    xs = _parse_x_values(args.x, fm.x_dim)
    if args.ny < 2:
        raise DataError("--ny must be at least 2")
    if doc["transform"] == LOGISTIC:
        # interior working lattice mapped back to the original scale
        work = np.linspace(domain.lo, domain.hi, args.ny + 2)[1:-1]
        ys = np.log(work / (1.0 - work))
    else:
        ys = np.linspace(domain.lo, domain.hi, args.ny)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{i + 1}" for i in range(fm.x_dim)] + ["y", "pdf"])
        for x in xs:
            dens = cd.pdf(x, ys)
            for y, f in zip(ys, dens):
                writer.writerow([repr(float(v)) for v in x]
                                + [repr(float(y)), repr(float(f))])
    _write_manifest(args.out, "density",
                    {"x": args.x, "ny": args.ny}, {"fit": args.fit},
                    [args.out], {}, started)
    return EXIT_OK


def _study_spec_from_args(args) -> StudySpec:
    fields: dict = {}
    if args.spec:
        with open(args.spec, encoding="utf-8") as fh:
            fields.update(json.load(fh))
        fields.pop("schema_version", None)
    overrides = {
        "model": args.model, "kernel": args.kernel, "n": args.n, "m": args.m,
        "replicates": args.reps, "base_seed": args.seed, "W": args.W,
        "delta": args.delta,
        "lcc": None if args.lcc is None else args.lcc == "on",
        "lcc_seed": args.lcc_seed,
    }
    fields.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return StudySpec(**fields)
    except TypeError as exc:
        raise DataError(f"bad study spec: {exc}") from exc


def cmd_replicate(args) -> int:
    started = time.monotonic()
    spec = _study_spec_from_args(args)
    os.makedirs(args.out, exist_ok=True)
    result = run_study(spec)

    d = result.estimates.shape[1]
    rep_path = os.path.join(args.out, "replicates.csv")
    with open(rep_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["replicate", "seed", "converged"]
                        + [f"theta{k}" for k in range(d)])
        for r in range(result.estimates.shape[0]):
            writer.writerow([r, int(result.seeds[r]), int(result.converged[r])]
                            + [repr(float(v)) for v in result.estimates[r]])

    sum_path = os.path.join(args.out, "summary.csv")
    with open(sum_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["coefficient", "mean", "se", "true"])
        for row in summary_rows(result):
            writer.writerow([row["coefficient"], repr(row["mean"]),
                             repr(row["se"]), repr(row["true"])])

    manifest_base = os.path.join(args.out, "study")
    _write_manifest(manifest_base, "replicate", spec.to_dict(),
                    {"spec": args.spec}, [rep_path, sum_path],
                    {"base_seed": spec.base_seed}, started)
    print(f"{result.n_converged}/{spec.replicates} replicates converged; "
          f"summary in {sum_path}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    handlers = {
        "simulate": cmd_simulate,
        "fit": cmd_fit,
        "density": cmd_density,
        "replicate": cmd_replicate,
    }
    try:
        return handlers[args.subcommand](args)
    except InternalAssertionError as exc:
        print(f"internal assertion failed: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except (DataError, SchemaError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except CdeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE


if __name__ == "__main__":
    raise SystemExit(main())
