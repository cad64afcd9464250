"""Command-line front end: factorize, trace, scan, fit.

Outputs are UTF-8 JSON/CSV with a schema field; scans are deterministic
for a given job regardless of worker count, checkpointed per grid row,
and resumable.  Exit codes: 0 success, 2 degenerate input, 1 any other
error.
"""

import argparse
import glob as globmod
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .continuation import ContinuationControls, continue_path, write_trace_csv
from .ensemble import field_from_seed, sample_matrix, substream
from .errors import DegenerateInput, InsufficientData, TakagiError
from .monodromy import (
    MatrixField,
    ScanOptions,
    ScanReport,
    circle_loop,
    coalescence_demo_field,
    grid_scan,
    polyline_path,
    rank_loss_demo_field,
)
from .stats import count_series_from_reports, fit_power_law
from .takagi_core import read_matrix, takagi_factor, verify_takagi

WORKERS_ENV = "TAKAGI_SCAN_WORKERS"
EXIT_DEGENERATE = 2

DEMO_FIELDS = {
    "demo-rankloss": rank_loss_demo_field,
    "demo-coalescence": coalescence_demo_field,
}


def _parse_kv(pairs, spec):
    """Parse ['n=8', 'seed=1', ...] against {key: converter} with defaults."""
    out = {}
    for item in pairs:
        if "=" not in item:
            raise ValueError(f"expected key=value, got {item!r}")
        key, value = item.split("=", 1)
        if key not in spec:
            raise ValueError(f"unknown key {key!r}, expected one of {sorted(spec)}")
        out[key] = spec[key](value)
    return out


def _parse_grid(text):
    m, _, k = text.lower().partition("x")
    return int(m), int(k)


def _workers(args):
    if args.workers is not None:
        return args.workers
    env = os.environ.get(WORKERS_ENV)
    return int(env) if env else 1


def _controls(args):
    kw = {}
    for name in ("tolstep", "h_min", "h_init", "tol_distinct"):
        value = getattr(args, name, None)
        if value is not None:
            kw[name] = value
    if getattr(args, "backend", None):
        kw["backend"] = args.backend
    return ContinuationControls(**kw)


def _add_control_flags(p):
    p.add_argument("--tolstep", type=float, help="step-control tolerance (default 1e-2)")
    p.add_argument("--h-min", dest="h_min", type=float, help="step-size floor (default 100*eps)")
    p.add_argument("--h-init", dest="h_init", type=float, help="initial step (default 1/64)")
    p.add_argument(
        "--tol-distinct",
        dest="tol_distinct",
        type=float,
        help="relative degeneracy threshold (default 1e-8)",
    )
    p.add_argument(
        "--backend",
        choices=("svd", "doubled"),
        help="factorization kernel (default svd; doubled uses the real eigensolver)",
    )


def cmd_factorize(args):
    if args.random:
        kv = _parse_kv(args.random, {"n": int, "seed": int, "realization": int})
        n = kv.get("n", 8)
        A = sample_matrix(n, substream(kv.get("seed", 0), kv.get("realization", 0)))
        source = f"ensemble n={n} seed={kv.get('seed', 0)}"
    else:
        if not args.input:
            raise ValueError("either an input file or --random is required")
        A = read_matrix(args.input)
        source = args.input
    pair = takagi_factor(A, tol_distinct=args.tol_distinct or 1e-8, backend=args.backend or "svd")
    check = verify_takagi(A, pair)
    print(f"matrix: {source}")
    print(f"n: {A.shape[0]}")
    print("singular values:", " ".join(f"{s:.17g}" for s in pair.S))
    print(f"residual: {check.residual:.3e}")
    print(f"unitarity defect: {check.unitarity_defect:.3e}")
    print(f"ordering ok: {check.ordering_ok}")
    if args.output:
        data = {
            "schema": 1,
            "n": A.shape[0],
            "S": [float(s) for s in pair.S],
            "U_re": pair.U.real.tolist(),
            "U_im": pair.U.imag.tolist(),
            "residual": check.residual,
            "unitarity_defect": check.unitarity_defect,
        }
        Path(args.output).write_text(json.dumps(data, sort_keys=True, indent=1) + "\n")
        print(f"factors written to {args.output}")
    return 0


def _field_for(args):
    if args.field in DEMO_FIELDS:
        field = DEMO_FIELDS[args.field]()
        if args.domain:
            field = MatrixField(field.func, tuple(args.domain), field.n)
        return field, {"field": args.field}
    if args.field == "ensemble":
        if args.n is None:
            raise ValueError("--n is required with --field ensemble")
        trig = field_from_seed(args.n, args.seed, args.realization)
        domain = tuple(args.domain) if args.domain else (0.0, 2.0 * np.pi, 0.0, np.pi)
        meta = {
            "field": "ensemble",
            "n": args.n,
            "seed": args.seed,
            "realization": args.realization,
        }
        return MatrixField(trig, domain, args.n), meta
    raise ValueError(f"unknown field {args.field!r}")


def cmd_trace(args):
    field, _ = _field_for(args)
    closed = False
    if args.circle:
        cx, cy, r = args.circle
        path = polyline_path(field, circle_loop(cx, cy, r, segments=args.segments))
        closed = True
    elif args.segment:
        x0, y0, x1, y1 = args.segment
        path = polyline_path(field, [(x0, y0), (x1, y1)])
    else:
        raise ValueError("either --circle or --segment is required")
    controls = _controls(args)
    initial = takagi_factor(path(0.0), tol_distinct=controls.tol_distinct, backend=controls.backend)
    result = continue_path(path, initial, controls)
    write_trace_csv(args.output, result.trace)
    print(f"status: {result.status}")
    print(f"t_end: {result.t_end:.17g}")
    print(f"nodes: {len(result.trace)}")
    if closed and result.status == "completed":
        d = np.real(np.einsum("ij,ij->j", np.conj(initial.U), result.final.U))
        signs = " ".join("+1" if v >= 0 else "-1" for v in d)
        print(f"column signs after loop: {signs}")
        print("column overlaps:", " ".join(f"{abs(v):.6f}" for v in d))
    print(f"trace written to {args.output}")
    return 0


def cmd_scan(args):
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    m, k = _parse_grid(args.grid)
    workers = _workers(args)
    options = ScanOptions(
        refine_depth=args.refine_depth,
        workers=workers,
        confidence_floor=args.confidence,
        controls=_controls(args),
    )
    jobs = []
    if args.ensemble:
        kv = _parse_kv(
            args.ensemble,
            {"n": int, "seed": int, "realizations": int, "grid": str},
        )
        if "grid" in kv:
            m, k = _parse_grid(kv["grid"])
        n = kv["n"]
        seed = kv.get("seed", 0)
        domain = tuple(args.domain) if args.domain else (0.0, 2.0 * np.pi, 0.0, np.pi)
        for r in range(kv.get("realizations", 1)):
            trig = field_from_seed(n, seed, r)
            meta = {"field": "ensemble", "n": n, "seed": seed, "realization": r}
            jobs.append((MatrixField(trig, domain, n), meta, f"scan_n{n}_r{r}"))
    else:
        field, meta = _field_for(args)
        jobs.append((field, meta, f"scan_{args.field}"))

    for field, meta, stem in jobs:
        checkpoint = outdir / f"{stem}.checkpoint.jsonl"
        report = grid_scan(
            field,
            m,
            k,
            options=options,
            checkpoint=checkpoint,
            stop_after_row=args.stop_after_row,
            job_meta=meta,
        )
        report.write_json(outdir / f"{stem}.json")
        report.write_events_csv(outdir / f"{stem}.events.csv")
        counts = report.counts
        coal = sum(counts["coalescence_per_pair"])
        print(
            f"{stem}: {'complete' if report.complete else 'partial'} "
            f"coalescence={coal} rank_loss={counts['rank_loss']} "
            f"composite={counts['composite']} inconclusive={counts['inconclusive']}"
        )
    return 0


def cmd_fit(args):
    paths = sorted(globmod.glob(args.reports))
    if not paths:
        raise InsufficientData(f"no report files match {args.reports!r}")
    reports = [ScanReport.read_json(p) for p in paths]
    rows = count_series_from_reports(reports)
    which = args.kind
    series = [
        (r.n, r.coalescence if which == "coalescence" else r.rank_loss) for r in rows
    ]
    fit = fit_power_law(series)
    summary = {"schema": 1, "kind": which, **fit.to_dict()}
    Path(args.out).write_text(json.dumps(summary, sort_keys=True, indent=1) + "\n")
    print(f"fit: count = {fit.c:.6g} * n^{fit.q:.6g}")
    print(f"rms log residual: {fit.residual:.3e}")
    print(f"points: {fit.point_count} (excluded zero rows: {fit.excluded})")
    print(f"summary written to {args.out}")
    if args.csv:
        ns = sorted({r.n for r in rows})
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write("n,mean_count,std_count,fitted\n")
            for n in ns:
                vals = np.array(
                    [
                        (r.coalescence if which == "coalescence" else r.rank_loss)
                        for r in rows
                        if r.n == n
                    ],
                    dtype=float,
                )
                fitted = fit.c * n**fit.q
                fh.write(f"{n},{vals.mean():.17g},{vals.std():.17g},{fitted:.17g}\n")
        print(f"plot data written to {args.csv}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="takagi-scan",
        description="Takagi factorization, smooth continuation, and degeneracy scanning",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("factorize", help="factorize one matrix and print diagnostics")
    p.add_argument("input", nargs="?", help="matrix text file (header n, then n^2 're im' lines)")
    p.add_argument("--random", nargs="*", metavar="KEY=VALUE", help="ensemble draw: n= seed= [realization=]")
    p.add_argument("--output", help="write factors as JSON")
    p.add_argument("--tol-distinct", dest="tol_distinct", type=float)
    p.add_argument("--backend", choices=("svd", "doubled"))
    p.set_defaults(func=cmd_factorize)

    p = sub.add_parser("trace", help="continue a factorization along a curve, write CSV")
    p.add_argument("--field", required=True, help="demo-rankloss | demo-coalescence | ensemble")
    p.add_argument("--n", type=int, help="dimension (ensemble field)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--realization", type=int, default=0)
    p.add_argument("--domain", type=float, nargs=4, metavar=("X0", "X1", "Y0", "Y1"))
    p.add_argument("--circle", type=float, nargs=3, metavar=("CX", "CY", "R"))
    p.add_argument("--segment", type=float, nargs=4, metavar=("X0", "Y0", "X1", "Y1"))
    p.add_argument("--segments", type=int, default=64, help="circle polygon vertices")
    p.add_argument("--output", required=True, help="trace CSV path")
    _add_control_flags(p)
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("scan", help="grid-scan a field for degeneracies")
    p.add_argument("--field", help="demo-rankloss | demo-coalescence | ensemble")
    p.add_argument("--ensemble", nargs="*", metavar="KEY=VALUE", help="n= seed= realizations= grid=MxK")
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--realization", type=int, default=0)
    p.add_argument("--domain", type=float, nargs=4, metavar=("X0", "X1", "Y0", "Y1"))
    p.add_argument("--grid", default="128x64", help="boxes as MxK (default 128x64)")
    p.add_argument("--refine-depth", dest="refine_depth", type=int, default=1)
    p.add_argument("--confidence", type=float, default=0.9, help="sign-reading floor")
    p.add_argument("--workers", type=int, help=f"worker processes (or ${WORKERS_ENV})")
    p.add_argument("--stop-after-row", dest="stop_after_row", type=int, help="chunked runs")
    p.add_argument("--out", required=True, help="output directory")
    _add_control_flags(p)
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("fit", help="fit counts = c * n^q across scan reports")
    p.add_argument("reports", help="glob of scan report JSON files")
    p.add_argument("--kind", choices=("coalescence", "rank_loss"), default="coalescence")
    p.add_argument("--out", required=True, help="fit summary JSON path")
    p.add_argument("--csv", help="plot-ready CSV path")
    p.set_defaults(func=cmd_fit)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DegenerateInput as exc:
        print(f"degenerate input: {exc} (kind={exc.kind})", file=sys.stderr)
        return EXIT_DEGENERATE
    except (TakagiError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
