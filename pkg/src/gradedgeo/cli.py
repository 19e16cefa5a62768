"""Command-line front end.

Commands operate on a catalog immersion (``--catalog NAME[:key=value,...]``)
or on JSON manifold/immersion specs, and emit JSON (default) or CSV.  The
``verify`` command runs the built-in regression checks and exits nonzero on
any failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys

import numpy as np

from . import catalog
from .admissibility import VariationField, is_strongly_regular, residual
from .area import QuadratureGrid, area_degree, scaling_limit_probe
from .exprs import parse as parse_expr
from .immersion import Immersion, degree_scan, uniform_grid
from .manifold import AdaptedFrame, Manifold, MetricField
from .variation import first_variation, mean_curvature

__all__ = ["main"]


def _parse_catalog_spec(spec: str):
    if ":" not in spec:
        return spec, {}
    name, rest = spec.split(":", 1)
    params = {}
    for item in rest.split(","):
        if not item:
            continue
        if "=" not in item:
            raise SystemExit(f"bad catalog parameter {item!r} (expected key=value)")
        key, value = item.split("=", 1)
        params[key.strip()] = value.strip()
    return name, params


def _load_immersion(args) -> Immersion:
    if args.catalog:
        name, params = _parse_catalog_spec(args.catalog)
        kwargs = {}
        for key, value in params.items():
            if key in ("lam", "mu"):
                kwargs[key] = float(value)
            elif key == "metric":
                kwargs["metric"] = value
            else:
                kwargs[key] = value
        if args.metric:
            kwargs["metric"] = args.metric
        try:
            return catalog.immersion(name, **kwargs)
        except KeyError as exc:
            raise SystemExit(str(exc)) from None
    if not (args.manifold and args.immersion):
        raise SystemExit("need --catalog NAME or both --manifold FILE and --immersion FILE")
    with open(args.manifold, encoding="utf-8") as fh:
        mdata = json.load(fh)
    frame = AdaptedFrame.from_json(mdata)
    metric_spec = args.metric or mdata.get("metric", "frame-orthonormal")
    if metric_spec in ("frame-orthonormal", "euclidean"):
        metric = MetricField.from_json(json.dumps(metric_spec), frame.coords)
    elif isinstance(metric_spec, str) and metric_spec.endswith(".json"):
        with open(metric_spec, encoding="utf-8") as fh:
            metric = MetricField.from_json(fh.read(), frame.coords)
    else:
        metric = MetricField.from_json(metric_spec, frame.coords)
    mani = Manifold(frame, metric)
    with open(args.immersion, encoding="utf-8") as fh:
        idata = json.load(fh)
    comps = tuple(parse_expr(src, idata["params"]) for src in idata["components"])
    return Immersion(
        mani, idata["params"], comps, idata["domain"],
        base_coords=idata.get("base_coords"),
    )


def _parse_grid(text: str):
    try:
        return tuple(int(part) for part in text.lower().split("x"))
    except ValueError:
        raise SystemExit(f"bad --grid {text!r} (expected e.g. 64x64)") from None


def _load_field(path: str, params) -> VariationField:
    with open(path, encoding="utf-8") as fh:
        return VariationField.from_json(fh.read(), params)


def _emit(args, payload, csv_rows=None, csv_header=None):
    if args.format == "csv":
        if csv_rows is None:
            raise SystemExit("this command has no CSV form")
        buf = io.StringIO()
        writer = csv.writer(buf)
        if csv_header:
            writer.writerow(csv_header)
        writer.writerows(csv_rows)
        text = buf.getvalue()
    else:
        text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _resolve_degree(args, imm: Immersion, grid_shape=(12, 12)) -> int:
    if args.degree != "auto":
        return int(args.degree)
    return degree_scan(imm, grid_shape[: imm.m] if len(grid_shape) >= imm.m else (8,) * imm.m).degree


def cmd_degree_scan(args):
    imm = _load_immersion(args)
    shape = _parse_grid(args.grid)
    report = degree_scan(imm, shape)
    payload = {
        "degree": report.degree,
        "grid": list(report.shape),
        "singular_count": report.singular_count,
        "lsc_certificate": report.lsc_ok,
        "degrees": report.degrees.reshape(report.shape).tolist(),
    }
    rows = [
        [*map(float, pt), int(d)] for pt, d in zip(report.points, report.degrees)
    ]
    _emit(args, payload, rows, [*imm.params, "degree"])
    return 0


def cmd_area(args):
    imm = _load_immersion(args)
    shape = _parse_grid(args.grid)
    d = _resolve_degree(args, imm)
    res = area_degree(imm, d, QuadratureGrid(imm.domain, shape))
    payload = {
        "d": d,
        "value": res.value,
        "grid": list(shape),
        "metric": imm.manifold.metric.kind,
        "degree_seen": res.degree_seen,
        "divergent_by_theory": res.divergent_by_theory,
    }
    _emit(args, payload)
    return 0


def cmd_gr_limit(args):
    imm = _load_immersion(args)
    shape = _parse_grid(args.grid)
    d = _resolve_degree(args, imm)
    rs = [float(x) for x in args.r_seq.split(",")]
    probe = scaling_limit_probe(imm, d, QuadratureGrid(imm.domain, shape), rs)
    payload = {
        "d": d,
        "r": list(probe.r_values),
        "v": list(probe.values),
        "limit": probe.limit,
        "rate": probe.rate,
        "converged": probe.converged,
        "divergent": probe.divergent,
        "zero_limit": probe.zero_limit,
    }
    _emit(args, payload, list(zip(probe.r_values, probe.values)), ["r", "v"])
    return 0


def cmd_admissibility(args):
    imm = _load_immersion(args)
    d = _resolve_degree(args, imm)
    field = _load_field(args.field, imm.params)
    pts, _ = uniform_grid(imm.domain, _parse_grid(args.grid))
    rows = []
    for p in pts:
        r = residual(imm, field, p, d)
        rows.append([*map(float, p), float(np.linalg.norm(r))])
    payload = {
        "d": d,
        "frame": field.frame,
        "max_residual_norm": max(row[-1] for row in rows),
        "points": rows,
    }
    _emit(args, payload, rows, [*imm.params, "residual_norm"])
    return 0


def cmd_regularity(args):
    imm = _load_immersion(args)
    d = _resolve_degree(args, imm)
    pts, _ = uniform_grid(imm.domain, _parse_grid(args.grid))
    rows = []
    all_flags = True
    for p in pts:
        reg = is_strongly_regular(imm, p, d)
        sigma_min = min(reg.singular_values) if reg.singular_values else 0.0
        rows.append(
            {
                "point": [float(x) for x in p],
                "rank": reg.rank,
                "ell": reg.ell,
                "flag": reg.strongly_regular,
                "sigma_min": sigma_min,
            }
        )
        all_flags = all_flags and reg.strongly_regular
    payload = {"d": d, "all_strongly_regular": all_flags, "points": rows}
    csv_rows = [
        [*r["point"], r["rank"], r["ell"], int(r["flag"]), r["sigma_min"]] for r in rows
    ]
    _emit(args, payload, csv_rows, [*imm.params, "rank", "ell", "flag", "sigma_min"])
    return 0


def cmd_mean_curvature(args):
    imm = _load_immersion(args)
    d = _resolve_degree(args, imm)
    pts, _ = uniform_grid(imm.domain, _parse_grid(args.grid))
    rows = []
    for p in pts:
        mc = mean_curvature(imm, p, d)
        rows.append({"point": [float(x) for x in p], "H": [float(h) for h in mc.components]})
    payload = {"d": d, "points": rows}
    csv_rows = [[*r["point"], *r["H"]] for r in rows]
    ncomps = len(rows[0]["H"]) if rows else 0
    _emit(args, payload, csv_rows, [*imm.params, *[f"H{j+1}" for j in range(ncomps)]])
    return 0


def cmd_first_variation(args):
    imm = _load_immersion(args)
    d = _resolve_degree(args, imm)
    field = _load_field(args.field, imm.params)
    grid = QuadratureGrid(imm.domain, _parse_grid(args.grid))
    value = first_variation(imm, field, grid, d)
    payload = {"d": d, "value": value}
    if args.fd_check:
        if imm.name != "engel-graph" or field.frame != "normal":
            payload["fd_check"] = "only available for normal fields on engel-graph"
        else:
            payload["fd_check"] = "use the acceptance suite for the family oracle"
    _emit(args, payload)
    return 0


def cmd_el_residual(args):
    imm = _load_immersion(args)
    if imm.name != "engel-graph":
        raise SystemExit("el-residual expects --catalog engel-graph:theta=...")
    resid, scale = catalog.engel_el_residual_exprs(imm)
    pts, _ = uniform_grid(imm.domain, _parse_grid(args.grid))
    env = {nm: pts[:, i] for i, nm in enumerate(imm.params)}
    vals = np.broadcast_to(resid.eval(env), (pts.shape[0],))
    rows = [[*map(float, p), float(v)] for p, v in zip(pts, vals)]
    payload = {
        "d": 4,
        "max_abs_residual": float(np.max(np.abs(vals))),
        "points": rows,
    }
    _emit(args, payload, rows, [*imm.params, "residual"])
    return 0


def cmd_verify(args):
    from .verify import run_checks

    names = None
    if args.catalog and args.catalog != "all":
        names = set(args.catalog.split(","))
    results = run_checks(names)
    width = max(len(r.name) for r in results) if results else 10
    failed = 0
    lines = []
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        failed += 0 if r.passed else 1
        lines.append(f"{status}  {r.name:<{width}}  {r.detail}")
    text = "\n".join(lines) + f"\n{len(results) - failed}/{len(results)} checks passed\n"
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gradedgeo",
        description="degree-driven submanifold geometry in graded manifolds",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, grid_default="16x16"):
        p.add_argument("--catalog", help="catalog entry, e.g. engel-graph:theta=x+0.3*y")
        p.add_argument("--manifold", help="manifold JSON file")
        p.add_argument("--immersion", help="immersion JSON file")
        p.add_argument("--metric", help="frame-orthonormal | euclidean | FILE.json")
        p.add_argument("--degree", default="auto", help="degree d (default: scanned max)")
        p.add_argument("--grid", default=grid_default, help="grid, e.g. 64x64")
        p.add_argument("--output", help="output path (default stdout)")
        p.add_argument("--format", choices=("json", "csv"), default="json")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--tol", action="append", default=[], help="NAME=VALUE override")

    p = sub.add_parser("degree-scan", help="grid certificate of the degree map")
    common(p)
    p.set_defaults(fn=cmd_degree_scan)

    p = sub.add_parser("area", help="degree-d area by quadrature")
    common(p, "64x64")
    p.set_defaults(fn=cmd_area)

    p = sub.add_parser("gr-limit", help="dilated-metric scaling probe")
    common(p, "48x48")
    p.add_argument("--r-seq", default="1e-1,1e-2,1e-3,1e-4,1e-5")
    p.set_defaults(fn=cmd_gr_limit)

    p = sub.add_parser("admissibility", help="residual norms of a variation field")
    common(p, "8x8")
    p.add_argument("--field", required=True, help="variation field JSON file")
    p.set_defaults(fn=cmd_admissibility)

    p = sub.add_parser("regularity", help="strong-regularity rank test on a grid")
    common(p, "6x6")
    p.set_defaults(fn=cmd_regularity)

    p = sub.add_parser("mean-curvature", help="curvature components on a grid")
    common(p, "4x4")
    p.set_defaults(fn=cmd_mean_curvature)

    p = sub.add_parser("first-variation", help="first variation along a field")
    common(p, "48x48")
    p.add_argument("--field", required=True)
    p.add_argument("--fd-check", action="store_true")
    p.set_defaults(fn=cmd_first_variation)

    p = sub.add_parser("el-residual", help="third-order residual for ruled graphs")
    common(p, "8x8")
    p.set_defaults(fn=cmd_el_residual)

    p = sub.add_parser("verify", help="run the built-in regression checks")
    p.add_argument("--catalog", default="all", help="comma list of check names, or all")
    p.add_argument("--output")
    p.set_defaults(fn=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    raise SystemExit(main())
