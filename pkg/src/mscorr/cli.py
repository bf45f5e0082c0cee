"""Command-line entry point ``mscorr``.

Every subcommand prints a short human summary on stdout and, with ``--out``,
writes a JSON run report.  Errors go to stderr as ``ErrorName: message``.

Exit codes: 0 success or authentic, 2 usage or validation error, 3 rejected,
4 undecided, 5 fixed-point tolerance breach.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .arith import Op
from .costmodel import (
    PUBLISHED_FIGURES,
    ClockModel,
    CostReport,
    LatencyModel,
    adaptability_rank,
    estimate_latency,
    measured_profile_for_bands,
    paper_profile,
    single_stage_report,
    stage_cycles,
)
from .errors import MissingConfig, MscorrError
from .fixedpoint import fx_de_rgb, fx_rms
from .metrics import Metric, MetricConfig, WeightVector, image_metric
from .pipeline import AuthConfig, Decision, ReferenceStore, add_reference, authenticate, list_references
from .projection import Space, project_rgb, project_xyz, reference_white, xyz_to_lab
from .spectral import SensitivityKind, load_cube, load_sensitivities, load_spectrum

SCHEMA_VERSION = 1
EXIT_OK, EXIT_USAGE, EXIT_REJECTED, EXIT_UNDECIDED, EXIT_TOLERANCE = 0, 2, 3, 4, 5
FXP_TOLERANCE = 2.0**-8
FXP_METRICS = (Metric.RMS, Metric.DE_RGB)
FXP_RGB_MAX = 1 << 14  # random RGB channels for de-rgb trials stay well inside the accumulator

BUILTIN_TABLES = {
    "builtin:cie1931": ("cie1931_2deg_10nm.csv", SensitivityKind.CMF_XYZ),
    "builtin:camera-rgb": ("camera_rgb_10nm.csv", SensitivityKind.CAMERA_RGB),
}
METRIC_CHOICES = [m.cli_name for m in Metric]


class UsageError(MscorrError):
    pass


# ---------------------------------------------------------------------------
# helpers


def sha256_of(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


class Report:
    def __init__(self, command: str, argv: Sequence[str]) -> None:
        self.doc = {
            "schema_version": SCHEMA_VERSION,
            "tool": "mscorr",
            "tool_version": __version__,
            "command": command,
            "argv": list(argv),
            "inputs": {},
            "parameters": {},
            "results": {},
        }

    def add_input(self, role: str, path: str | Path | None) -> None:
        if path is None or str(path).startswith("builtin:"):
            if path is not None:
                self.doc["inputs"][role] = {"path": str(path), "sha256": None}
            return
        self.doc["inputs"][role] = {"path": str(path), "sha256": sha256_of(path)}

    def write(self, path: str | None) -> None:
        if path:
            with open(path, "w", encoding="utf-8") as fh:
                json.dump(self.doc, fh, indent=2, sort_keys=True, allow_nan=False)
                fh.write("\n")


def _sensitivities(spec: str, axis, kind: SensitivityKind):
    if spec in BUILTIN_TABLES:
        name, builtin_kind = BUILTIN_TABLES[spec]
        if builtin_kind is not kind:
            raise UsageError(f"{spec} holds {builtin_kind.value} data, {kind.value} needed")
        with resources.as_file(resources.files("mscorr") / "data" / name) as p:
            return load_sensitivities(p, axis, kind)
    return load_sensitivities(spec, axis, kind)


def _metric_config(args, metric: Metric, axis, report: Report, *, store_white: bool = False) -> MetricConfig:
    """Build the metric inputs a metric needs from the shared config flags."""
    cfg = MetricConfig(workers=args.workers)
    if metric is Metric.WRMS:
        if args.weights is None:
            raise MissingConfig("--weights")
        cfg = replace(cfg, weights=WeightVector.normalized(load_spectrum(args.weights, axis)))
        report.add_input("weights", args.weights)
    elif metric is Metric.DE_RGB:
        if args.sens is None:
            raise MissingConfig("--sens")
        cfg = replace(cfg, sensitivities=_sensitivities(args.sens, axis, SensitivityKind.CAMERA_RGB))
        report.add_input("sens", args.sens)
    elif metric in (Metric.DE_LAB, Metric.MV):
        if args.sens is None:
            raise MissingConfig("--sens")
        cmf = _sensitivities(args.sens, axis, SensitivityKind.CMF_XYZ)
        report.add_input("sens", args.sens)
        cfg = replace(cfg, cmf=cmf)
        if args.white is not None:
            cfg = replace(cfg, white=reference_white(cmf, load_spectrum(args.white, axis)))
            report.add_input("white", args.white)
        elif store_white:
            pass  # the stored white wins over the flat fallback
        elif args.flat_white:
            cfg = replace(cfg, white=reference_white(cmf))
        else:
            raise MissingConfig("--white")
    return cfg


def _white_params(cfg: MetricConfig) -> dict:
    if cfg.white is None:
        return {}
    return {
        "white_xyz": [cfg.white.Xn, cfg.white.Yn, cfg.white.Zn],
        "white_source": "spectrum" if cfg.white.source_spectrum is not None else "flat-255",
    }


def _parse_schedule(text: str | None) -> tuple[int, ...] | None:
    if text is None:
        return None
    try:
        return tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise UsageError(f"--schedule expects comma-separated integers, got {text!r}") from None


def _parse_meta(items: Sequence[str]) -> dict:
    meta = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise UsageError(f"--meta expects key=value, got {item!r}")
        meta[key] = value
    return meta


def _write_tri_csv(path: str, values: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "c1", "c2", "c3"])
        for y in range(values.shape[0]):
            for x in range(values.shape[1]):
                w.writerow([x, y, *(repr(float(v)) for v in values[y, x])])


def _write_pixel_csv(path: str, values: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "value"])
        for y in range(values.shape[0]):
            for x in range(values.shape[1]):
                w.writerow([x, y, repr(float(values[y, x]))])


def _cost_dict(rep: CostReport) -> dict:
    lat = rep.latency or LatencyModel()

    def stages(profile):
        return [
            {
                "op": st.op.value,
                "count": st.count,
                "numeric": st.numeric.value,
                "parallel": st.parallel,
                "name": st.name,
                "cycles": stage_cycles(st, lat),
            }
            for st in profile.stages
        ]

    return {
        "algorithm": rep.algorithm.value if isinstance(rep.algorithm, Metric) else str(rep.algorithm),
        "bands": rep.bands,
        "source": rep.source.value,
        "projection": stages(rep.projection_ops),
        "distance": stages(rep.distance_ops),
        "totals": {op.value: n for op, n in rep.totals().items()},
        "cycles": rep.cycles,
        "latency_us": rep.latency_us,
    }


def _print_cost(rep: CostReport, out) -> None:
    d = _cost_dict(rep)
    print(f"{d['algorithm']}  N={d['bands']}  source={d['source']}", file=out)
    print(f"{'phase':<11}{'op':<10}{'count':>8}  {'type':<8}{'parallel':<9}{'cycles':>7}", file=out)
    for phase in ("projection", "distance"):
        for st in d[phase]:
            par = "yes" if st["parallel"] else "no"
            print(
                f"{phase:<11}{st['op']:<10}{st['count']:>8}  {st['numeric']:<8}{par:<9}{st['cycles']:>7}",
                file=out,
            )
    totals = ", ".join(f"{n} {op}" for op, n in d["totals"].items())
    print(f"totals: {totals}", file=out)
    print(f"cycles: {d['cycles']}  latency: {d['latency_us']!r} us", file=out)


# ---------------------------------------------------------------------------
# subcommands


def cmd_project(args, report: Report) -> int:
    img = load_cube(args.input)
    report.add_input("cube", args.input)
    space = Space(args.space.upper())
    params: dict = {"space": space.value}
    if space is Space.RGB:
        sens = _sensitivities(args.sens, img.axis, SensitivityKind.CAMERA_RGB)
        tri = project_rgb(img, sens)
    else:
        cmf = _sensitivities(args.sens, img.axis, SensitivityKind.CMF_XYZ)
        white_spec = load_spectrum(args.white, img.axis) if args.white else None
        if space is Space.LAB and white_spec is None and not args.flat_white:
            raise MissingConfig("--white")
        tri, norm = project_xyz(img, cmf, white_spec)
        params["white_luminance"] = norm.white_luminance
        params["k"] = norm.k
        params["white_source"] = "spectrum" if white_spec is not None else "flat-255"
        if space is Space.LAB:
            white = reference_white(cmf, white_spec)
            params["white_xyz"] = [white.Xn, white.Yn, white.Zn]
            tri = xyz_to_lab(tri, white)
    report.add_input("sens", args.sens)
    report.add_input("white", args.white)
    _write_tri_csv(args.out, tri.values)
    report.doc["parameters"] = params
    report.doc["results"] = {
        "output_csv": args.out,
        "width": tri.width,
        "height": tri.height,
        "channel_mean": [float(v) for v in tri.values.reshape(-1, 3).mean(axis=0)],
    }
    print(f"projected {img.width}x{img.height}x{img.bands} to {space.value}: {args.out}")
    report.write(args.report)
    return EXIT_OK


def cmd_distance(args, report: Report) -> int:
    ref, cand = load_cube(args.ref), load_cube(args.cand)
    report.add_input("ref", args.ref)
    report.add_input("cand", args.cand)
    metric = Metric.parse(args.metric)
    cfg = _metric_config(args, metric, ref.axis, report)
    res = image_metric(metric, ref, cand, cfg)
    if args.pixels:
        _write_pixel_csv(args.pixels, res.per_pixel)
    report.doc["parameters"] = {"metric": metric.value, "workers": args.workers, **_white_params(cfg)}
    report.doc["results"] = {
        "aggregate": res.aggregate,
        "polarity": res.polarity.value,
        "width": ref.width,
        "height": ref.height,
        "bands": ref.bands,
        "per_pixel_min": float(res.per_pixel.min()),
        "per_pixel_max": float(res.per_pixel.max()),
        "pixels_csv": args.pixels,
    }
    print(f"{metric.cli_name}: {res.aggregate!r} ({res.polarity.value.lower()}, {ref.pixels} pixels)")
    report.write(args.out)
    return EXIT_OK


def cmd_authenticate(args, report: Report) -> int:
    store = ReferenceStore(args.store, create=False)
    cand = load_cube(args.cand)
    report.add_input("cand", args.cand)
    metric = Metric.parse(args.metric)
    ref_entry = store.get(args.ref_id)
    report.add_input("ref", store.resolve(ref_entry.cube))
    mcfg = _metric_config(args, metric, cand.axis, report, store_white=ref_entry.white is not None)
    cfg = AuthConfig(metric, args.precision, args.margin, _parse_schedule(args.schedule), mcfg)
    verdict = authenticate(store, args.ref_id, cand, cfg)
    report.doc["parameters"] = {
        "metric": metric.value,
        "precision": args.precision,
        "margin": args.margin,
        "schedule": list(cfg.schedule_for(cand.bands)),
        "workers": args.workers,
        "ref_id": args.ref_id,
    }
    report.doc["results"] = {
        "decision": verdict.decision.value,
        "polarity": verdict.polarity.value,
        "iterations": [{"bands": k, "R": r} for k, r in verdict.iterations],
        "final_R": verdict.final_R,
        "bands_final": verdict.bands_final,
    }
    for k, r in verdict.iterations:
        print(f"  {k:>4} bands: R = {r!r}")
    print(f"{verdict.decision.value} after {len(verdict.iterations)} iteration(s)")
    report.write(args.out)
    return {
        Decision.AUTHENTIC: EXIT_OK,
        Decision.REJECTED: EXIT_REJECTED,
        Decision.UNDECIDED: EXIT_UNDECIDED,
    }[verdict.decision]


def _parse_serial_ops(text: str) -> tuple[Op, int]:
    name, sep, count = text.partition(":")
    try:
        return Op(name.strip().upper()), int(count)
    except ValueError:
        raise UsageError(f"--serial-ops expects OP:COUNT such as add:400, got {text!r}") from None


def cmd_cost(args, report: Report) -> int:
    clocks = ClockModel(f_processing=args.f_processing)
    lat = LatencyModel(args.sqrt_cycles, args.cbrt_cycles, args.div_cycles)
    if args.serial_ops:
        op, count = _parse_serial_ops(args.serial_ops)
        rep = single_stage_report(op, count, parallel=False)
    else:
        if args.metric is None or args.bands is None:
            raise UsageError("cost needs --metric and --bands (or --serial-ops)")
        if args.source == "paper":
            rep = paper_profile(args.metric, args.bands)
        else:
            rep = measured_profile_for_bands(args.metric, args.bands, args.seed)
    rep = estimate_latency(rep, clocks, lat)
    rank = adaptability_rank()
    report.doc["parameters"] = {
        "clock_mhz": {
            "control": clocks.f_control,
            "acquisition": clocks.f_acquisition,
            "storage": clocks.f_storage,
            "processing": clocks.f_processing,
        },
        "extra_cycles": {"SQRT": lat.sqrt_latency, "CBRT": lat.cbrt_latency, "DIV": lat.div_latency},
        "seed": args.seed if args.source == "measured" else None,
    }
    report.doc["results"] = {
        "cost": _cost_dict(rep),
        "adaptability": {
            "published": [m.value for m in rank["published"]],
            "computed": [m.value for m in rank["computed"]],
            "scores": {m.value: s for m, s in rank["scores"].items()},
        },
        "published_figures": PUBLISHED_FIGURES,
    }
    _print_cost(rep, sys.stdout)
    print("published figures: " + "; ".join(
        f"{k}={v}" for k, v in PUBLISHED_FIGURES.items() if isinstance(v, str)
    ))
    report.write(args.out)
    return EXIT_OK


def _rel_error(fixed: float, exact: float) -> float:
    if exact == 0.0:
        return 0.0 if fixed == 0.0 else float("inf")
    return abs(fixed - exact) / exact


def fxp_trials(metric: Metric, trials: int, seed: int, bands: int, identical: bool = False) -> np.ndarray:
    """Relative errors of the fixed-point path against float on random pairs."""
    rng = np.random.default_rng(seed)
    errs = np.empty(trials)
    for t in range(trials):
        if metric is Metric.RMS:
            a = rng.integers(0, 256, size=bands)
            b = a.copy() if identical else rng.integers(0, 256, size=bands)
            exact = float(np.sqrt(np.mean((a - b).astype(np.float64) ** 2)))
            fixed = fx_rms(a, b).to_real()
        else:
            a = rng.integers(0, FXP_RGB_MAX, size=3)
            b = a.copy() if identical else rng.integers(0, FXP_RGB_MAX, size=3)
            exact = float(np.sqrt(np.sum((a - b).astype(np.float64) ** 2)))
            fixed = fx_de_rgb(a, b).to_real()
        errs[t] = _rel_error(fixed, exact)
    return errs


def cmd_fxp_compare(args, report: Report) -> int:
    metric = Metric.parse(args.metric)
    if metric not in FXP_METRICS:
        raise UsageError(f"{metric.cli_name} has no fixed-point variant (use rms or de-rgb)")
    if args.trials < 1:
        raise UsageError("--trials must be at least 1")
    errs = fxp_trials(metric, args.trials, args.seed, args.bands, args.identical)
    worst, mean = float(errs.max()), float(errs.mean())
    ok = worst <= FXP_TOLERANCE
    report.doc["parameters"] = {
        "metric": metric.value,
        "trials": args.trials,
        "seed": args.seed,
        "bands": args.bands if metric is Metric.RMS else 3,
        "identical": args.identical,
        "tolerance": FXP_TOLERANCE,
        "rgb_channel_range": [0, FXP_RGB_MAX] if metric is Metric.DE_RGB else None,
    }
    report.doc["results"] = {"max_rel_error": worst, "mean_rel_error": mean, "within_tolerance": ok}
    print(f"{metric.cli_name}: {args.trials} trials, max rel error {worst:.3e}, mean {mean:.3e}")
    report.write(args.out)
    if not ok:
        print(f"ToleranceBreach: max relative error {worst!r} exceeds 2**-8", file=sys.stderr)
        return EXIT_TOLERANCE
    return EXIT_OK


def cmd_add_reference(args, report: Report) -> int:
    store = ReferenceStore(args.store)
    entry = add_reference(store, args.id, args.cube, args.white, _parse_meta(args.meta))
    report.add_input("cube", args.cube)
    report.add_input("white", args.white)
    report.doc["results"] = {"id": entry.id, "cube": entry.cube, "white": entry.white, "meta": entry.meta}
    print(f"added {entry.id} -> {entry.cube}")
    report.write(args.out)
    return EXIT_OK


def cmd_list_references(args, report: Report) -> int:
    store = ReferenceStore(args.store, create=False)
    refs = list_references(store)
    report.doc["results"] = {
        "references": [
            {"id": r.id, "width": r.width, "height": r.height, "bands": r.bands, "meta": r.meta} for r in refs
        ]
    }
    for r in refs:
        print(f"{r.id}\t{r.width}x{r.height}\t{r.bands} bands\t{json.dumps(r.meta, sort_keys=True)}")
    report.write(args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _add_metric_config(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("metric inputs")
    g.add_argument("--weights", help="WRMS weights CSV (wavelength,value); normalized to sum 1")
    g.add_argument(
        "--sens",
        help="sensitivity CSV (wavelength,c1,c2,c3): camera RGB for de-rgb, CMF for de-lab and mv; "
        "builtin:cie1931 and builtin:camera-rgb select the bundled 10 nm tables",
    )
    g.add_argument("--white", help="reference white spectrum CSV (wavelength,value)")
    g.add_argument("--flat-white", action="store_true", help="use a flat 255 white when --white is absent")
    p.add_argument("--workers", type=_positive_int, default=1, help="threads over pixels (results do not change)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mscorr", description="Multispectral image correlation toolkit.")
    parser.add_argument("--version", action="version", version=f"mscorr {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("project", help="project a cube to RGB, XYZ or L*a*b*")
    p.add_argument("--in", dest="input", required=True, help="input cube (MSC1)")
    p.add_argument("--space", required=True, choices=["rgb", "xyz", "lab"])
    p.add_argument("--sens", required=True, help="sensitivity CSV or builtin:cie1931 / builtin:camera-rgb")
    p.add_argument("--white", help="reference white spectrum CSV")
    p.add_argument("--flat-white", action="store_true", help="accept the flat 255 white for lab")
    p.add_argument("--out", required=True, help="output CSV (x,y,c1,c2,c3)")
    p.add_argument("--report", help="JSON run report path")
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("distance", help="compare two cubes with one metric")
    p.add_argument("--ref", required=True, help="reference cube")
    p.add_argument("--cand", required=True, help="candidate cube")
    p.add_argument("--metric", required=True, choices=METRIC_CHOICES)
    _add_metric_config(p)
    p.add_argument("--pixels", help="per-pixel CSV (x,y,value)")
    p.add_argument("--out", help="JSON run report path")
    p.set_defaults(func=cmd_distance)

    p = sub.add_parser("authenticate", help="authenticate a candidate against a stored reference")
    p.add_argument("--store", required=True, help="reference store directory")
    p.add_argument("--ref-id", required=True)
    p.add_argument("--cand", required=True, help="candidate cube")
    p.add_argument("--metric", required=True, choices=METRIC_CHOICES)
    p.add_argument("--precision", type=float, required=True, help="threshold P")
    p.add_argument("--margin", type=float, default=0.0, help="half-width of the escalation band around P")
    p.add_argument("--schedule", help="ascending band counts, e.g. 16,64,256")
    _add_metric_config(p)
    p.add_argument("--out", help="JSON run report path")
    p.set_defaults(func=cmd_authenticate)

    p = sub.add_parser("cost", help="operation counts, cycles and latency of a metric")
    p.add_argument("--metric", choices=METRIC_CHOICES)
    p.add_argument("--bands", type=_positive_int, help="band count N")
    p.add_argument("--source", choices=["paper", "measured"], default="paper")
    p.add_argument("--sqrt-cycles", type=int, default=16, help="extra cycles per SQRT")
    p.add_argument("--cbrt-cycles", type=int, default=32, help="extra cycles per CBRT")
    p.add_argument("--div-cycles", type=int, default=16, help="extra cycles per DIV")
    p.add_argument("--f-processing", type=float, default=50.0, help="processing clock in MHz")
    p.add_argument("--serial-ops", help="illustrative single serial stage OP:COUNT, e.g. add:400")
    p.add_argument("--seed", type=int, default=0, help="seed for measured profiles")
    p.add_argument("--out", help="JSON run report path")
    p.set_defaults(func=cmd_cost)

    p = sub.add_parser("fxp-compare", help="fixed-point against float on random pairs")
    p.add_argument("--metric", required=True, choices=METRIC_CHOICES)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bands", type=_positive_int, default=64, help="spectrum length for rms (power of two)")
    p.add_argument("--identical", action="store_true", help="compare each random input with itself")
    p.add_argument("--out", help="JSON run report path")
    p.set_defaults(func=cmd_fxp_compare)

    p = sub.add_parser("add-reference", help="register an original cube in a store")
    p.add_argument("--store", required=True)
    p.add_argument("--id", required=True)
    p.add_argument("--cube", required=True)
    p.add_argument("--white", help="white spectrum CSV stored with the reference")
    p.add_argument("--meta", action="append", default=[], help="metadata key=value (repeatable)")
    p.add_argument("--out", help="JSON run report path")
    p.set_defaults(func=cmd_add_reference)

    p = sub.add_parser("list-references", help="list the references in a store")
    p.add_argument("--store", required=True)
    p.add_argument("--out", help="JSON run report path")
    p.set_defaults(func=cmd_list_references)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    report = Report(args.command, argv)
    try:
        return args.func(args, report)
    except MscorrError as exc:
        print(f"{exc.code}: {exc}", file=sys.stderr)
    except (ValueError, OSError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
