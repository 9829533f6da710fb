"""Command-line front end: generate, slice, fit, simulate, analyze, render.

Exit codes
----------
0 success, 1 invalid arguments or configuration, 2 missing input,
3 mesh error, 4 fit error, 5 grid mismatch between input contours.

File layout
-----------
``simulate --out DIR`` writes ``DIR/contour_000.csv ...``, ``ground_truth.csv``
(``index,outlier``), ``config.json`` and ``manifest.json``.
``analyze SAMPLES --out DIR`` writes ``report_{x,y,merged}.{csv,json}``,
``svg/{x,y}_{translation,amplitude,phase}.svg`` and ``manifest.json``.
Every output is listed in the manifest with its SHA-256 digest. Reports do
not contain timestamps, so re-running an analysis reproduces them byte for
byte.
"""

import argparse
import csv
import glob
import hashlib
import json
import os
import sys
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__, boxplot, fda, render, simulate
from .geometry import (
    FitError,
    FourierContourModel,
    GeometryError,
    MeshError,
    benchmark_contour,
    eval_fourier,
    extract_external_contour,
    fit_fourier,
    read_contour_csv,
    read_stl,
    resample_closed,
    rms_residual,
    slice_mesh,
    write_contour_csv,
)
from .geometry.contour import ContourLayer, atomic_write_text

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_MISSING = 2
EXIT_MESH = 3
EXIT_FIT = 4
EXIT_GRID = 5

# basis-function counts used for the four example products; a count of
# 2K + 1 means K harmonics
BASIS_PRESETS = {"gear": 81, "wheel": 149, "logo": 21, "tube": 51}
COORDINATES = ("x", "y")


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    """Provenance of one command run: what went in, what came out."""

    command: str
    config_hash: str | None = None
    seed: int | None = None
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    version: str = __version__
    started: str = ""
    finished: str = ""

    def __post_init__(self):
        if not self.started:
            self.started = _now()

    def add_input(self, path):
        self.inputs[os.path.relpath(path)] = sha256_file(path)

    def add_output(self, path, root=None):
        key = os.path.relpath(path, root) if root else os.path.basename(path)
        self.outputs[key] = sha256_file(path)

    def write(self, path):
        self.finished = _now()
        atomic_write_text(path, json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")


def _now():
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())


def _config_hash(obj):
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()


def _require_file(path):
    if not os.path.isfile(path):
        raise CliError(f"input file not found: {path}", EXIT_MISSING)


def _ensure_dir(path):
    os.makedirs(path, exist_ok=True)


def apply_thread_cap():
    """Honour ``ECM_THREADS`` as an upper bound on numba worker threads."""
    value = os.environ.get("ECM_THREADS")
    if not value:
        return
    try:
        n = int(value)
    except ValueError:
        raise CliError(f"ECM_THREADS must be a positive integer, got {value!r}", EXIT_USAGE) from None
    if n < 1:
        raise CliError(f"ECM_THREADS must be a positive integer, got {value!r}", EXIT_USAGE)
    import numba

    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


# ---------------------------------------------------------------------------
# commands


def cmd_generate(args):
    if args.shape == "benchmark":
        try:
            layer = benchmark_contour(args.z, args.grid)
        except fda.DomainError as exc:
            raise CliError(str(exc), EXIT_USAGE) from None
    else:
        if not args.model:
            raise CliError("--shape fourier needs --model <fitted model JSON>", EXIT_USAGE)
        _require_file(args.model)
        model = FourierContourModel.load(args.model)
        layer = eval_fourier(model, args.grid)
        layer = ContourLayer(args.z, layer.x, layer.y, True)
    write_contour_csv(args.out, layer)
    manifest = RunManifest("generate", _config_hash(vars(_plain(args))))
    if args.model:
        manifest.add_input(args.model)
    manifest.add_output(args.out)
    manifest.write(args.out + ".manifest.json")
    print(f"wrote {layer.grid_size} samples to {args.out}")


def cmd_slice(args):
    _require_file(args.mesh)
    try:
        mesh = read_stl(args.mesh)
        loops = slice_mesh(mesh, args.z)
        if not loops:
            raise MeshError(f"no closed loop at z={args.z}")
        layer = extract_external_contour(loops, args.grid, args.z)
    except MeshError as exc:
        raise CliError(str(exc), EXIT_MESH) from None
    except GeometryError as exc:
        raise CliError(str(exc), EXIT_MESH) from None
    write_contour_csv(args.out, layer)
    manifest = RunManifest("slice", _config_hash(vars(_plain(args))))
    manifest.add_input(args.mesh)
    manifest.add_output(args.out)
    if args.all_loops:
        stem, ext = os.path.splitext(args.out)
        for i, loop in enumerate(loops):
            path = f"{stem}_loop{i}{ext or '.csv'}"
            pts = resample_closed(loop, args.grid)
            write_contour_csv(path, ContourLayer.from_points(args.z, pts))
            manifest.add_output(path)
    manifest.write(args.out + ".manifest.json")
    print(f"{len(loops)} loop(s) at z={args.z}; external contour written to {args.out}")


def cmd_fit(args):
    _require_file(args.contour)
    if args.preset:
        K = (BASIS_PRESETS[args.preset] - 1) // 2
    elif args.K is not None:
        K = args.K
    else:
        raise CliError("give --K or --preset", EXIT_USAGE)
    try:
        layer = read_contour_csv(args.contour)
        model = fit_fourier(layer, K)
    except FitError as exc:
        raise CliError(str(exc), EXIT_FIT) from None
    except (GeometryError, fda.InvalidInputError) as exc:
        raise CliError(str(exc), EXIT_FIT) from None
    model.save(args.out)
    rms = rms_residual(model, layer)
    manifest = RunManifest("fit", _config_hash({"K": K}))
    manifest.add_input(args.contour)
    manifest.add_output(args.out)
    manifest.write(args.out + ".manifest.json")
    print(f"K={K} harmonics ({2 * K + 1} basis functions); RMS residual {rms:.6g}")


def _scenario_config(args):
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.grid is not None:
        overrides["grid_size"] = args.grid
    if args.z is not None:
        overrides["z"] = args.z
    if args.model is not None:
        overrides["model"] = args.model
    if args.n is not None:
        overrides["n_samples"] = args.n
    try:
        if args.config:
            _require_file(args.config)
            return simulate.load_config(args.config, **overrides)
        if args.preset:
            return simulate.preset(args.preset, **overrides)
        return simulate.ScenarioConfig(**overrides)
    except (simulate.ConfigError, TypeError, json.JSONDecodeError) as exc:
        raise CliError(f"invalid scenario configuration: {exc}", EXIT_USAGE) from None


def cmd_simulate(args):
    config = _scenario_config(args)
    try:
        sample = simulate.simulate(config)
    except simulate.ConfigError as exc:
        raise CliError(str(exc), EXIT_USAGE) from None
    out = args.out
    _ensure_dir(out)
    manifest = RunManifest("simulate", config.digest(), config.seed)
    if args.config:
        manifest.add_input(args.config)
    width = max(3, len(str(len(sample) - 1)))
    for i, layer in enumerate(sample.contours):
        path = os.path.join(out, f"contour_{i:0{width}d}.csv")
        write_contour_csv(path, layer)
        manifest.add_output(path, out)
    truth = "index,outlier\n" + "".join(f"{i},{int(v)}\n" for i, v in enumerate(sample.ground_truth))
    atomic_write_text(os.path.join(out, "ground_truth.csv"), truth)
    atomic_write_text(
        os.path.join(out, "config.json"), json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n"
    )
    for name in ("ground_truth.csv", "config.json"):
        manifest.add_output(os.path.join(out, name), out)
    manifest.write(os.path.join(out, "manifest.json"))
    print(f"{len(sample)} contours ({int(sample.ground_truth.sum())} outlying) written to {out}")


def _collect_contours(paths):
    files = []
    for p in paths:
        if os.path.isdir(p):
            found = sorted(glob.glob(os.path.join(p, "contour_*.csv")))
            if not found:
                raise CliError(f"no contour_*.csv files in {p}", EXIT_MISSING)
            files.extend(found)
        else:
            _require_file(p)
            files.append(p)
    return files


def _analysis_config(args):
    params = {"lambda_": 0.5, "whisker_factor": 1.5, "conservative": False}
    if args.config:
        _require_file(args.config)
        with open(args.config) as fh:
            data = json.load(fh)
        keys = {"lambda": "lambda_", "lambda_": "lambda_", "whisker_factor": "whisker_factor",
                "conservative": "conservative", "translation": "translation"}
        unknown = set(data) - set(keys)
        if unknown:
            raise CliError(f"{args.config}: unknown analysis field(s) {sorted(unknown)}", EXIT_USAGE)
        params.update({keys[k]: v for k, v in data.items()})
    if args.lambda_ is not None:
        params["lambda_"] = args.lambda_
    if args.whisker_factor is not None:
        params["whisker_factor"] = args.whisker_factor
    if args.conservative:
        params["conservative"] = True
    return boxplot.ReportConfig(**params)


def cmd_analyze(args):
    files = _collect_contours(args.samples)
    layers = []
    for path in files:
        try:
            layers.append(read_contour_csv(path))
        except (GeometryError, fda.InvalidInputError, ValueError) as exc:
            raise CliError(f"{path}: {exc}", EXIT_USAGE) from None
    sizes = [layer.grid_size for layer in layers]
    if len(set(sizes)) > 1:
        common = max(set(sizes), key=sizes.count)
        odd = [f"{p} ({s} samples)" for p, s in zip(files, sizes) if s != common]
        raise CliError(f"grid mismatch with the {common}-sample majority: " + ", ".join(odd), EXIT_GRID)
    if len(layers) < boxplot.MIN_SAMPLES:
        raise CliError(f"analysis needs at least {boxplot.MIN_SAMPLES} contours, got {len(layers)}", EXIT_USAGE)
    try:
        config = _analysis_config(args)
    except (TypeError, ValueError) as exc:
        raise CliError(f"invalid analysis configuration: {exc}", EXIT_USAGE) from None
    out = args.out
    _ensure_dir(out)
    manifest = RunManifest("analyze", _config_hash(asdict(config)))
    for path in files:
        manifest.add_input(path)
    reports = {}
    for c in COORDINATES:
        try:
            reports[c] = boxplot.full_report([getattr(layer, c) for layer in layers], config)
        except ValueError as exc:
            raise CliError(f"analysis of {c}(t) failed: {exc}", EXIT_USAGE) from None
    reports["merged"] = boxplot.merge_reports([reports[c] for c in COORDINATES])
    for name, rep in reports.items():
        for ext, text in (("csv", rep.to_csv()), ("json", rep.to_json())):
            path = os.path.join(out, f"report_{name}.{ext}")
            atomic_write_text(path, text)
            manifest.add_output(path, out)
    for path in render_reports(out):
        manifest.add_output(path, out)
    manifest.write(os.path.join(out, "manifest.json"))
    merged = reports["merged"]
    print(f"{merged.n_samples} samples; outliers: {merged.flagged() or 'none'}")
    for comp in render.COMPONENTS:
        print(f"  {comp}: {merged.flagged(comp)}")


def _read_rows(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    return {k: np.array([float(r[k]) for r in rows]) for k in boxplot.REPORT_COLUMNS}


def render_reports(report_dir):
    """Write the six coordinate/component panels; returns their paths."""
    svg_dir = os.path.join(report_dir, "svg")
    written = []
    for c in COORDINATES:
        json_path = os.path.join(report_dir, f"report_{c}.json")
        csv_path = os.path.join(report_dir, f"report_{c}.csv")
        for p in (json_path, csv_path):
            if not os.path.isfile(p):
                raise CliError(f"report not found: {p}", EXIT_MISSING)
        with open(json_path) as fh:
            report = json.load(fh)
        rows = _read_rows(csv_path)
        _ensure_dir(svg_dir)
        for comp in render.COMPONENTS:
            path = os.path.join(svg_dir, f"{c}_{comp}.svg")
            atomic_write_text(path, render.render_panel(c, comp, report, rows))
            written.append(path)
    return written


def cmd_render(args):
    if not os.path.isdir(args.reports):
        raise CliError(f"report directory not found: {args.reports}", EXIT_MISSING)
    paths = render_reports(args.reports)
    print(f"wrote {len(paths)} panels to {os.path.join(args.reports, 'svg')}")


# ---------------------------------------------------------------------------


def _plain(args):
    ns = argparse.Namespace(**{k: v for k, v in vars(args).items() if k != "func"})
    return ns


class _Parser(argparse.ArgumentParser):
    """Argument parser whose usage errors exit with ``EXIT_USAGE``."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(
        prog="ecm",
        description="Elastic contour monitoring: outlier detection for layer contours.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write the benchmark (or a Fourier model) contour")
    p.add_argument("--shape", choices=("benchmark", "fourier"), default="benchmark")
    p.add_argument("--model", help="fitted Fourier model JSON (for --shape fourier)")
    p.add_argument("--z", type=float, default=1.0, help="layer height (benchmark: in [0, 1])")
    p.add_argument("--grid", type=int, default=1024, help="number of t samples")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("slice", help="external contour of an STL mesh at a height")
    p.add_argument("mesh")
    p.add_argument("--z", type=float, required=True)
    p.add_argument("--grid", type=int, default=1024)
    p.add_argument("--out", required=True)
    p.add_argument("--all-loops", action="store_true", help="also write every loop to a suffixed file")
    p.set_defaults(func=cmd_slice)

    p = sub.add_parser("fit", help="least-squares Fourier model of a contour")
    p.add_argument("contour")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--K", type=int, help="number of harmonics")
    g.add_argument("--preset", choices=sorted(BASIS_PRESETS), help="basis size of an example product")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", help="draw a seeded sample of deformed contours")
    p.add_argument("--preset", choices=sorted(simulate.PRESETS), default=None)
    p.add_argument("--config", help="scenario JSON (a 'preset' key supplies defaults)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--grid", type=int, default=None)
    p.add_argument("--z", type=float, default=None)
    p.add_argument("--n", type=int, default=None, help="number of samples (default 150)")
    p.add_argument("--model", default=None, help="fitted Fourier model for fourier-shape presets")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="outlier reports and SVG panels for a sample")
    p.add_argument("samples", nargs="+", help="sample directory or contour files")
    p.add_argument("--config", help="analysis JSON (lambda, whisker_factor, conservative, translation)")
    p.add_argument("--lambda", dest="lambda_", type=float, default=None, help="quartile trade-off (default 0.5)")
    p.add_argument("--whisker-factor", type=float, default=None, help="whisker length in IQRs (default 1.5)")
    p.add_argument("--conservative", action="store_true", help="cut at the smaller extreme distance")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("render", help="redraw SVG panels from stored reports")
    p.add_argument("reports")
    p.set_defaults(func=cmd_render)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        apply_thread_cap()
        args.func(args)
    except CliError as exc:
        print(f"ecm {args.command}: error: {exc}", file=sys.stderr)
        return exc.code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
