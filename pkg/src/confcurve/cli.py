"""Command-line entry point.

Subcommands: ``curve``, ``study``, ``lemma1``, ``gpd-demo``. Every CSV is
accompanied by ``manifest.json`` recording the arguments needed to recreate
it. Exit codes: 0 success, 1 numerical failure, 2 usage error, 3 failed
study assertions.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from ._numeric import OptimizerError
from .asymptotics import NotConvexError, lemma1_invert
from .confidence import CalibrationError, IrregularCurveError, ModelViolationError, write_csv
from .mbc import corrected_curve, gpd_corrected_curve, median_function
from .mc import McConfig, McError, PivotCalibration, substream, tail_symmetry_study
from .models import DomainError, GpdStudy, NormalTransform, gamma_custom, get_model, load_exceedances
from .models.gpd import DEFAULT_MARGIN, DEFAULT_RATE, sample_gpd
from .studies import (
    DATA_NODE,
    MODELS_FOR_N,
    STAR_NODE,
    corrected_curve_gaps,
    exact_curves,
    ks_directed,
    mc_curves,
    median_rstar_gaps,
    rate_table,
    uniformity,
)

log = logging.getLogger("confcurve")

SEED_ENV = "CONFCURVE_SEED"
EXIT_NUMERIC, EXIT_USAGE, EXIT_ASSERT = 1, 2, 3
NUMERIC_ERRORS = (
    OptimizerError,
    McError,
    CalibrationError,
    DomainError,
    IrregularCurveError,
    ModelViolationError,
    NotConvexError,
    FloatingPointError,
)


class StudyFailure(Exception):
    def __init__(self, failed: list[str]):
        super().__init__("; ".join(failed))
        self.failed = failed


def _csv_floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _csv_ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    return int(raw) if raw else 1


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="TOML file of defaults; explicit flags win")
    p.add_argument("--seed", type=int, default=None, help=f"master seed (default ${SEED_ENV} or 1)")
    p.add_argument("--workers", type=int, default=1, help="threads; affects wall time only")
    p.add_argument("--out", type=Path, default=Path("."), help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="confcurve", description="Confidence curves with median bias correction.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    c = sub.add_parser("curve", help="write curves.csv for one data set")
    _add_common(c)
    c.add_argument("--model", required=True, choices=["normal-var", "exp-rate", "normal-transform", "expfam-custom", "gpd"])
    c.add_argument("--data", type=Path, help="one-column CSV of observations (exceedances for gpd)")
    c.add_argument("--simulate", action="store_true", help="simulate the data set")
    c.add_argument("--theta-true", type=float, default=None)
    c.add_argument("--n", type=int, default=None)
    c.add_argument("--replicates", type=int, default=None, help="Monte Carlo size (default 50000, 15000 for gpd)")
    c.add_argument("--exact", action="store_true", help="exact calibration instead of Monte Carlo")
    c.add_argument("--a", type=float, default=0.3, help="acceleration (normal-transform)")
    c.add_argument("--z0", type=float, default=0.3, help="bias constant (normal-transform)")
    c.add_argument("--phihat", type=float, default=None, help="observed estimate (normal-transform)")
    c.add_argument("--shape", type=float, default=1.0, help="gamma shape (expfam-custom)")
    c.add_argument("--lambda", dest="rate", type=float, default=DEFAULT_RATE, help="Poisson rate (gpd)")
    c.add_argument("--margin", type=float, default=DEFAULT_MARGIN, help="record margin (gpd)")
    c.add_argument("--points", type=int, default=201, help="rows in curves.csv")

    s = sub.add_parser("study", help="simulation studies and rate checks")
    _add_common(s)
    s.add_argument("--model", required=True, choices=["normal-var", "exp-rate", "normal-transform"])
    s.add_argument("--check", default="tail", help="comma list of tail,theorem2,theorem3,uniformity")
    s.add_argument("--n", type=_csv_ints, default=[10, 40, 160])
    s.add_argument("--alpha", type=_csv_floats, default=[0.1])
    s.add_argument("--theta-true", type=float, default=1.0)
    s.add_argument("--datasets", type=int, default=500, help="data sets per n for rate checks")
    s.add_argument("--replicates", type=int, default=10_000)
    s.add_argument("--a", type=float, default=0.3)
    s.add_argument("--z0", type=float, default=0.3)

    lm = sub.add_parser("lemma1", help="reflection coefficients a2.. from b3..")
    lm.add_argument("coeffs", nargs="+", help="b3 b4 ... as integers or p/q")

    r = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    r.add_argument("manifest", type=Path)
    r.add_argument("--out", type=Path, default=None, help="write outputs here instead")

    g = sub.add_parser("gpd-demo", help="GPD pipeline on synthetic exceedances")
    _add_common(g)
    g.add_argument("--shape", type=float, default=0.18)
    g.add_argument("--scale", type=float, default=0.075)
    g.add_argument("--n", type=int, default=195)
    g.add_argument("--replicates", type=int, default=15_000)
    g.add_argument("--lambda", dest="rate", type=float, default=DEFAULT_RATE)
    g.add_argument("--margin", type=float, default=DEFAULT_MARGIN)
    g.add_argument("--points", type=int, default=201)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    cfg_path = getattr(args, "config", None)
    if cfg_path is None:
        return args
    try:
        import tomllib
    except ModuleNotFoundError:  # Python < 3.11
        import tomli as tomllib
    try:
        table = tomllib.loads(cfg_path.read_text())
    except (OSError, tomllib.TOMLDecodeError) as exc:
        parser.error(f"cannot read config {cfg_path}: {exc}")
    sub = parser._subparsers._group_actions[0].choices[args.command]  # noqa: SLF001
    known = {a.dest for a in sub._actions}  # noqa: SLF001
    defaults = {k.replace("-", "_"): v for k, v in table.items()}
    unknown = set(defaults) - known
    if unknown:
        parser.error(f"unknown config keys: {sorted(unknown)}")
    for a in sub._actions:  # noqa: SLF001
        if a.dest in defaults and a.type is not None and isinstance(defaults[a.dest], str):
            defaults[a.dest] = a.type(defaults[a.dest])
        elif a.dest in defaults and a.dest == "out":
            defaults[a.dest] = Path(defaults[a.dest])
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def _manifest(args, argv, outputs, extra=None) -> dict:
    params = {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items())}
    body = {
        "tool": "confcurve",
        "version": __version__,
        "subcommand": args.command,
        "model": params.get("model"),
        "parameters": params,
        "argv": list(argv),
        "outputs": sorted(str(o) for o in outputs),
    }
    if extra:
        body.update(extra)
    return body


def _write_manifest(out: Path, body: dict) -> None:
    (out / "manifest.json").write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")


def _model_from_args(args):
    if args.model == "normal-transform":
        return NormalTransform(args.a, args.z0)
    if args.model == "expfam-custom":
        return gamma_custom(args.n or 10, args.shape)
    return get_model(args.model, n=args.n or 10)


def _read_column(path: Path) -> np.ndarray:
    return load_exceedances(path)


def cmd_curve(args, argv) -> int:
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    if args.model == "gpd":
        if args.data is None and not args.simulate:
            raise SystemExit(_usage("gpd curve needs --data or --simulate"))
        if args.data is not None:
            data = _read_column(args.data)
        else:
            data = sample_gpd(0.18, 0.075, substream(args.seed, DATA_NODE, 0), None, args.n or 195)
        if args.replicates is None:
            args.replicates = 15_000
        return _run_gpd(args, argv, GpdStudy(data, args.rate, args.margin))
    if args.replicates is None:
        args.replicates = 50_000
    model = _model_from_args(args)
    if args.model == "normal-transform":
        if args.phihat is None and not args.simulate:
            raise SystemExit(_usage("normal-transform curve needs --phihat or --simulate"))
        if args.phihat is not None:
            raw = np.array([args.phihat])
        else:
            raw = model.sample(_theta_true(args, 10.0), substream(args.seed, DATA_NODE, 0))
    elif args.data is not None:
        raw = _read_column(args.data)
        if raw.size != model.n:
            # the custom gamma's exact law is built for a fixed n
            model = gamma_custom(raw.size, args.shape) if args.model == "expfam-custom" else model.with_n(raw.size)
    elif args.simulate:
        raw = model.sample(_theta_true(args, 1.0), substream(args.seed, DATA_NODE, 0))
    else:
        raise SystemExit(_usage("curve needs --data or --simulate"))
    that = float(model.mle(raw))
    if args.exact:
        bundle = exact_curves(model, that)
    else:
        bundle = mc_curves(model, that, McConfig(args.seed, args.replicates, workers=args.workers))
    if bundle.exact is not None:
        grid = bundle.exact.quantile(np.linspace(0.005, 0.995, args.points))
    else:
        lo, hi = model.working_interval(that, 4.0)
        grid = np.linspace(lo, hi, args.points)
    path = out / "curves.csv"
    write_csv(path, bundle.table(grid))
    _write_manifest(out, _manifest(args, argv, [path], {"estimate": that}))
    log.info("wrote %s", path)
    return 0


def _theta_true(args, fallback: float) -> float:
    return fallback if args.theta_true is None else args.theta_true


def _run_gpd(args, argv, study: GpdStudy) -> int:
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    cfg = McConfig(args.seed, args.replicates, workers=args.workers)
    res = gpd_corrected_curve(study, cfg)
    top = float(res.median.table["nodes"][-1]) / 1.25
    grid = np.linspace(res.nodes[0], top, args.points)
    cc = res.uncorrected(grid)
    table = {
        "theta": grid,
        "cc": cc,
        "ccstar": res.corrected.ccstar(grid),
        "C": np.full(grid.shape, np.nan),
        "H": 0.5 * (1.0 - np.where(grid > study.p_hat, -1.0, 1.0) * cc),
        "Hstar": res.corrected.hstar(grid),
    }
    curves = out / "curves.csv"
    write_csv(curves, table)
    corrected = out / "corrected.csv"
    res.export(corrected, grid)
    median_tab = out / "median.csv"
    write_csv(median_tab, {"p": res.median.table["nodes"], "b": res.median.table["medians"]})
    interval = _level_set_or_none(res.uncorrected, 0.9)
    interval_star = _level_set_or_none(res.corrected.curve(), 0.9)
    summary = {
        "shape_hat": study.shape,
        "scale_hat": study.scale,
        "p_hat": study.p_hat,
        "bartlett": res.bartlett,
        "interval90_cc": interval,
        "interval90_ccstar": interval_star,
        "median_unbiased": res.corrected.minimizer,
        "nodes_ok": int(res.node_ok.sum()),
        "nodes": int(res.node_ok.size),
    }
    _write_manifest(out, _manifest(args, argv, [curves, corrected, median_tab], {"summary": summary}))
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def _level_set_or_none(curve, level):
    try:
        return list(curve.level_set(level))
    except OptimizerError as exc:
        log.warning("level %.2f set not reached on the simulated range: %s", level, exc)
        return None


def cmd_gpd_demo(args, argv) -> int:
    data = sample_gpd(args.shape, args.scale, substream(args.seed, DATA_NODE, 0), None, args.n)
    return _run_gpd(args, argv, GpdStudy(data, args.rate, args.margin))


def cmd_study(args, argv) -> int:
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    checks = [c.strip() for c in args.check.split(",") if c.strip()]
    valid = {"tail", "theorem2", "theorem3", "uniformity"}
    if set(checks) - valid:
        raise SystemExit(_usage(f"unknown checks {sorted(set(checks) - valid)}"))
    if args.model == "normal-transform" and set(checks) & {"theorem2", "theorem3", "tail"}:
        raise SystemExit(_usage("normal-transform supports only --check uniformity"))
    failed, outputs, report = [], [], {}

    def model_for_n(n):
        return MODELS_FOR_N[args.model](n)

    if "tail" in checks:
        cfg = McConfig(args.seed, args.replicates, workers=args.workers)

        def builder(model, that):
            key = model.n
            if key not in calibs:
                b = median_function(model)
                calibs[key] = (b, PivotCalibration.build(model, McConfig(args.seed, 50_000), target=b, node=STAR_NODE))
            b, f = calibs[key]
            return corrected_curve(model, that, b, f)

        calibs: dict = {}
        res = tail_symmetry_study(builder, model_for_n, args.theta_true, args.n, args.alpha, cfg)
        path = out / "tail.csv"
        res.export(path)
        outputs.append(path)
        report["tail"] = [
            {"n": c.n, "alpha": c.alpha, "left_miss": c.left_miss, "right_miss": c.right_miss, "se": c.se}
            for c in res.cells
        ]
        for c in res.cells:
            if not c.within():
                failed.append(f"tail n={c.n} alpha={c.alpha}: left={c.left_miss:.4f} right={c.right_miss:.4f}")
    for name, gaps, bound in (("theorem2", corrected_curve_gaps, 0.5), ("theorem3", median_rstar_gaps, 0.35)):
        if name not in checks:
            continue
        tab = rate_table(gaps, model_for_n, args.theta_true, args.n, args.datasets, args.seed)
        ns = list(tab["median_gap"])
        path = out / f"{name}.csv"
        write_csv(
            path,
            {
                "n": ns,
                "median_gap": [tab["median_gap"][n] for n in ns],
                "ratio_to_next": [tab["ratio"].get(n, np.nan) for n in ns],
            },
        )
        outputs.append(path)
        report[name] = tab
        for n, r in tab["ratio"].items():
            if not r <= bound:
                failed.append(f"{name} n={n}: ratio {r:.4f} > {bound}")
        if name == "theorem3":
            ks = ks_directed(model_for_n(args.n[0]), args.theta_true, args.replicates, args.seed)
            report["ks"] = ks
            if not ks["ks_rmedian"] < ks["ks_r"]:
                failed.append(f"theorem3 KS: r(b) {ks['ks_rmedian']:.4f} not below r {ks['ks_r']:.4f}")
    if "uniformity" in checks:
        if args.model == "normal-transform":
            model, theta = NormalTransform(args.a, args.z0), args.theta_true
        else:
            model, theta = model_for_n(args.n[0]), args.theta_true
        u = uniformity(model, theta, args.replicates, args.seed)
        report["uniformity"] = u
        path = out / "uniformity.csv"
        write_csv(path, {k: [v] for k, v in u.items()})
        outputs.append(path)
        for k in ("ks_C", "ks_ccstar"):
            if not u[k] < u["ks_critical_99"]:
                failed.append(f"uniformity {k}={u[k]:.4f} above {u['ks_critical_99']:.4f}")
        for k in ("left_miss", "right_miss"):
            if abs(u[k] - 0.05) > 3 * u["se"]:
                failed.append(f"uniformity {k}={u[k]:.4f} outside 0.05 +/- 3se")
    _write_manifest(out, _manifest(args, argv, outputs, {"report": _jsonable(report), "failed": failed}))
    print(json.dumps(_jsonable(report), indent=2, sort_keys=True))
    if failed:
        raise StudyFailure(failed)
    return 0


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def cmd_lemma1(args, argv) -> int:
    from fractions import Fraction

    try:
        b = [Fraction(c) for c in args.coeffs]
    except (ValueError, ZeroDivisionError) as exc:
        raise SystemExit(_usage(f"bad coefficient: {exc}"))
    for k, a in enumerate(lemma1_invert(b), start=2):
        print(f"a{k} = {a}")
    return 0


def _usage(msg: str) -> int:
    print(f"confcurve: error: {msg}", file=sys.stderr)
    return EXIT_USAGE


def cmd_replay(args, argv) -> int:
    try:
        recorded = json.loads(args.manifest.read_text())["argv"]
    except (OSError, ValueError, KeyError) as exc:
        raise SystemExit(_usage(f"cannot read manifest {args.manifest}: {exc}"))
    if args.out is not None:
        recorded = [*recorded, "--out", str(args.out)]
    return main(recorded)


COMMANDS = {"replay": cmd_replay, "curve": cmd_curve, "study": cmd_study, "lemma1": cmd_lemma1, "gpd-demo": cmd_gpd_demo}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    if argv[:1] == ["lemma1"] and "--" not in argv and not {"-h", "--help"} & set(argv):
        # negative rationals such as -1/3 would otherwise parse as options
        argv = ["lemma1", "--", *argv[1:]]
    try:
        args = _apply_config(parser, argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "seed", 0) is None:
        args.seed = _default_seed()
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING, format="%(levelname)s %(message)s"
    )
    try:
        return COMMANDS[args.command](args, argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except StudyFailure as exc:
        for f in exc.failed:
            print(f"FAILED {f}", file=sys.stderr)
        return EXIT_ASSERT
    except NUMERIC_ERRORS as exc:
        print(f"confcurve: numerical failure: {exc}", file=sys.stderr)
        diag = getattr(exc, "diagnostics", None)
        if diag:
            print(f"diagnostics: {diag}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
