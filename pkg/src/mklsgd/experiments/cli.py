"""Command-line entry point: ``python -m mklsgd <command>``.

Commands::

    sweep         grid sweep from a config file, CSV records + summary
    landscape     surrogate scan along a segment, CSV + stationary points
    theory-check  bound checks and the one-step inequality along a run, JSON
    classify      label-noise classification benchmark, CSV
    probabilities rank selection probabilities as exact fractions

Exit status: 0 success, 1 usage or config error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from typing import Optional

import numpy as np

from .. import datagen, theory
from .._io import atomic_open, write_text
from ..losses import Dataset, DegenerateProblemError, InvalidInputError, dataset_constants
from ..optimizer import OptimizerConfig, default_step_size, run
from ..sampling import SelectionScheme, UnsupportedClosedFormError, rank_fractions
from ..surrogate import ScanTable, find_stationary_point, scan_line
from . import classify as classify_mod
from . import sweep as sweep_mod
from .config import ConfigError, ConfigFile, build_spec, parse_list, parse_seeds

GENERATORS = {"regression": datagen.gen_regression, "quadratic": datagen.gen_quadratic_ensemble,
              "classification": datagen.gen_classification}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _dataset_from(cfg: Optional[ConfigFile], dataset_path: Optional[str], seed: Optional[int]) -> Dataset:
    if dataset_path:
        return datagen.load_dataset(dataset_path)
    if cfg is None or not cfg.has("problem"):
        raise ConfigError("need a [problem] section or --dataset", getattr(cfg, "path", None))
    kind = cfg.get("problem", "kind", "quadratic", kind=str)
    if kind not in GENERATORS:
        raise cfg.error(f"unknown problem kind {kind!r}", "problem", "kind")
    spec = build_spec(_without_kind(cfg), kind, seed=seed)
    return GENERATORS[kind](spec)


class _without_kind:
    """View of a config whose [problem] section hides the ``kind`` key."""

    def __init__(self, cfg):
        self._cfg = cfg
        self.path = cfg.path

    def items(self, section):
        items = self._cfg.items(section)
        if section == "problem":
            items.pop("kind", None)
        return items

    def __getattr__(self, name):
        return getattr(self._cfg, name)


def _vector(cfg, section, key, dim, default):
    val = cfg.get(section, key, None)
    if val is None:
        return default
    arr = np.atleast_1d(np.asarray(val, dtype=float))
    if arr.shape != (dim,):
        raise cfg.error(f"{key} must have {dim} entries", section, key)
    return arr


def _json_dump(obj, path):
    text = json.dumps(theory._jsonable(obj), indent=2, sort_keys=True) + "\n"
    write_text(path, text)


def _out_path(args, cfg, section, stdout_ok=False):
    out = args.out or (cfg.get(section, "out", None, kind=str) if cfg else None)
    if out is None and not stdout_ok:
        raise UsageError("no output path: pass --out or set out in the config")
    return out


def _load(args, schema) -> Optional[ConfigFile]:
    if args.config is None:
        return None
    return ConfigFile(args.config, schema)


# -- commands ---------------------------------------------------------------

SWEEP_SCHEMA = {"sweep": {"seeds", "out", "workers"}, "problem": None, "grid": None,
                "optimizer": {f for f in sweep_mod.OptimizerDefaults.__dataclass_fields__}}


def cmd_sweep(args) -> int:
    cfg = ConfigFile(args.config, SWEEP_SCHEMA)
    kind = cfg.get("problem", "kind", "regression", kind=str)
    if kind not in sweep_mod.PROBLEMS:
        raise cfg.error(f"sweeps support {sorted(sweep_mod.PROBLEMS)}, got {kind!r}", "problem", "kind")
    allowed = {f for f in sweep_mod.PROBLEMS[kind][0].__dataclass_fields__} - {"seed"}
    base = {}
    for key in cfg.items("problem"):
        if key == "kind":
            continue
        if key not in allowed:
            raise cfg.error(f"unknown {kind} field {key!r}", "problem", key)
        base[key] = cfg.get("problem", key)
    grid = {}
    for key in cfg.items("grid"):
        if key not in allowed and key not in sweep_mod.OPTIMIZER_AXES:
            raise cfg.error(f"unknown grid axis {key!r}", "grid", key)
        grid[key] = cfg.get("grid", key, kind=parse_list)
    if not grid:
        raise ConfigError("[grid] needs at least one axis", cfg.path, cfg.line("grid"))
    opt = sweep_mod.OptimizerDefaults(**{k: cfg.get("optimizer", k) for k in cfg.items("optimizer")})
    seeds = (args.seed,) if args.seed is not None else cfg.get("sweep", "seeds", tuple(range(21)), kind=parse_seeds)
    workers = args.workers or cfg.get("sweep", "workers", 1)
    out = _out_path(args, cfg, "sweep")
    try:
        config = sweep_mod.SweepConfig(problem=kind, base=base, grid=grid, seeds=seeds, optimizer=opt,
                                       out=out, workers=workers)
    except InvalidInputError as exc:
        raise ConfigError(str(exc), cfg.path) from None
    records = sweep_mod.run_sweep(config)
    paths = sweep_mod.write_sweep(records, config, out)
    n_div = sum(not r.converged for r in records)
    print(f"{len(records)} runs, {n_div} diverged -> {paths['records']}")
    for s in sweep_mod.summarize(records):
        coords = " ".join(f"{k}={v}" for k, v in s.coords.items())
        print(f"{coords}  median={s.median:.6g} mean={s.mean:.6g} n={s.count}")
    return 0


LANDSCAPE_KEYS = {"a", "b", "grid_points", "k", "replacement", "out"}
THEORY_KEYS = {"k", "steps", "eta", "init", "replacement", "out", "record_every"}
# one file may describe a problem for both commands; each still checks the other's keys
LANDSCAPE_SCHEMA = {"problem": None, "landscape": LANDSCAPE_KEYS, "theory": THEORY_KEYS}
THEORY_SCHEMA = {"problem": None, "theory": THEORY_KEYS, "landscape": LANDSCAPE_KEYS}


def cmd_landscape(args) -> int:
    cfg = _load(args, LANDSCAPE_SCHEMA)
    ds = _dataset_from(cfg, args.dataset, args.seed)
    get = (lambda key, default: cfg.get("landscape", key, default)) if cfg else (lambda key, default: default)
    k = args.k or get("k", 2)
    scheme = SelectionScheme.mkl(int(k), bool(get("replacement", True)))
    if ds.n_outliers:
        b_default = ds.X[np.flatnonzero(ds.outliers)[0]] if ds.kind == "quadratic" else ds.target + 1.0
    else:
        b_default = ds.target + 1.0
    a = _vector(cfg, "landscape", "a", ds.dim, ds.target) if cfg else ds.target
    b = _vector(cfg, "landscape", "b", ds.dim, b_default) if cfg else b_default
    table = scan_line(ds, a, b, int(args.grid_points or get("grid_points", 201)), scheme)
    out = _out_path(args, cfg, "landscape")
    with atomic_open(out, newline="") as fh:
        fh.write(sweep_mod.header_line("landscape"))
        fh.write(",".join(ScanTable.COLUMNS) + "\n")
        for t, v, dv, sig in table.rows():
            fh.write(f"{float(t)!r},{float(v)!r},{float(dv)!r},{sig}\n")
    reports = {name: find_stationary_point(ds, start, scheme) for name, start in (("from_a", a), ("from_b", b))}
    stem = out[:-4] if out.endswith(".csv") else out
    _json_dump({name: {"point": r.point, "surrogate_gradient_norm": r.surrogate_gradient_norm,
                       "converged": r.converged, "top_ranks_clean": r.top_ranks_clean,
                       "iterations": r.iterations, "ordering_signature": r.ordering_at_point.signature}
                for name, r in reports.items()}, stem + ".stationary.json")
    print(f"{len(table.t)} points, {len(table.flips())} ordering changes -> {out}")
    return 0




def _initial_point(ds, init, cfg):
    if init == "target":
        return ds.target.copy()
    if init == "zeros":
        return np.zeros(ds.dim)
    if init == "sgd":
        return theory.sgd_stationary_point(ds)
    raise cfg.error(f"init must be target, zeros or sgd, got {init!r}", "theory", "init")


def cmd_theory_check(args) -> int:
    cfg = _load(args, THEORY_SCHEMA)
    ds = _dataset_from(cfg, args.dataset, args.seed)
    get = (lambda key, default: cfg.get("theory", key, default)) if cfg else (lambda key, default: default)
    k = int(args.k or get("k", 2))
    scheme = SelectionScheme.mkl(k, bool(get("replacement", True)))
    c = dataset_constants(ds)
    if c.degenerate:
        raise DegenerateProblemError("clean average is not strongly convex; bounds are undefined")
    sgd_pt = theory.sgd_stationary_point(ds)
    mkl_pt = find_stationary_point(ds, ds.target, scheme)
    report = theory.check_bounds(sgd_pt, mkl_pt.point, ds, k, scheme=scheme)
    eta = get("eta", None)
    eta = default_step_size(ds) if eta is None else float(eta)
    steps = int(get("steps", 100))
    w0 = _initial_point(ds, get("init", "zeros"), cfg) if cfg else np.zeros(ds.dim)
    traj = run(ds, OptimizerConfig(scheme, step_size=eta, max_steps=steps,
                                   seed=args.seed if args.seed is not None else 0,
                                   record_every=int(get("record_every", 1))), w0)
    step_reports = [theory.exact_expected_step(ds, w, eta, scheme) for w in traj.iterates[:-1]]
    payload = {
        "dataset": {"kind": ds.kind, "n": ds.n, "dim": ds.dim, "n_outliers": ds.n_outliers, "epsilon": ds.epsilon},
        "constants": {"L": c.L, "lambda_good": c.lambda_good, "lambda_F": c.lambda_F, "G": c.G, "kappa": c.kappa},
        "p_hat_max": theory.p_hat_max(ds.n, ds.n_outliers, scheme),
        "stationary": {"sgd": sgd_pt, "mkl": mkl_pt.point, "mkl_converged": mkl_pt.converged},
        "bounds": report.to_dict(),
        "skipped": report.skipped,
        "violations": report.violations,
        "step_size": eta,
        "steps": [dict(step=int(s), **r.to_dict()) for s, r in zip(traj.steps[:-1], step_reports)],
        "all_steps_hold": all(r.holds for r in step_reports if r.applicable),
    }
    out = _out_path(args, cfg, "theory")
    _json_dump(payload, out)
    print(f"bounds violated: {report.violations or 'none'}; skipped: {report.skipped or 'none'}; "
          f"step inequality holds at all {len(step_reports)} steps: {payload['all_steps_hold']} -> {out}")
    return 0


CLASSIFY_SCHEMA = {"problem": None, "grid": {"epsilon"},
                   "classify": {"seeds", "steps", "eta", "k", "alpha", "out"}}


def cmd_classify(args) -> int:
    cfg = _load(args, CLASSIFY_SCHEMA)
    if cfg is not None:
        spec = build_spec(_without_kind(cfg), "classification")
        get = lambda key, default, kind=None: cfg.get("classify", key, default, **({"kind": kind} if kind else {}))
        eps_list = cfg.get("grid", "epsilon", None, kind=parse_list)
    else:
        spec = datagen.ClassificationSpec()
        get = lambda key, default, kind=None: default
        eps_list = None
    if args.epsilon is not None:
        eps_list = [args.epsilon]
    eps_list = eps_list or [spec.epsilon]
    seeds = (args.seed,) if args.seed is not None else get("seeds", tuple(range(5)), parse_seeds)
    opts = classify_mod.default_optimizers(int(get("k", 10)), float(get("alpha", 0.5)))
    tables = []
    for eps in eps_list:
        try:
            sp = replace(spec, epsilon=float(eps))
        except InvalidInputError as exc:
            raise ConfigError(str(exc), getattr(cfg, "path", None)) from None
        tables.append(classify_mod.classification_benchmark(
            sp, opts, seeds, steps=int(get("steps", classify_mod.DEFAULT_STEPS)),
            eta=float(get("eta", classify_mod.DEFAULT_ETA))))
    out = _out_path(args, cfg, "classify")
    stem = out[:-4] if out.endswith(".csv") else out
    for path, kind, body in ((out, "classify", classify_mod.table_csv(tables)),
                             (stem + ".series.csv", "series", classify_mod.series_csv(tables))):
        with atomic_open(path, newline="") as fh:
            fh.write(sweep_mod.header_line(kind))
            fh.write(body)
    for t in tables:
        for eps, name, m, sd, trl, tel in t.rows():
            print(f"eps={eps:g} {name:>7s}  acc {100 * m:6.2f} +- {100 * sd:4.2f}  train {trl:.4f}  test {tel:.4f}")
    return 0


def cmd_probabilities(args) -> int:
    scheme = SelectionScheme.mkl(args.k, replacement=not args.without_replacement)
    fracs = rank_fractions(args.n, scheme)
    lines = [f"{i}\t{a}/{b}\t{a / b!r}" for i, (a, b) in enumerate(fracs, start=1)]
    print(" ".join(f"{a}/{b}" for a, b in fracs))
    print("rank\tfraction\tprobability")
    print("\n".join(lines))
    if args.out:
        with atomic_open(args.out, newline="") as fh:
            fh.write("rank,numerator,denominator,probability\n")
            for i, (a, b) in enumerate(fracs, start=1):
                fh.write(f"{i},{a},{b},{a / b!r}\n")
    return 0


# -- entry point ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mklsgd", description="Min-k-loss SGD experiments and checks.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, config_required=False):
        sp.add_argument("--config", required=config_required, help="INI config file")
        sp.add_argument("--seed", type=int, help="problem/optimizer seed (sweep, classify: run only this seed)")
        sp.add_argument("--out", help="output path (overrides the config)")

    s = sub.add_parser("sweep", help="grid sweep from a config file")
    common(s, config_required=True)
    s.add_argument("--workers", type=int, help="worker processes")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("landscape", help="scan the surrogate along a segment")
    common(s)
    s.add_argument("--dataset", help="saved dataset CSV instead of [problem]")
    s.add_argument("--k", type=int)
    s.add_argument("--grid-points", type=int)
    s.set_defaults(func=cmd_landscape)

    s = sub.add_parser("theory-check", help="bounds and the one-step inequality as JSON")
    common(s)
    s.add_argument("--dataset", help="saved dataset CSV instead of [problem]")
    s.add_argument("--k", type=int)
    s.set_defaults(func=cmd_theory_check)

    s = sub.add_parser("classify", help="label-noise classification benchmark")
    common(s)
    s.add_argument("--epsilon", type=float, help="single corruption level")
    s.set_defaults(func=cmd_classify)

    s = sub.add_parser("probabilities", help="rank selection probabilities")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--k", type=int, required=True)
    g = s.add_mutually_exclusive_group()
    g.add_argument("--with-replacement", action="store_true", default=True)
    g.add_argument("--without-replacement", action="store_true")
    s.add_argument("--out", help="also write a CSV table")
    s.set_defaults(func=cmd_probabilities)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except (ConfigError, InvalidInputError, UnsupportedClosedFormError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DegenerateProblemError, np.linalg.LinAlgError, FloatingPointError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
