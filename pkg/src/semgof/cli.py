"""Command-line interface: ``semgof test|batch|simulate|bench``.

Exit codes: 0 success, 2 input error, 3 unsupported configuration,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import statistics
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .constraints import UnsupportedConfiguration
from .cumulants import DataMatrix
from .gof import GofConfig, Method, default_method, gof_test
from .poly_test import UTestConfig
from .rank_test import CrConfig
from .simlab import ConfigError, SimConfig, default_workers, generate_h0, run_study

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_UNSUPPORTED = 3
EXIT_NUMERICAL = 4


class InputError(ValueError):
    """Unreadable or malformed input."""


# ---------------------------------------------------------------------------
# input parsing


def _split(line: str, comma: bool) -> list[str]:
    if comma:
        return [tok.strip() for tok in next(csv.reader([line]))]
    return line.split()


def _is_number(tok: str) -> bool:
    try:
        float(tok)
    except ValueError:
        return False
    return True


def parse_table(text: str, source: str = "<input>") -> DataMatrix:
    """Parse a comma- or whitespace-delimited numeric table.

    A first line with any non-numeric cell is taken as a header.  Blank
    lines and lines starting with ``#`` are skipped.  Errors name the
    1-based line and column.
    """
    lines = [(i + 1, ln) for i, ln in enumerate(text.splitlines())
             if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise InputError(f"{source}: no data")
    comma = "," in lines[0][1]
    names = None
    first = _split(lines[0][1], comma)
    if not all(_is_number(t) for t in first):
        names = first
        lines = lines[1:]
    rows = []
    width = len(names) if names is not None else None
    for lineno, ln in lines:
        toks = _split(ln, comma)
        if width is None:
            width = len(toks)
        if len(toks) != width:
            raise InputError(f"{source}: line {lineno}: expected {width} columns, found {len(toks)}")
        row = []
        for j, tok in enumerate(toks):
            try:
                v = float(tok)
            except ValueError:
                raise InputError(
                    f"{source}: line {lineno}, column {j + 1}: non-numeric value {tok!r}") from None
            if not np.isfinite(v):
                raise InputError(f"{source}: line {lineno}, column {j + 1}: non-finite value {tok!r}")
            row.append(v)
        rows.append(row)
    if not rows:
        raise InputError(f"{source}: no data rows")
    if width < 2:
        raise InputError(f"{source}: need at least 2 columns, found {width}")
    return DataMatrix(np.array(rows), tuple(names) if names else None)


def read_table(path: str | os.PathLike) -> DataMatrix:
    try:
        text = Path(path).read_text()
    except (OSError, UnicodeDecodeError) as exc:
        raise InputError(f"{path}: cannot read file ({exc})") from None
    return parse_table(text, str(path))


# ---------------------------------------------------------------------------
# helpers


def _resolve_seed(seed: int | None) -> int:
    if seed is not None:
        return seed
    return int(np.random.SeedSequence().generate_state(1)[0])


def _gof_config(args, l: int, seed: int) -> GofConfig:
    return GofConfig(
        l=l,
        method=args.method,
        alpha=args.alpha,
        seed=seed,
        cr=CrConfig(bootstrap_reps=args.bootstrap_reps, mc_draws=args.mc_draws),
        ustat=UTestConfig(budget_N=args.budget, bootstrap_reps=args.bootstrap_reps * 2),
        standardize=not args.no_standardize,
    )


def _manifest(command: str, config: dict, seed, timings: dict | None) -> dict:
    out = {"command": command, "version": __version__, "config": config, "seed": seed}
    if timings is not None:
        out["timings_ms"] = timings
    return out


def _write(text: str, path: str | None):
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _add_test_options(p: argparse.ArgumentParser):
    p.add_argument("--method", default=None,
                   help="cr_only, cr_plus_second or ustat_all (default depends on p)")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--bootstrap-reps", type=int, default=500)
    p.add_argument("--mc-draws", type=int, default=100_000)
    p.add_argument("--budget", type=float, default=None,
                   help="U-statistic computational budget N (default 2n)")
    p.add_argument("--no-standardize", action="store_true",
                   help="use raw instead of unit-variance cumulants")


def _parse_latents(text: str) -> list[int]:
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise InputError(f"--latents: expected comma-separated integers, got {text!r}") from None
    if not vals or any(v < 0 for v in vals):
        raise InputError("--latents: need non-negative integers")
    return vals


# ---------------------------------------------------------------------------
# commands


def cmd_test(args) -> int:
    data = read_table(args.file)
    seed = _resolve_seed(args.seed)
    cfg = _gof_config(args, args.latents, seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = gof_test(data, cfg)
    if args.json:
        out = res.to_dict(timings=args.timings)
        _write(json.dumps(out, indent=2) + "\n", args.output)
    else:
        lines = [f"file: {args.file}", f"n = {data.n}, p = {data.p}, l = {args.latents}",
                 f"method: {res.method.value}", f"seed: {seed}"]
        for c in res.conditions:
            lines.append(f"  {c['condition']}: statistic {c['statistic']:.6g}, "
                         f"p-value {c['p_value']:.4g}")
        for w in res.warnings:
            lines.append(f"warning: {w}")
        if args.timings:
            lines.append(f"time: {res.timings_ms['total']:.1f} ms")
        lines.append(f"p-value: {res.p_value:.4g}")
        lines.append(f"{res.decision.upper()} at alpha={res.alpha:g}")
        _write("\n".join(lines) + "\n", args.output)
    if args.manifest:
        man = _manifest("test", {"file": str(args.file), **_config_echo(cfg)}, seed,
                        {"total": round(res.timings_ms["total"], 3)} if args.timings else None)
        Path(args.manifest).write_text(json.dumps(man, indent=2) + "\n")
    return EXIT_OK


def _config_echo(cfg: GofConfig) -> dict:
    return {
        "l": cfg.l,
        "method": cfg.method.value if cfg.method else None,
        "alpha": cfg.alpha,
        "cr": asdict(cfg.cr),
        "ustat": asdict(cfg.ustat),
        "standardize": cfg.standardize,
    }


def classify(p_values: dict[int, float | None], alpha: float) -> str:
    """Sequential rule: the first accepted latent count names the class."""
    for l in sorted(p_values):
        pv = p_values[l]
        if pv is None:
            continue
        if pv >= alpha:
            if l == 0:
                return "linear"
            return "linear+confounder" if l == 1 else f"linear+{l}confounders"
    return "nonlinear"


def _batch_one(job):
    path, latents, opts, seed = job
    row = {"file": path.name, "n": "", "p": ""}
    try:
        data = read_table(path)
    except InputError as exc:
        row["error"] = str(exc)
        return row
    row["n"], row["p"] = data.n, data.p
    pvals = {}
    errors = []
    for j, l in enumerate(latents):
        ns = argparse.Namespace(**opts)
        sub = int(np.random.SeedSequence(seed, spawn_key=(j,)).generate_state(1)[0])
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                pvals[l] = gof_test(data, _gof_config(ns, l, sub)).p_value
        except UnsupportedConfiguration as exc:
            pvals[l] = None
            errors.append(f"l={l}: unsupported ({exc})")
        except Exception as exc:
            pvals[l] = None
            errors.append(f"l={l}: {type(exc).__name__}: {exc}")
    for l in latents:
        row[f"p_value_l{l}"] = "" if pvals[l] is None else f"{pvals[l]:.6g}"
    if all(v is None for v in pvals.values()):
        row["class"] = ""
    else:
        row["class"] = classify(pvals, opts["alpha"])
    row["error"] = "; ".join(errors)
    return row


def cmd_batch(args) -> int:
    latents = _parse_latents(args.latents)
    root = Path(args.dir)
    if not root.is_dir():
        raise InputError(f"{root}: not a directory")
    files = sorted(p for p in root.iterdir() if p.is_file() and not p.name.startswith("."))
    seed = _resolve_seed(args.seed)
    opts = {k: getattr(args, k) for k in ("method", "alpha", "bootstrap_reps", "mc_draws",
                                          "budget", "no_standardize")}
    jobs = [(f, latents, opts, int(np.random.SeedSequence(seed, spawn_key=(i,)).generate_state(1)[0]))
            for i, f in enumerate(files)]
    workers = args.workers or default_workers()
    t0 = time.perf_counter()
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_batch_one, jobs))
    else:
        rows = [_batch_one(j) for j in jobs]
    elapsed = 1e3 * (time.perf_counter() - t0)
    cols = ["file", "n", "p"] + [f"p_value_l{l}" for l in latents] + ["class", "error"]
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n", restval="")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    _write(buf.getvalue(), args.output)
    for r in rows:
        if r.get("error"):
            print(f"semgof batch: {r['file']}: {r['error']}", file=sys.stderr)
    if args.manifest:
        man = _manifest("batch", {"dir": str(root), "latents": latents, **opts}, seed,
                        {"total": round(elapsed, 3)})
        Path(args.manifest).write_text(json.dumps(man, indent=2) + "\n")
    return EXIT_OK


def load_study_config(path) -> tuple[SimConfig, list[GofConfig]]:
    """Read a study config: simulation fields plus ``methods`` and test tuning."""
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise InputError(f"{path}: cannot read file ({exc})") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "expected a JSON object")
    raw = dict(raw)
    methods = raw.pop("methods", ["cr_only"])
    alpha = raw.pop("alpha", 0.05)
    cr = raw.pop("cr", {})
    ustat = raw.pop("ustat", {})
    standardize = raw.pop("standardize", True)
    sim = SimConfig.from_dict(raw)
    if not isinstance(methods, list) or not methods:
        raise ConfigError("methods", "must be a non-empty list")
    gofs = []
    for i, m in enumerate(methods):
        try:
            method = Method.parse(m)
        except ValueError as exc:
            raise ConfigError(f"methods[{i}]", str(exc)) from None
        if method is Method.USTAT_ALL and not (sim.l_tested == 0 and sim.p in (2, 3)):
            raise ConfigError(f"methods[{i}]", "ustat_all needs l_tested = 0 and p in {2, 3}")
        try:
            gofs.append(GofConfig(l=sim.l_tested, method=method, alpha=alpha,
                                  cr=CrConfig(**cr), ustat=UTestConfig(**ustat),
                                  standardize=bool(standardize)))
        except (TypeError, ValueError) as exc:
            raise ConfigError("cr/ustat/alpha", str(exc)) from None
    return sim, gofs


def cmd_simulate(args) -> int:
    sim, gofs = load_study_config(args.config)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{args.name}.csv"
    man_path = out / f"{args.name}.manifest.json"
    res = run_study(sim, gofs, csv_path, man_path, workers=args.workers)
    n_fail = len(res.manifest["failures"])
    print(f"wrote {csv_path} and {man_path}" + (f" ({n_fail} failed replications)" if n_fail else ""))
    return EXIT_OK


def cmd_bench(args) -> int:
    ps = _parse_latents(args.p)
    methods = [Method.parse(m) for m in args.methods.split(",")] if args.methods else None
    seed = _resolve_seed(args.seed)
    rows = []
    for p in ps:
        for method in methods or [default_method(p)]:
            if method is Method.USTAT_ALL and p not in (2, 3):
                continue
            times = []
            for r in range(args.reps):
                ss = np.random.SeedSequence(seed, spawn_key=(p, r))
                data = generate_h0(SimConfig(p=p, n=args.n), ss)
                cfg = GofConfig(l=0, method=method, seed=int(ss.generate_state(1)[0]))
                t0 = time.perf_counter()
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    gof_test(data, cfg)
                times.append(1e3 * (time.perf_counter() - t0))
            rows.append((method.value, p, args.n, args.reps,
                         statistics.fmean(times), statistics.median(times)))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "p", "n", "reps", "mean_ms", "median_ms"])
    for m, p, n, reps, mean, med in rows:
        w.writerow([m, p, n, reps, f"{mean:.3f}", f"{med:.3f}"])
    _write(buf.getvalue(), args.output)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="semgof",
        description="Goodness-of-fit tests for linear non-Gaussian structural equation models.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("test", help="test one data file")
    t.add_argument("file")
    t.add_argument("-l", "--latents", type=int, default=0, help="number of latent confounders")
    _add_test_options(t)
    t.add_argument("--json", action="store_true", help="emit a JSON report")
    t.add_argument("--timings", action="store_true", help="include wall-clock timings")
    t.add_argument("-o", "--output", default=None)
    t.add_argument("--manifest", default=None, help="write a run manifest to this path")
    t.set_defaults(func=cmd_test)

    b = sub.add_parser("batch", help="classify every data file in a directory")
    b.add_argument("dir")
    b.add_argument("--latents", default="0,1", help="comma-separated latent counts, tried in order")
    _add_test_options(b)
    b.add_argument("--workers", type=int, default=None, help="parallel processes (env SEMGOF_WORKERS)")
    b.add_argument("-o", "--output", default=None)
    b.add_argument("--manifest", default=None)
    b.set_defaults(func=cmd_batch)

    s = sub.add_parser("simulate", help="run a size/power study from a JSON config")
    s.add_argument("config")
    s.add_argument("--out-dir", default=".")
    s.add_argument("--name", default="study")
    s.add_argument("--workers", type=int, default=None)
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("bench", help="time the tests on simulated data")
    c.add_argument("--p", default="2,4", help="comma-separated dimensions")
    c.add_argument("--reps", type=int, default=20)
    c.add_argument("--n", type=int, default=1000)
    c.add_argument("--methods", default="cr_only")
    c.add_argument("--seed", type=int, default=None)
    c.add_argument("-o", "--output", default=None)
    c.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UnsupportedConfiguration as exc:
        print(f"semgof: unsupported configuration: {exc}", file=sys.stderr)
        return EXIT_UNSUPPORTED
    except (InputError, ConfigError) as exc:
        print(f"semgof: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (FloatingPointError, np.linalg.LinAlgError, RuntimeError) as exc:
        print(f"semgof: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"semgof: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
