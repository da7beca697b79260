"""Data generators and size/power studies for the goodness-of-fit tests.

Models follow the usual linear SEM recipe: off-diagonal entries of
``Lambda`` and all entries of ``Gamma`` are uniform on ``[-1, 1]``; sources
are centered Gamma variables (shape ~ U[2, 3], rate ~ U[1, 5]) or Gaussian
variables with standard deviation ~ U[1/2, 2].  A fresh model is drawn for
every replication.

Replication ``r`` always uses the seed stream ``(seed, r)``, independent of
the alternative's ``delta`` and of the tested methods, so all curves of a
study are computed from common random numbers.
"""

from __future__ import annotations

import csv
import io
import json
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .cumulants import DataMatrix, SemModel, gamma_cumulants
from .gof import GofConfig, default_method, gof_test

MAX_REDRAWS = 100
COND_LIMIT = 1e8
CSV_COLUMNS = ("method", "p", "l", "n", "delta", "alternative",
               "rejections", "reps", "rate", "se", "seed")


class ConfigError(ValueError):
    """Invalid simulation configuration; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class SimConfig:
    """A simulation design.

    ``l_true`` defaults to ``l_tested`` (one more for ``alternative="a2"``).
    """

    p: int = 2
    l_tested: int = 0
    l_true: int | None = None
    n: int = 1000
    replications: int = 200
    deltas: tuple[float, ...] = (0.0,)
    alternative: str = "h0"
    noise: str = "gamma"
    seed: int = 0
    coef_bound: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "deltas", tuple(float(d) for d in self.deltas))
        if self.l_true is None:
            object.__setattr__(self, "l_true",
                               self.l_tested + (1 if self.alternative == "a2" else 0))
        self.validate()

    def validate(self):
        if self.p < 2:
            raise ConfigError("p", "must be at least 2")
        if self.l_tested < 0 or self.l_true < 0:
            raise ConfigError("l_tested", "latent counts must be non-negative")
        if self.n < 10:
            raise ConfigError("n", "must be at least 10")
        if self.replications < 1:
            raise ConfigError("replications", "must be at least 1")
        if self.noise not in ("gamma", "gaussian"):
            raise ConfigError("noise", "must be 'gamma' or 'gaussian'")
        if self.alternative not in ("h0", "a1", "a2"):
            raise ConfigError("alternative", "must be 'h0', 'a1' or 'a2'")
        if not self.deltas:
            raise ConfigError("deltas", "need at least one value")
        lo, hi = {"h0": (0.0, 0.0), "a1": (0.0, 1.0), "a2": (0.0, 5.0)}[self.alternative]
        for d in self.deltas:
            if not lo <= d <= hi:
                raise ConfigError("deltas", f"delta={d} outside [{lo}, {hi}] for {self.alternative}")
        if self.alternative == "a2" and self.l_true != self.l_tested + 1:
            raise ConfigError("l_true", "alternative a2 needs l_true = l_tested + 1")
        if self.alternative != "a2" and self.l_true != self.l_tested:
            raise ConfigError("l_true", "only alternative a2 may use l_true != l_tested")
        if self.coef_bound <= 0:
            raise ConfigError("coef_bound", "must be positive")

    @classmethod
    def from_dict(cls, d: Mapping) -> "SimConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ConfigError(sorted(extra)[0], "unknown field")
        kwargs = dict(d)
        if "deltas" in kwargs:
            if not isinstance(kwargs["deltas"], (list, tuple)):
                raise ConfigError("deltas", "must be a list of numbers")
            try:
                kwargs["deltas"] = tuple(float(x) for x in kwargs["deltas"])
            except (TypeError, ValueError):
                raise ConfigError("deltas", "must be a list of numbers") from None
        for name in ("p", "l_tested", "n", "replications", "seed"):
            if name in kwargs and not isinstance(kwargs[name], int):
                raise ConfigError(name, "must be an integer")
        return cls(**kwargs)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["deltas"] = list(self.deltas)
        return out


@dataclass(frozen=True, eq=False)
class DrawnModel:
    """A random SEM together with its source laws."""

    model: SemModel
    noise: str
    params: np.ndarray
    redraws: int

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """``n`` observations; sources are centered before mixing."""
        k = self.params.shape[0]
        if self.noise == "gamma":
            shape, rate = self.params[:, 0], self.params[:, 1]
            eta = rng.gamma(shape, 1.0 / rate, size=(n, k)) - shape / rate
        else:
            eta = rng.standard_normal((n, k)) * self.params[:, 0]
        return eta @ self.model.mixing_matrix().T


def draw_model(p: int, l: int, noise: str, rng: np.random.Generator,
               coef_bound: float = 1.0, max_order: int = 6) -> DrawnModel:
    """Random SEM; ``Lambda`` is redrawn while ``I - Lambda`` is ill-conditioned."""
    redraws = 0
    while True:
        lam = rng.uniform(-coef_bound, coef_bound, size=(p, p))
        np.fill_diagonal(lam, 0.0)
        if np.linalg.cond(np.eye(p) - lam) < COND_LIMIT:
            break
        redraws += 1
        if redraws > MAX_REDRAWS:
            raise ConfigError("p", f"more than {MAX_REDRAWS} singular coefficient draws")
    gam = rng.uniform(-coef_bound, coef_bound, size=(l, p))
    k = p + l
    if noise == "gamma":
        params = np.column_stack([rng.uniform(2, 3, k), rng.uniform(1, 5, k)])
        cums = np.array([gamma_cumulants(s, r, max_order) for s, r in params]).T
        kappa = {m: cums[m - 2] for m in range(2, max_order + 1)}
    elif noise == "gaussian":
        params = rng.uniform(0.5, 2.0, size=(k, 1))
        kappa = {m: (params[:, 0] ** 2 if m == 2 else np.zeros(k))
                 for m in range(2, max_order + 1)}
    else:
        raise ConfigError("noise", f"unknown noise family {noise!r}")
    return DrawnModel(SemModel(lam, gam, kappa), noise, params, redraws)


def _scale_last_latent(drawn: DrawnModel, delta: float) -> DrawnModel:
    m = drawn.model
    gam = m.Gamma.copy()
    gam[-1] *= delta
    return DrawnModel(SemModel(m.Lambda, gam, m.noise_cumulants), drawn.noise,
                      drawn.params, drawn.redraws)


def _rngs(config: SimConfig, seed) -> tuple[np.random.Generator, np.random.Generator]:
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    # children are built from the spawn key rather than ss.spawn(), which
    # would advance ss and give repeated calls different streams
    a, b = (np.random.SeedSequence(ss.entropy, spawn_key=ss.spawn_key + (i,)) for i in (0, 1))
    return np.random.default_rng(a), np.random.default_rng(b)


def generate_h0(config: SimConfig, seed=None, return_model: bool = False):
    """A dataset from a freshly drawn model with ``config.l_true`` latents."""
    r_model, r_data = _rngs(config, seed)
    drawn = draw_model(config.p, config.l_true, config.noise, r_model, config.coef_bound)
    data = DataMatrix(drawn.sample(config.n, r_data))
    return (data, drawn) if return_model else data


def apply_a1(data: DataMatrix | np.ndarray, delta: float) -> DataMatrix:
    """Entrywise ``(1 - delta) x + delta cos(x)``."""
    if not isinstance(data, DataMatrix):
        data = DataMatrix(data)
    if delta == 0:
        return data
    x = data.values
    return DataMatrix((1 - delta) * x + delta * np.cos(x), data.column_names)


def generate_a2(config: SimConfig, delta: float, seed=None, return_model: bool = False):
    """A dataset with ``config.l_tested + 1`` latents, the last one scaled by ``delta``."""
    if not 0 <= delta <= 5:
        raise ConfigError("deltas", f"delta={delta} outside [0, 5]")
    r_model, r_data = _rngs(config, seed)
    drawn = draw_model(config.p, config.l_tested + 1, config.noise, r_model, config.coef_bound)
    drawn = _scale_last_latent(drawn, delta)
    data = DataMatrix(drawn.sample(config.n, r_data))
    return (data, drawn) if return_model else data


def generate(config: SimConfig, delta: float, seed=None) -> tuple[DataMatrix, int]:
    """Dataset for one replication of the configured design, with its redraw count."""
    if config.alternative == "a2":
        data, drawn = generate_a2(config, delta, seed, return_model=True)
    else:
        data, drawn = generate_h0(config, seed, return_model=True)
        if config.alternative == "a1":
            data = apply_a1(data, delta)
    return data, drawn.redraws


# ---------------------------------------------------------------------------
# studies


@dataclass
class PowerCurve:
    """Rejection rates of one method across ``deltas``."""

    method: str
    alternative: str
    p: int
    l: int
    n: int
    deltas: list[float]
    rejections: list[int]
    reps: list[int]
    failures: list[int] = field(default_factory=list)

    @property
    def rates(self) -> np.ndarray:
        reps = np.maximum(np.asarray(self.reps), 1)
        return np.asarray(self.rejections) / reps

    @property
    def se(self) -> np.ndarray:
        r = self.rates
        return np.sqrt(r * (1 - r) / np.maximum(np.asarray(self.reps), 1))


@dataclass
class StudyResult:
    curves: list[PowerCurve]
    manifest: dict

    def to_csv(self, seed: int) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for c in self.curves:
            for i, d in enumerate(c.deltas):
                w.writerow([c.method, c.p, c.l, c.n, f"{d:g}", c.alternative,
                            c.rejections[i], c.reps[i], f"{c.rates[i]:.6f}",
                            f"{c.se[i]:.6f}", seed])
        return buf.getvalue()


def _labels(configs: Sequence[GofConfig], p: int) -> list[str]:
    labels, seen = [], {}
    for cfg in configs:
        base = (cfg.method or default_method(p)).value
        seen[base] = seen.get(base, 0) + 1
        labels.append(base if seen[base] == 1 else f"{base}#{seen[base]}")
    return labels


def _test_seed(seed: int, rep: int, j: int) -> int:
    ss = np.random.SeedSequence(seed, spawn_key=(rep, 1, j))
    return int(ss.generate_state(1)[0])


def _run_replication(args):
    sim, gofs, rep = args
    data_ss = np.random.SeedSequence(sim.seed, spawn_key=(rep, 0))
    out = []
    redraws = 0
    for delta in sim.deltas:
        row = []
        try:
            data, redraws = generate(sim, delta, data_ss)
        except Exception as exc:  # record and move on
            out.append([("error", f"data: {exc}")] * len(gofs))
            continue
        for j, cfg in enumerate(gofs):
            cfg_j = GofConfig(l=sim.l_tested, method=cfg.method, alpha=cfg.alpha,
                              seed=_test_seed(sim.seed, rep, j), cr=cfg.cr,
                              ustat=cfg.ustat, standardize=cfg.standardize)
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    res = gof_test(data, cfg_j)
                row.append(("ok", bool(res.reject)))
            except Exception as exc:
                row.append(("error", f"{type(exc).__name__}: {exc}"))
        out.append(row)
    return rep, out, redraws


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("SEMGOF_WORKERS", "1")))
    except ValueError:
        return 1


def run_study(
    sim: SimConfig,
    gof: Sequence[GofConfig] | GofConfig,
    csv_path: str | os.PathLike | None = None,
    manifest_path: str | os.PathLike | None = None,
    workers: int | None = None,
) -> StudyResult:
    """Rejection rates of every method at every ``delta``.

    Failed replications are excluded from the rates and counted per
    ``(method, delta)``; their messages go into the manifest.  The CSV is a
    deterministic function of ``sim`` and ``gof``.
    """
    if isinstance(gof, GofConfig):
        gof = [gof]
    gof = list(gof)
    if not gof:
        raise ConfigError("methods", "need at least one method")
    workers = default_workers() if workers is None else max(1, int(workers))
    labels = _labels(gof, sim.p)
    t0 = time.perf_counter()
    jobs = [(sim, gof, r) for r in range(sim.replications)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_run_replication, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        results = [_run_replication(j) for j in jobs]
    results.sort(key=lambda t: t[0])

    nd, nm = len(sim.deltas), len(gof)
    rej = np.zeros((nm, nd), dtype=int)
    ok = np.zeros((nm, nd), dtype=int)
    fail = np.zeros((nm, nd), dtype=int)
    failures = []
    total_redraws = 0
    for rep, rows, redraws in results:
        total_redraws += redraws
        for di, row in enumerate(rows):
            for j, (status, val) in enumerate(row):
                if status == "ok":
                    ok[j, di] += 1
                    rej[j, di] += int(val)
                else:
                    fail[j, di] += 1
                    failures.append({"replication": rep, "delta": sim.deltas[di],
                                     "method": labels[j], "error": val})
    curves = [
        PowerCurve(labels[j], sim.alternative, sim.p, sim.l_tested, sim.n, list(sim.deltas),
                   rej[j].tolist(), ok[j].tolist(), fail[j].tolist())
        for j in range(nm)
    ]
    from . import __version__

    manifest = {
        "command": "simulate",
        "version": __version__,
        "simulation": sim.to_dict(),
        "methods": [
            {"label": labels[j], "method": (cfg.method or default_method(sim.p)).value,
             "alpha": cfg.alpha, "cr": asdict(cfg.cr), "ustat": asdict(cfg.ustat),
             "standardize": cfg.standardize}
            for j, cfg in enumerate(gof)
        ],
        "model_redraw_per_replication": True,
        "model_redraws": int(total_redraws),
        "failures": failures,
        "workers": workers,
        "timings_ms": {"total": round(1e3 * (time.perf_counter() - t0), 3)},
    }
    result = StudyResult(curves, manifest)
    if csv_path is not None:
        with open(csv_path, "w", newline="") as fh:
            fh.write(result.to_csv(sim.seed))
    if manifest_path is not None:
        with open(manifest_path, "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return result
