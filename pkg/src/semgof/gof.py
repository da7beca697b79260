"""Combined goodness-of-fit procedures for linear non-Gaussian SEMs.

Three procedures are offered:

``cr_only``
    CR rank test of the cross-cumulant matrix ``M`` alone.
``cr_plus_second``
    CR test of ``M`` plus a test of the within-cumulant condition (the
    U-statistic test for Str/Ar, the CR test for rank-type conditions),
    combined by Bonferroni: the overall p-value is ``min(1, 2 min(pA, pB))``.
``ustat_all``
    One joint U-statistic test of all minors of ``M`` and Str/Ar (only for
    ``l = 0`` and ``p`` in {2, 3}).
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .constraints import (
    ConditionPlan,
    MatrixBuilder,
    PolynomialCondition,
    RankCondition,
    UnsupportedConfiguration,
    plan_conditions,
)
from .cumulants import DataMatrix
from .poly_test import UTestConfig, ustat_test
from .rank_test import CrConfig, cr_test
from .tensor_core import multichoose


class Method(str, Enum):
    CR_ONLY = "cr_only"
    CR_PLUS_SECOND = "cr_plus_second"
    USTAT_ALL = "ustat_all"

    @classmethod
    def parse(cls, value) -> "Method":
        if isinstance(value, Method):
            return value
        aliases = {"i": cls.CR_ONLY, "ii": cls.CR_PLUS_SECOND, "iii": cls.USTAT_ALL,
                   "1": cls.CR_ONLY, "2": cls.CR_PLUS_SECOND, "3": cls.USTAT_ALL}
        key = str(value).strip().lower()
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            raise ValueError(
                f"unknown method {value!r}; choose from "
                + ", ".join(m.value for m in cls)) from None


def default_method(p: int) -> Method:
    return Method.CR_PLUS_SECOND if p <= 3 else Method.CR_ONLY


@dataclass(frozen=True)
class GofConfig:
    """Settings of :func:`gof_test`.

    ``method=None`` picks ``cr_plus_second`` for ``p <= 3`` and ``cr_only``
    otherwise.  ``seed`` feeds every random component; the per-test configs
    supply the remaining tuning (their own ``seed`` fields are ignored).
    """

    l: int = 0
    method: Method | str | None = None
    alpha: float = 0.05
    seed: int | None = None
    cr: CrConfig = field(default_factory=CrConfig)
    ustat: UTestConfig = field(default_factory=UTestConfig)
    standardize: bool = True

    def __post_init__(self):
        if self.l < 0:
            raise ValueError("l must be non-negative")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.method is not None:
            object.__setattr__(self, "method", Method.parse(self.method))


@dataclass
class GofResult:
    p_value: float
    alpha: float
    method: Method
    plan: ConditionPlan
    conditions: list[dict]
    seed: int | None
    timings_ms: dict = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    @property
    def reject(self) -> bool:
        return self.p_value < self.alpha

    @property
    def decision(self) -> str:
        return "reject" if self.reject else "accept"

    def to_dict(self, timings: bool = True) -> dict:
        out = {
            "p_value": float(self.p_value),
            "decision": self.decision,
            "alpha": float(self.alpha),
            "method": self.method.value,
            "p": self.plan.p,
            "l": self.plan.l,
            "conditions": self.conditions,
            "seed": self.seed,
            "warnings": list(self.warnings),
        }
        if timings:
            out["timings_ms"] = {k: round(float(v), 3) for k, v in self.timings_ms.items()}
        return out

    def summary(self) -> str:
        return (f"{self.decision.upper()} at alpha={self.alpha:g} "
                f"(p-value {self.p_value:.4g}, method {self.method.value}, "
                f"p={self.plan.p}, l={self.plan.l})")


def _sub_seeds(seed, k: int) -> list[int]:
    ss = np.random.SeedSequence(seed)
    return [int(c.generate_state(1)[0]) for c in ss.spawn(k)]


def _n_cumulant_entries(plan: ConditionPlan) -> int:
    return sum(multichoose(plan.p, k) for k in plan.cumulant_orders_needed)


def _cr_condition(data, cond: RankCondition, cfg: CrConfig, seed: int, standardize: bool):
    builder = MatrixBuilder(cond.matrix, standardize=standardize)
    cfg = CrConfig(cfg.bootstrap_reps, cfg.mc_draws, seed, cfg.svd_tol)
    res = cr_test(data, builder, cond.rank_bound, cfg)
    if res.degenerate:
        warnings.warn(f"{cond.name}: no positive eigenvalue in the null law", RuntimeWarning)
    return res


def gof_test(data: DataMatrix | np.ndarray, config: GofConfig | None = None) -> GofResult:
    """Test whether ``data`` fit a linear non-Gaussian SEM with ``config.l`` latents.

    Raises
    ------
    UnsupportedConfiguration
        If no condition is available for ``(p, l)`` or the method does not
        apply.
    """
    config = config or GofConfig()
    if not isinstance(data, DataMatrix):
        data = DataMatrix(data)
    plan = plan_conditions(data.p, config.l)
    method = config.method or default_method(data.p)
    if method is Method.USTAT_ALL and not (config.l == 0 and data.p in (2, 3)):
        raise UnsupportedConfiguration("ustat_all is available only for l = 0 and p in {2, 3}")

    notes = []
    need = 10 * _n_cumulant_entries(plan)
    if data.n < need:
        msg = (f"sample size {data.n} is small for cumulant orders "
               f"{plan.cumulant_orders_needed} (recommended n >= {need})")
        warnings.warn(msg, RuntimeWarning)
        notes.append(msg)

    seed_a, seed_b = _sub_seeds(config.seed, 2)
    timings = {}
    conditions = []
    t_all = time.perf_counter()

    if method is Method.USTAT_ALL:
        t0 = time.perf_counter()
        cfg = UTestConfig(config.ustat.budget_N, config.ustat.bootstrap_reps, seed_a,
                          config.ustat.block_size_g)
        res = ustat_test(data, plan, cfg, config.alpha, which="all")
        timings["ustat_all"] = 1e3 * (time.perf_counter() - t0)
        p_value = res.p_value
        conditions.append({
            **plan.condition_A.to_dict(),
            "joint_with": plan.condition_B.name,
            **res.to_dict(),
        })
        if res.dropped:
            notes.append(f"dropped degenerate constraints: {', '.join(res.dropped)}")
    else:
        t0 = time.perf_counter()
        res_a = _cr_condition(data, plan.condition_A, config.cr, seed_a, config.standardize)
        timings["condition_A"] = 1e3 * (time.perf_counter() - t0)
        conditions.append({**plan.condition_A.to_dict(), **res_a.to_dict()})
        p_value = res_a.p_value
        if method is Method.CR_PLUS_SECOND:
            t0 = time.perf_counter()
            cond_b = plan.condition_B
            if isinstance(cond_b, PolynomialCondition):
                cfg = UTestConfig(config.ustat.budget_N, config.ustat.bootstrap_reps, seed_b,
                                  config.ustat.block_size_g)
                res_b = ustat_test(data, plan, cfg, config.alpha / 2, which="invariant")
                if res_b.dropped:
                    notes.append(f"dropped degenerate constraints: {', '.join(res_b.dropped)}")
            else:
                res_b = _cr_condition(data, cond_b, config.cr, seed_b, config.standardize)
            timings["condition_B"] = 1e3 * (time.perf_counter() - t0)
            conditions.append({**cond_b.to_dict(), **res_b.to_dict()})
            p_value = min(1.0, 2.0 * min(res_a.p_value, res_b.p_value))
    timings["total"] = 1e3 * (time.perf_counter() - t_all)
    return GofResult(float(p_value), config.alpha, method, plan, conditions, config.seed,
                     timings, notes)
