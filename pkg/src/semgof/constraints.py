"""Rank and polynomial constraints on cumulant tensors, and the per-(p, l) plan.

Matrices are described by lightweight spec objects.  Each spec knows which
cumulant orders it needs and can compile a :class:`~semgof.tensor_core.Template`
over a *cumulant layout*, the concatenation of the canonical value vectors
of the needed orders.  The same template then serves point estimates,
bootstrap stacks and population oracles.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations, permutations
from math import comb
from typing import Sequence, Union

import numpy as np

from .cumulants import CumulantSet, DataMatrix, cumulants_from_moments, monomials
from .tensor_core import (
    FlatteningMatrix,
    SymmetricTensor,
    Template,
    _canonical_array,
    flatten_template,
    multichoose,
    positions,
    young3_rank_bound,
    young3_template,
    young5_template,
)


class UnsupportedConfiguration(ValueError):
    """No testable condition is available for the requested setting."""


# ---------------------------------------------------------------------------
# cumulant layouts


@dataclass(frozen=True)
class CumulantLayout:
    """Concatenation of canonical cumulant vectors for ``orders`` in dimension ``p``."""

    p: int
    orders: tuple[int, ...]

    @property
    def offsets(self) -> dict[int, int]:
        out, pos = {}, 0
        for k in self.orders:
            out[k] = pos
            pos += multichoose(self.p, k)
        return out

    @property
    def size(self) -> int:
        return sum(multichoose(self.p, k) for k in self.orders)

    def pack(self, cums: CumulantSet) -> np.ndarray:
        missing = [k for k in self.orders if k not in cums]
        if missing:
            raise KeyError(f"cumulant orders {missing} are missing")
        return np.concatenate([cums[k].values for k in self.orders])


# ---------------------------------------------------------------------------
# matrix specs


@dataclass(frozen=True)
class MMatrixSpec:
    """Stacked flattenings ``fl_{k1}(C^(h))`` for ``h = k1..k2``."""

    p: int
    k1: int
    k2: int

    def __post_init__(self):
        if not 2 <= self.k1 < self.k2:
            raise ValueError("need 2 <= k1 < k2")

    @property
    def orders(self) -> tuple[int, ...]:
        return tuple(range(self.k1, self.k2 + 1))

    @property
    def expected_shape(self) -> tuple[int, int]:
        rows = sum(multichoose(self.p, h - self.k1) for h in self.orders)
        return rows, multichoose(self.p, self.k1)

    @property
    def label(self) -> str:
        return "M^(" + ",".join(str(h) for h in self.orders) + ")"

    def template(self, layout: CumulantLayout) -> Template:
        return _m_template(self, layout)


@lru_cache(maxsize=None)
def _m_template(spec: MMatrixSpec, layout: CumulantLayout) -> Template:
    offs = layout.offsets
    blocks = []
    for h in spec.orders:
        if h == spec.k1:
            # single row: the vectorized k1-th cumulant
            canon = _canonical_array(spec.p, h)
            cols = tuple(map(tuple, canon))
            pos = np.arange(len(cols))[None, :]
            blocks.append(Template(((),), cols, pos, np.ones(pos.shape)).shifted(offs[h]))
        else:
            blocks.append(flatten_template(spec.p, h, spec.k1).shifted(offs[h]))
    return Template(
        tuple(r for b in blocks for r in b.rows),
        blocks[0].cols,
        np.vstack([b.pos for b in blocks]),
        np.vstack([b.sign for b in blocks]),
    )


@dataclass(frozen=True)
class FlatteningSpec:
    """The flattening ``fl_m(C^(k))``."""

    p: int
    k: int
    m: int

    @property
    def orders(self) -> tuple[int, ...]:
        return (self.k,)

    @property
    def expected_shape(self) -> tuple[int, int]:
        return multichoose(self.p, self.k - self.m), multichoose(self.p, self.m)

    @property
    def label(self) -> str:
        return f"fl_{self.m}(C^({self.k}))"

    def template(self, layout: CumulantLayout) -> Template:
        return flatten_template(self.p, self.k, self.m).shifted(layout.offsets[self.k])


@dataclass(frozen=True)
class YoungSpec:
    """Young flattening ``Y_k(C^(k))`` for ``k`` in {3, 5}."""

    p: int
    k: int

    def __post_init__(self):
        if self.k not in (3, 5):
            raise ValueError("Young flattenings are defined for k = 3 and k = 5")

    @property
    def orders(self) -> tuple[int, ...]:
        return (self.k,)

    @property
    def expected_shape(self) -> tuple[int, int]:
        a = (self.p - 1) // 2
        mult = self.p if self.k == 3 else multichoose(self.p, 2)
        return mult * comb(self.p, a), mult * comb(self.p, a + 1)

    @property
    def label(self) -> str:
        return f"Y_{self.k}(C^({self.k}))"

    def template(self, layout: CumulantLayout) -> Template:
        tpl = young3_template(self.p) if self.k == 3 else young5_template(self.p)
        return tpl.shifted(layout.offsets[self.k])


MatrixSpec = Union[MMatrixSpec, FlatteningSpec, YoungSpec]


def build_matrix(cums: CumulantSet, spec: MatrixSpec) -> FlatteningMatrix:
    layout = CumulantLayout(cums.dim, spec.orders)
    tpl = spec.template(layout)
    return FlatteningMatrix(tpl.rows, tpl.cols, tpl.apply(layout.pack(cums)))


def build_m_matrix(cums: CumulantSet, spec: MMatrixSpec) -> FlatteningMatrix:
    """Vertical stack of ``fl_{k1}(C^(h))``, ``h = k1..k2``; columns are the
    canonical ``k1``-multi-indices."""
    if spec.p != cums.dim:
        raise ValueError(f"spec is for p={spec.p}, cumulants have dim {cums.dim}")
    return build_matrix(cums, spec)


# ---------------------------------------------------------------------------
# invariants as term tables
#
# Each table is a list of (coefficient, ((i, j, k), ...)) with 0-based indices
# into an order-3 tensor.  poly_test reuses them as moment polynomials.


def _parse_terms(spec: Sequence[tuple[float, str]]) -> tuple:
    out = []
    for coef, word in spec:
        factors = tuple(tuple(int(ch) - 1 for ch in w) for w in word.split())
        out.append((float(coef), factors))
    return tuple(out)


STR_TERMS = _parse_terms([
    (3, "112 112 122 122"),
    (-4, "111 122 122 122"),
    (-4, "112 112 112 222"),
    (6, "111 112 122 222"),
    (-1, "111 111 222 222"),
])

ARONHOLD_TERMS = _parse_terms([
    (1, "111 222 333 123"),
    (-1, "222 333 112 113"),
    (-1, "333 111 122 223"),
    (-1, "111 222 133 233"),
    (-1, "123 111 223 233"),
    (-1, "123 222 133 113"),
    (-1, "123 333 112 122"),
    (1, "111 122 233 233"),
    (1, "111 133 223 223"),
    (1, "222 112 133 133"),
    (1, "222 233 113 113"),
    (1, "333 223 112 112"),
    (1, "333 113 122 122"),
    (-1, "123 123 123 123"),
    (2, "123 123 122 133"),
    (2, "123 123 233 112"),
    (2, "123 123 113 223"),
    (-3, "123 112 223 133"),
    (-3, "123 113 122 233"),
    (-1, "122 122 133 133"),
    (-1, "233 233 112 112"),
    (-1, "113 113 223 223"),
    (1, "233 112 113 223"),
    (1, "113 223 122 133"),
    (1, "122 133 233 112"),
])


def _eval_terms(terms, values: np.ndarray, p: int) -> np.ndarray:
    # values: (..., multichoose(p, 3))
    out = 0.0
    for coef, factors in terms:
        prod = coef
        for f in factors:
            prod = prod * values[..., int(positions(np.array(f), p))]
        out = out + prod
    return out


def _check_cubic(T: SymmetricTensor, p: int, name: str):
    if T.order != 3 or T.dim != p:
        raise ValueError(f"{name} needs an order-3 tensor in dimension {p}, "
                         f"got order {T.order}, dim {T.dim}")


def str_invariant(T: SymmetricTensor) -> float:
    """Degree-4 invariant of a binary cubic; non-positive iff border rank <= 2."""
    _check_cubic(T, 2, "Str")
    return float(_eval_terms(STR_TERMS, T.values, 2))


def aronhold_invariant(T: SymmetricTensor) -> float:
    """Aronhold invariant of a ternary cubic; zero iff border rank <= 3."""
    _check_cubic(T, 3, "Ar")
    return float(_eval_terms(ARONHOLD_TERMS, T.values, 3))


# ---------------------------------------------------------------------------
# conditions and plans


@dataclass(frozen=True)
class RankCondition:
    """``rank(matrix) <= rank_bound``."""

    matrix: MatrixSpec
    rank_bound: int

    @property
    def orders(self) -> tuple[int, ...]:
        return self.matrix.orders

    @property
    def kind(self) -> str:
        return "rank"

    @property
    def name(self) -> str:
        return f"rank {self.matrix.label} <= {self.rank_bound}"

    def is_trivial(self) -> bool:
        return self.rank_bound >= min(self.matrix.expected_shape)

    def to_dict(self) -> dict:
        return {
            "condition": self.name,
            "matrix_orders": list(self.orders),
            "rank_bound": self.rank_bound,
        }


@dataclass(frozen=True)
class PolynomialCondition:
    """``Str(C^(3)) <= 0`` (``invariant="str"``) or ``Ar(C^(3)) = 0``."""

    p: int
    invariant: str

    def __post_init__(self):
        if self.invariant not in ("str", "aronhold"):
            raise ValueError(f"unknown invariant {self.invariant!r}")

    @property
    def orders(self) -> tuple[int, ...]:
        return (3,)

    @property
    def kind(self) -> str:
        return "polynomial"

    @property
    def relation(self) -> str:
        return "<=" if self.invariant == "str" else "=="

    @property
    def terms(self):
        return STR_TERMS if self.invariant == "str" else ARONHOLD_TERMS

    @property
    def name(self) -> str:
        return "Str(C^(3)) <= 0" if self.invariant == "str" else "Ar(C^(3)) = 0"

    def evaluate(self, cums: CumulantSet) -> float:
        T = cums[3]
        return str_invariant(T) if self.invariant == "str" else aronhold_invariant(T)

    def to_dict(self) -> dict:
        return {"condition": self.name, "matrix_orders": [3], "rank_bound": None}


Condition = Union[RankCondition, PolynomialCondition]


@dataclass(frozen=True)
class ConditionPlan:
    """The two conditions assessed for a given number of variables and latents."""

    p: int
    l: int
    condition_A: RankCondition
    condition_B: Condition

    @property
    def cumulant_orders_needed(self) -> tuple[int, ...]:
        return tuple(sorted(set(self.condition_A.orders) | set(self.condition_B.orders)))

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "l": self.l,
            "conditions": [self.condition_A.to_dict(), self.condition_B.to_dict()],
            "cumulant_orders": list(self.cumulant_orders_needed),
        }


def plan_conditions(p: int, l: int) -> ConditionPlan:
    """Select the rank condition on ``M`` and the within-cumulant condition.

    Raises
    ------
    UnsupportedConfiguration
        If no non-trivial pair of conditions exists for ``(p, l)``.
    """
    if p < 2 or l < 0:
        raise UnsupportedConfiguration(f"no condition available for p={p}, l={l}")
    r = p + l
    a = (p - 1) // 2
    if l == 0:
        cond_a = RankCondition(MMatrixSpec(p, 2, 3), p)
        if p == 2:
            cond_b = PolynomialCondition(2, "str")
        elif p == 3:
            cond_b = PolynomialCondition(3, "aronhold")
        else:
            cond_b = RankCondition(YoungSpec(p, 3), young3_rank_bound(p, p))
    elif p == 2:
        if l > 1:
            raise UnsupportedConfiguration(
                f"no condition available for p=2, l={l}; only l <= 1 is testable")
        cond_a = RankCondition(MMatrixSpec(2, 3, 5), 3)
        cond_b = RankCondition(FlatteningSpec(2, 6, 3), 3)
    elif p == 3:
        cond_a = RankCondition(MMatrixSpec(3, 2, 4), r)
        cond_b = RankCondition(FlatteningSpec(3, 4, 2), r)
    else:
        cond_a = RankCondition(MMatrixSpec(p, 2, 4), r)
        cond_b = RankCondition(YoungSpec(p, 5), comb(p - 1, a) * r)
    for cond in (cond_a, cond_b):
        if isinstance(cond, RankCondition) and cond.is_trivial():
            raise UnsupportedConfiguration(
                f"condition '{cond.name}' is trivial for p={p}, l={l} "
                f"(matrix shape {cond.matrix.expected_shape})")
    return ConditionPlan(p, l, cond_a, cond_b)


# ---------------------------------------------------------------------------
# minors


@dataclass(frozen=True)
class Minor:
    """The determinant of ``M[rows][:, cols]`` as a polynomial in matrix entries."""

    rows: tuple[int, ...]
    cols: tuple[int, ...]

    @property
    def size(self) -> int:
        return len(self.rows)

    def leibniz_terms(self) -> list[tuple[int, tuple[tuple[int, int], ...]]]:
        """``(sign, ((row, col), ...))`` with one factor per row, in row order."""
        out = []
        for perm in permutations(range(self.size)):
            sign = _perm_parity(perm)
            out.append((sign, tuple((self.rows[i], self.cols[perm[i]]) for i in range(self.size))))
        return out

    def evaluate(self, M: np.ndarray) -> float:
        return float(np.linalg.det(np.asarray(M)[np.ix_(self.rows, self.cols)]))


def _perm_parity(perm) -> int:
    sign, seen = 1, [False] * len(perm)
    for i in range(len(perm)):
        if seen[i]:
            continue
        j, length = i, 0
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            length += 1
        if length % 2 == 0:
            sign = -sign
    return sign


def minor_polynomials(spec: MMatrixSpec, rank_bound: int) -> list[Minor]:
    """All ``(r+1) x (r+1)`` minors of ``M``, row subsets major, both lexicographic."""
    nrow, ncol = spec.expected_shape
    s = rank_bound + 1
    if rank_bound < 0 or s > min(nrow, ncol):
        raise UnsupportedConfiguration(
            f"rank bound {rank_bound} is trivial for a {nrow} x {ncol} matrix")
    return [Minor(R, C) for R in combinations(range(nrow), s) for C in combinations(range(ncol), s)]


def entry_multi_index(spec: MatrixSpec, row: int, col: int) -> tuple[int, ...]:
    """Sorted cumulant index behind entry ``(row, col)`` of an M-matrix or flattening."""
    if isinstance(spec, YoungSpec):
        raise ValueError("Young flattenings carry signs; use their template instead")
    tpl = spec.template(CumulantLayout(spec.p, spec.orders))
    return tuple(sorted(tpl.rows[row] + tpl.cols[col]))


# ---------------------------------------------------------------------------
# fast matrix construction from data


class MatrixBuilder:
    """Maps samples to a (standardized) cumulant matrix, singly or in batches.

    Parameters
    ----------
    spec : matrix spec
    standardize : bool
        Rescale cumulants to unit variances before filling the matrix.  The
        variances used are those of the sample (or resample) at hand.
    """

    def __init__(self, spec: MatrixSpec, standardize: bool = True):
        self.spec = spec
        self.p = spec.p
        self.standardize = standardize
        orders = set(spec.orders)
        if standardize:
            orders.add(2)
        self.layout = CumulantLayout(self.p, tuple(sorted(orders)))
        self.kmax = self.layout.orders[-1]
        self.template = spec.template(self.layout)
        self._scale_idx = {
            k: _canonical_array(self.p, k) for k in self.layout.orders
        }

    @property
    def shape(self) -> tuple[int, int]:
        return self.template.shape

    def monomials(self, X: np.ndarray) -> np.ndarray:
        return monomials(X, self.kmax)

    def from_moments(self, m: np.ndarray, centered: bool = False) -> np.ndarray:
        """Matrices from flat raw-moment vectors of shape ``(..., n_moments)``."""
        vals = [cumulants_from_moments(m, self.p, k, centered=centered) for k in self.layout.orders]
        if self.standardize:
            c2 = vals[self.layout.orders.index(2)]
            diag = c2[..., positions(np.repeat(np.arange(self.p)[:, None], 2, 1), self.p)]
            with np.errstate(divide="ignore", invalid="ignore"):
                sd = np.sqrt(diag)
                for i, k in enumerate(self.layout.orders):
                    vals[i] = vals[i] / np.prod(sd[..., self._scale_idx[k]], axis=-1)
        return self.template.apply(np.concatenate(vals, axis=-1))

    def __call__(self, data: DataMatrix | np.ndarray) -> np.ndarray:
        x = data.values if isinstance(data, DataMatrix) else np.asarray(data, dtype=float)
        if x.shape[1] != self.p:
            raise ValueError(f"builder expects {self.p} columns, got {x.shape[1]}")
        x = x - x.mean(axis=0)
        m = self.monomials(x).mean(axis=0)
        m[: self.p] = 0.0
        return self.from_moments(m, centered=True)

    def batch(self, mono: np.ndarray, weights: np.ndarray) -> np.ndarray:
        """Matrices for resamples given as row weights (counts / n), ``(B, n)``."""
        return self.from_moments(weights @ mono)
