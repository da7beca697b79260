"""Sample and population cumulant tensors.

Sample cumulants are plug-in estimates: raw sample moments are substituted
into the moment-to-cumulant formula over set partitions.  The formula is
precompiled per ``(p, k)`` into index tables so that it can be evaluated on
a single moment vector or on a whole stack of bootstrap moment vectors.

Raw moments of all orders ``1..kmax`` are addressed through one flat vector
("moment vector"): degree ``d`` moments occupy a contiguous block in
canonical multi-index order, degrees ascending.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from functools import lru_cache
from math import factorial
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import sparse

from .tensor_core import (
    SymmetricTensor,
    _canonical_array,
    multichoose,
    positions,
    rank_one_sum,
)

MAX_ORDER = 6


@dataclass(frozen=True, eq=False)
class DataMatrix:
    """An ``n x p`` sample with optional column names.

    Parameters
    ----------
    values : array_like
        Observations in rows.
    column_names : sequence of str, optional
    centered : bool
        Whether the columns are known to have mean zero.
    """

    values: np.ndarray
    column_names: tuple[str, ...] | None = None
    centered: bool = False

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        if vals.ndim != 2:
            raise ValueError("data must be a 2-d array")
        if vals.shape[0] < 2:
            raise ValueError("need at least 2 observations")
        if vals.shape[1] < 1:
            raise ValueError("need at least 1 variable")
        if not np.all(np.isfinite(vals)):
            bad = np.argwhere(~np.isfinite(vals))[0]
            raise ValueError(f"non-finite value at row {bad[0] + 1}, column {bad[1] + 1} (1-based)")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        if self.column_names is not None:
            names = tuple(str(c) for c in self.column_names)
            if len(names) != vals.shape[1]:
                raise ValueError("one column name per column is required")
            object.__setattr__(self, "column_names", names)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    def center(self) -> "DataMatrix":
        return DataMatrix(self.values - self.values.mean(axis=0), self.column_names, True)

    def standardize(self) -> "DataMatrix":
        """Center and scale every column to unit (1/n) variance."""
        x = self.values - self.values.mean(axis=0)
        sd = np.sqrt(np.mean(x**2, axis=0))
        if np.any(sd == 0):
            raise ValueError(f"column {int(np.argmin(sd))} is constant")
        return DataMatrix(x / sd, self.column_names, True)

    def select(self, columns: Sequence[int]) -> "DataMatrix":
        names = None if self.column_names is None else tuple(self.column_names[c] for c in columns)
        return DataMatrix(self.values[:, list(columns)], names, self.centered)


@dataclass(frozen=True)
class CumulantSet:
    """Cumulant tensors of several orders sharing one dimension."""

    dim: int
    tensors: Mapping[int, SymmetricTensor] = field(default_factory=dict)

    def __post_init__(self):
        for k, T in self.tensors.items():
            if T.dim != self.dim or T.order != k:
                raise ValueError(f"tensor for order {k} has order {T.order}, dim {T.dim}")

    def __getitem__(self, k: int) -> SymmetricTensor:
        try:
            return self.tensors[k]
        except KeyError:
            raise KeyError(f"cumulant of order {k} is not available") from None

    def __contains__(self, k: int) -> bool:
        return k in self.tensors

    @property
    def orders(self) -> tuple[int, ...]:
        return tuple(sorted(self.tensors))

    def standardized(self) -> "CumulantSet":
        """Rescale every tensor as if all variables had unit variance."""
        sd = np.sqrt(np.diag(self[2].to_dense()))
        if np.any(sd <= 0):
            raise ValueError("non-positive variance")
        out = {}
        for k, T in self.tensors.items():
            scale = np.prod(sd[_canonical_array(self.dim, k)], axis=1)
            out[k] = SymmetricTensor(k, self.dim, T.values / scale)
        return CumulantSet(self.dim, out)


@dataclass(frozen=True, eq=False)
class SemModel:
    """Linear SEM ``X = Lambda^T X + Gamma^T L + eps``.

    ``noise_cumulants[k]`` lists the order-``k`` cumulants of the ``l + p``
    sources ``(L, eps)``, latent sources first.
    """

    Lambda: np.ndarray
    Gamma: np.ndarray
    noise_cumulants: Mapping[int, np.ndarray]

    def __post_init__(self):
        lam = np.atleast_2d(np.asarray(self.Lambda, dtype=float))
        p = lam.shape[0]
        if lam.shape != (p, p):
            raise ValueError("Lambda must be square")
        if np.any(np.diag(lam) != 0):
            raise ValueError("Lambda must have zero diagonal")
        gam = np.asarray(self.Gamma, dtype=float).reshape(-1, p)
        object.__setattr__(self, "Lambda", lam)
        object.__setattr__(self, "Gamma", gam)
        kap = {}
        for k, v in self.noise_cumulants.items():
            v = np.asarray(v, dtype=float).reshape(-1)
            if v.size != p + gam.shape[0]:
                raise ValueError(f"order-{k} cumulants need {p + gam.shape[0]} entries")
            kap[int(k)] = v
        object.__setattr__(self, "noise_cumulants", kap)
        if np.linalg.matrix_rank(np.eye(p) - lam) < p:
            raise ValueError("I - Lambda is singular")

    @property
    def p(self) -> int:
        return self.Lambda.shape[0]

    @property
    def l(self) -> int:
        return self.Gamma.shape[0]

    def mixing_matrix(self) -> np.ndarray:
        """``B = (I - Lambda)^{-T} (Gamma^T | I_p)``, shape ``p x (l + p)``."""
        p = self.p
        inv_t = np.linalg.inv(np.eye(p) - self.Lambda).T
        return inv_t @ np.hstack([self.Gamma.T, np.eye(p)])


def gamma_cumulants(shape: float, rate: float, max_order: int) -> list[float]:
    """Cumulants ``kappa_2..kappa_max_order`` of a Gamma(shape, rate) law."""
    if shape <= 0 or rate <= 0:
        raise ValueError("shape and rate must be positive")
    return [shape * factorial(m - 1) / rate**m for m in range(2, max_order + 1)]


def population_cumulant(model: SemModel, k: int) -> SymmetricTensor:
    """Exact order-``k`` cumulant of the observed vector, ``diag(kappa) . B ... B``."""
    if k not in model.noise_cumulants:
        raise KeyError(f"no order-{k} noise cumulants in the model")
    B = model.mixing_matrix()
    return rank_one_sum(B.T, model.noise_cumulants[k], k)


def population_cumulants(model: SemModel, orders: Iterable[int]) -> CumulantSet:
    return CumulantSet(model.p, {k: population_cumulant(model, k) for k in orders})


# ---------------------------------------------------------------------------
# moment engine


def set_partitions(k: int) -> list[list[tuple[int, ...]]]:
    """All set partitions of ``range(k)`` (Bell(k) of them)."""
    if k == 0:
        return [[]]
    out = []
    for part in set_partitions(k - 1):
        for i in range(len(part)):
            out.append(part[:i] + [part[i] + (k - 1,)] + part[i + 1:])
        out.append(part + [(k - 1,)])
    return out


def moment_offsets(p: int, kmax: int) -> np.ndarray:
    """Start of each degree block in the flat moment vector (index = degree)."""
    sizes = [multichoose(p, d) for d in range(1, kmax)]
    return np.concatenate([[0, 0], np.cumsum(sizes, dtype=np.int64)]).astype(np.int64)


def n_moments(p: int, kmax: int) -> int:
    return sum(multichoose(p, d) for d in range(1, kmax + 1))


def monomials(X: np.ndarray, kmax: int) -> np.ndarray:
    """Row-wise products ``prod_j x[i_j]`` for every multi-index of degree 1..kmax.

    Returns an ``n x n_moments(p, kmax)`` array in flat moment order.
    """
    X = np.asarray(X, dtype=float)
    p = X.shape[1]
    blocks = [X]
    for d in range(2, kmax + 1):
        canon = _canonical_array(p, d)
        parent = positions(canon[:, :-1], p)
        blocks.append(blocks[-1][:, parent] * X[:, canon[:, -1]])
    return np.hstack(blocks)


@dataclass(frozen=True, eq=False)
class _CumulantFormula:
    # per block count h: sparse (terms x entries) coefficient map and the
    # moment ids of the h factors of each term
    k: int
    n_entries: int
    factor_ids: tuple[np.ndarray, ...]
    weights: tuple[sparse.csr_matrix, ...]

    def evaluate(self, m: np.ndarray) -> np.ndarray:
        """Apply to moment vectors ``m`` of shape ``(..., n_moments)``."""
        lead = m.shape[:-1]
        m2 = m.reshape(-1, m.shape[-1])
        out = np.zeros((m2.shape[0], self.n_entries))
        for ids, W in zip(self.factor_ids, self.weights):
            prods = m2[:, ids[:, 0]].copy()
            for j in range(1, ids.shape[1]):
                prods *= m2[:, ids[:, j]]
            out += np.asarray((W.T @ prods.T).T)
        return out.reshape(*lead, self.n_entries)


@lru_cache(maxsize=None)
def cumulant_formula(p: int, k: int, drop_singletons: bool = False) -> _CumulantFormula:
    """Precompiled moment-to-cumulant map for order ``k`` in dimension ``p``.

    With ``drop_singletons=True`` partitions with a singleton block are
    skipped, which is exact when all first moments vanish.
    """
    if not 1 <= k <= MAX_ORDER:
        raise ValueError(f"order must be in 1..{MAX_ORDER}")
    offs = moment_offsets(p, k)
    canon = _canonical_array(p, k)
    parts = set_partitions(k)
    terms: dict[int, dict[tuple, float]] = defaultdict(lambda: defaultdict(float))
    for part in parts:
        h = len(part)
        if drop_singletons and any(len(b) == 1 for b in part):
            continue
        coef = (-1) ** (h - 1) * factorial(h - 1)
        # moment ids of each block for every entry at once
        ids = np.stack(
            [offs[len(b)] + positions(canon[:, list(b)], p) for b in part], axis=1
        )
        ids.sort(axis=1)
        for e, row in enumerate(map(tuple, ids)):
            terms[h][(e,) + row] += coef
    factor_ids, weights = [], []
    for h in sorted(terms):
        items = [(key, c) for key, c in terms[h].items() if c != 0]
        if not items:
            continue
        keys = np.array([key for key, _ in items], dtype=np.int64)
        coefs = np.array([c for _, c in items])
        # merge identical factor tuples across entries
        uniq, inv = np.unique(keys[:, 1:], axis=0, return_inverse=True)
        W = sparse.csr_matrix(
            (coefs, (inv.reshape(-1), keys[:, 0])), shape=(len(uniq), canon.shape[0])
        )
        factor_ids.append(uniq)
        weights.append(W)
    return _CumulantFormula(k, canon.shape[0], tuple(factor_ids), tuple(weights))


def cumulants_from_moments(m: np.ndarray, p: int, k: int, *, centered: bool = False) -> np.ndarray:
    """Order-``k`` cumulant values (canonical order) from flat moment vectors."""
    return cumulant_formula(p, k, centered).evaluate(np.asarray(m, dtype=float))


def _check_order(k: int, n: int):
    if not 2 <= k <= MAX_ORDER:
        raise ValueError(f"cumulant order must be in 2..{MAX_ORDER}, got {k}")
    if n < k:
        raise ValueError(f"need at least {k} observations for order {k}")


def sample_cumulant(data: DataMatrix | np.ndarray, k: int) -> SymmetricTensor:
    """Plug-in order-``k`` cumulant tensor of the (empirically centered) sample."""
    return sample_cumulants(data, [k])[k]


def sample_cumulants(data: DataMatrix | np.ndarray, orders: Iterable[int]) -> CumulantSet:
    """Plug-in cumulants of several orders, sharing one pass over the data."""
    if not isinstance(data, DataMatrix):
        data = DataMatrix(data)
    orders = sorted(set(orders))
    for k in orders:
        _check_order(k, data.n)
    x = data.values - data.values.mean(axis=0)
    kmax = orders[-1]
    m = monomials(x, kmax).mean(axis=0)
    m[: data.p] = 0.0
    return CumulantSet(
        data.p,
        {k: SymmetricTensor(k, data.p, cumulants_from_moments(m, data.p, k, centered=True))
         for k in orders},
    )
