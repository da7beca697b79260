"""Symmetric tensors, multi-index bookkeeping, flattenings and Young flattenings.

Indices are 0-based throughout.  A symmetric tensor of order ``k`` in
dimension ``q`` stores one value per non-decreasing multi-index, in
lexicographic order; that order is the canonical row/column layout of
every matrix built in this package.

Matrix builders are expressed as *templates*: an integer array ``pos`` and a
sign array ``sign`` of the matrix shape, so that
``matrix = sign * values[pos]``.  Templates are cached and reused both for
single matrices and for stacks of bootstrap replicates.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations, combinations_with_replacement
from math import comb
from typing import Sequence

import numpy as np


def multichoose(q: int, m: int) -> int:
    """Number of multisets of size ``m`` drawn from ``q`` elements."""
    return comb(q + m - 1, m)


@lru_cache(maxsize=None)
def _multi_indices(q: int, m: int) -> tuple[tuple[int, ...], ...]:
    return tuple(combinations_with_replacement(range(q), m))


def enumerate_multi_indices(q: int, m: int) -> list[tuple[int, ...]]:
    """All non-decreasing tuples of length ``m`` over ``range(q)``, lexicographically.

    >>> enumerate_multi_indices(2, 2)
    [(0, 0), (0, 1), (1, 1)]
    """
    if q < 1 or m < 0:
        raise ValueError(f"need q >= 1 and m >= 0, got q={q}, m={m}")
    return list(_multi_indices(q, m))


@lru_cache(maxsize=None)
def _canonical_array(q: int, k: int) -> np.ndarray:
    arr = np.array(_multi_indices(q, k), dtype=np.int64).reshape(-1, k)
    arr.setflags(write=False)
    return arr


def _encode(idx: np.ndarray, q: int) -> np.ndarray:
    # base-q key of index rows; monotone in lexicographic order for equal lengths
    k = idx.shape[-1]
    weights = q ** np.arange(k - 1, -1, -1, dtype=np.int64)
    return idx @ weights


def positions(idx: np.ndarray, q: int) -> np.ndarray:
    """Canonical storage positions of (possibly unsorted) index tuples.

    ``idx`` has shape ``(..., k)``; the result has shape ``(...)``.
    """
    idx = np.asarray(idx, dtype=np.int64)
    k = idx.shape[-1]
    if k == 0:
        return np.zeros(idx.shape[:-1], dtype=np.int64)
    keys = _encode(np.sort(idx, axis=-1), q)
    canon_keys = _encode(_canonical_array(q, k), q)
    return np.searchsorted(canon_keys, keys)


@lru_cache(maxsize=None)
def _dense_positions(q: int, k: int) -> np.ndarray:
    grid = np.indices((q,) * k).reshape(k, -1).T
    pos = positions(grid, q).reshape((q,) * k)
    pos.setflags(write=False)
    return pos


@dataclass(frozen=True, eq=False)
class SymmetricTensor:
    """A real symmetric tensor of order ``order`` in dimension ``dim``.

    ``values[i]`` is the entry at the ``i``-th canonical multi-index.  Reading
    any permutation of an index returns the same stored value.
    """

    order: int
    dim: int
    values: np.ndarray

    def __post_init__(self):
        if self.order < 1 or self.dim < 1:
            raise ValueError("order and dim must be positive")
        vals = np.array(self.values, dtype=float).reshape(-1)
        expected = multichoose(self.dim, self.order)
        if vals.size != expected:
            raise ValueError(
                f"expected {expected} values for order {self.order}, dim {self.dim}; "
                f"got {vals.size}"
            )
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def zeros(cls, order: int, dim: int) -> "SymmetricTensor":
        return cls(order, dim, np.zeros(multichoose(dim, order)))

    @classmethod
    def from_dense(cls, array, *, check: bool = True, atol: float = 1e-12) -> "SymmetricTensor":
        """Build from a full ``dim ** order`` array (must already be symmetric)."""
        array = np.asarray(array, dtype=float)
        k, q = array.ndim, array.shape[0]
        if any(s != q for s in array.shape):
            raise ValueError("all modes must have the same size")
        if check:
            back = array.reshape(-1)[_flat_index(q, k)]
            full = back[_dense_positions(q, k)]
            if not np.allclose(full, array, atol=atol, rtol=0):
                raise ValueError("array is not symmetric")
        return cls(k, q, array.reshape(-1)[_flat_index(q, k)])

    @classmethod
    def from_entries(cls, order: int, dim: int, entries: dict) -> "SymmetricTensor":
        """Tensor with the given entries (any index order) and zeros elsewhere."""
        vals = np.zeros(multichoose(dim, order))
        for idx, v in entries.items():
            vals[int(positions(np.array(idx), dim))] = v
        return cls(order, dim, vals)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.dim,) * self.order

    def __getitem__(self, idx) -> float:
        idx = np.asarray(idx, dtype=np.int64)
        if idx.shape != (self.order,):
            raise IndexError(f"need {self.order} indices")
        if idx.min() < 0 or idx.max() >= self.dim:
            raise IndexError("index out of range")
        return float(self.values[positions(idx, self.dim)])

    def to_dense(self) -> np.ndarray:
        return self.values[_dense_positions(self.dim, self.order)]

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))

    def __repr__(self):
        return f"SymmetricTensor(order={self.order}, dim={self.dim})"


@lru_cache(maxsize=None)
def _flat_index(q: int, k: int) -> np.ndarray:
    # flat C-order offsets of canonical multi-indices in a dense q**k array
    canon = _canonical_array(q, k)
    return _encode(canon, q) if k else np.zeros(1, dtype=np.int64)


@dataclass(frozen=True, eq=False)
class FlatteningMatrix:
    """A dense matrix together with its row and column labels."""

    rows: tuple
    cols: tuple
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.shape != (len(self.rows), len(self.cols)):
            raise ValueError("label counts do not match the matrix shape")
        object.__setattr__(self, "data", data)

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)


def tucker_transform(T: SymmetricTensor, A) -> SymmetricTensor:
    """Multilinear change of basis ``T . A . ... . A`` (``A`` is ``p x q``)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[1] != T.dim:
        raise ValueError(f"A must have {T.dim} columns, got shape {A.shape}")
    out = T.to_dense()
    for _ in range(T.order):
        # contract the leading mode and append the new one; after k steps the
        # mode order is restored
        out = np.tensordot(out, A, axes=([0], [1]))
    p = A.shape[0]
    return SymmetricTensor(T.order, p, out.reshape(-1)[_flat_index(p, T.order)])


def rank_one_sum(vectors, weights, order: int) -> SymmetricTensor:
    """Symmetric tensor ``sum_j weights[j] * vectors[j]^{(x) order}``."""
    try:
        V = np.array([np.asarray(v, dtype=float) for v in vectors])
    except ValueError as exc:
        raise ValueError("all vectors must have the same length") from exc
    if V.ndim != 2 or V.shape[0] == 0:
        raise ValueError("need a non-empty list of equal-length vectors")
    w = np.asarray(weights, dtype=float).reshape(-1)
    if w.size != V.shape[0]:
        raise ValueError("one weight per vector is required")
    q = V.shape[1]
    canon = _canonical_array(q, order)
    prods = V[:, canon].prod(axis=2)
    return SymmetricTensor(order, q, w @ prods)


# ---------------------------------------------------------------------------
# templates


@dataclass(frozen=True, eq=False)
class Template:
    """Entry map of a structured matrix: ``matrix = sign * values[pos]``."""

    rows: tuple
    cols: tuple
    pos: np.ndarray
    sign: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.pos.shape

    def apply(self, values: np.ndarray) -> np.ndarray:
        """Evaluate on ``values`` of shape ``(..., n_values)``."""
        values = np.asarray(values)
        return values[..., self.pos] * self.sign

    def shifted(self, offset: int) -> "Template":
        return Template(self.rows, self.cols, self.pos + offset, self.sign)


@lru_cache(maxsize=None)
def flatten_template(q: int, k: int, m: int) -> Template:
    if not 1 <= m <= k:
        raise ValueError(f"split point m={m} outside 1..{k}")
    rows = _multi_indices(q, k - m)
    cols = _multi_indices(q, m)
    r = _canonical_array(q, k - m)
    c = _canonical_array(q, m)
    full = np.concatenate(
        [np.broadcast_to(r[:, None, :], (len(rows), len(cols), k - m)),
         np.broadcast_to(c[None, :, :], (len(rows), len(cols), m))],
        axis=2,
    )
    pos = positions(full, q)
    return Template(rows, cols, pos, np.ones(pos.shape, dtype=float))


def flatten(T: SymmetricTensor, m: int) -> FlatteningMatrix:
    """The ``m``-th flattening: columns indexed by length-``m`` multi-indices,
    rows by the complementary length-``(k - m)`` multi-indices."""
    tpl = flatten_template(T.dim, T.order, m)
    return FlatteningMatrix(tpl.rows, tpl.cols, tpl.apply(T.values))


def _perm_sign(seq: Sequence[int]) -> int:
    seq = list(seq)
    sign = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                sign = -sign
    return sign


def _young_wedge_part(p: int, a: int, convention: str):
    """Row/column labels and (c, sign) for the exterior-algebra part.

    Returns rows (a-subsets), cols ((a+1)-subsets in layout order), a column
    sign vector, and a dict ``(I, J) -> (c, sign)``.
    """
    rows = list(combinations(range(p), a))
    cols = list(combinations(range(p), a + 1))
    col_sign = np.ones(len(cols))
    if convention == "skew":
        # columns ordered by their complement; sign makes the p = 3 case the
        # familiar cross-product block layout
        def complement(J):
            return tuple(x for x in range(p) if x not in J)

        cols.sort(key=complement)
        col_sign = np.array(
            [(-1) ** (p - a - 1) * _perm_sign(J + complement(J)) for J in cols], dtype=float
        )
    elif convention != "literal":
        raise ValueError(f"unknown convention {convention!r}")
    entries = {}
    for ri, I in enumerate(rows):
        for ci, J in enumerate(cols):
            if set(I) <= set(J):
                (c,) = set(J) - set(I)
                entries[ri, ci] = (c, _perm_sign(I + (c,)))
    return rows, cols, col_sign, entries


@lru_cache(maxsize=None)
def young3_template(p: int, convention: str = "skew") -> Template:
    if p < 3:
        raise ValueError("Y3 needs p >= 3")
    a = (p - 1) // 2
    wrows, wcols, col_sign, entries = _young_wedge_part(p, a, convention)
    nr, nc = p * len(wrows), p * len(wcols)
    pos = np.zeros((nr, nc), dtype=np.int64)
    sign = np.zeros((nr, nc))
    for i1 in range(p):
        for j1 in range(p):
            outer = (-1) ** (i1 + j1) if convention == "skew" else 1
            for (ri, ci), (c, s) in entries.items():
                r, cc = i1 * len(wrows) + ri, j1 * len(wcols) + ci
                pos[r, cc] = positions(np.array([j1, i1, c]), p)
                sign[r, cc] = outer * s * col_sign[ci]
    rows = tuple((i1,) + I for i1 in range(p) for I in wrows)
    cols = tuple((j1,) + J for j1 in range(p) for J in wcols)
    return Template(rows, cols, pos, sign)


@lru_cache(maxsize=None)
def young5_template(p: int) -> Template:
    if p < 3:
        raise ValueError("Y5 needs p >= 3")
    a = (p - 1) // 2
    wrows, wcols, _, entries = _young_wedge_part(p, a, "literal")
    sym = _multi_indices(p, 2)
    nr, nc = len(sym) * len(wrows), len(sym) * len(wcols)
    pos = np.zeros((nr, nc), dtype=np.int64)
    sign = np.zeros((nr, nc))
    for si, (i1, i2) in enumerate(sym):
        for sj, (j1, j2) in enumerate(sym):
            for (ri, ci), (c, s) in entries.items():
                r, cc = si * len(wrows) + ri, sj * len(wcols) + ci
                pos[r, cc] = positions(np.array([j1, j2, i1, i2, c]), p)
                sign[r, cc] = s
    rows = tuple(ii + I for ii in sym for I in wrows)
    cols = tuple(jj + J for jj in sym for J in wcols)
    return Template(rows, cols, pos, sign)


def young_flattening_3(T: SymmetricTensor, convention: str = "skew") -> FlatteningMatrix:
    """Young flattening of a cubic, of size ``p*C(p,a) x p*C(p,a+1)``.

    Rows are labelled ``(i1, I)`` and columns ``(j1, J)`` with ``I``, ``J``
    strictly increasing and ``a = (p - 1) // 2``.  The entry is
    ``t[j1, i1, c]`` times the sign of the permutation sorting ``I + (c,)``
    into ``J`` whenever ``J = I + {c}``.

    ``convention="literal"`` uses lexicographic column order and exactly that
    sign.  The default ``"skew"`` orders columns by their complement and
    multiplies rows and columns by fixed signs, which makes the ``p = 3``
    matrix skew-symmetric with cross-product blocks.  Both conventions differ
    by a signed permutation, so ranks and singular values coincide.
    """
    if T.order != 3:
        raise ValueError("Y3 is defined for order-3 tensors")
    tpl = young3_template(T.dim, convention)
    return FlatteningMatrix(tpl.rows, tpl.cols, tpl.apply(T.values))


def young_flattening_5(T: SymmetricTensor) -> FlatteningMatrix:
    """Young flattening of a quintic, of size
    ``multichoose(p,2)*C(p,a) x multichoose(p,2)*C(p,a+1)``."""
    if T.order != 5:
        raise ValueError("Y5 is defined for order-5 tensors")
    tpl = young5_template(T.dim)
    return FlatteningMatrix(tpl.rows, tpl.cols, tpl.apply(T.values))


def young3_rank_bound(p: int, r: int) -> int:
    """Rank of Y3 for border rank at most ``r``: ``C(p-1, a) * r``."""
    return comb(p - 1, (p - 1) // 2) * r


def numerical_rank(M, tol: float = 1e-8) -> tuple[int, np.ndarray]:
    """Number of singular values above ``tol * sigma_max`` and the full spectrum."""
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        raise ValueError("empty matrix")
    if tol <= 0:
        raise ValueError("tol must be positive")
    s = np.linalg.svd(M, compute_uv=False)
    if s[0] == 0:
        return 0, s
    return int(np.sum(s > tol * s[0])), s
