"""Shared fixtures data for the test modules."""

import numpy as np

from semgof.cumulants import SemModel, gamma_cumulants
from semgof.tensor_core import SymmetricTensor, _multi_indices

ACCEPTANCE_LINES: list[str] = []


def report(criterion: int, ok: bool, detail: str) -> bool:
    """Record and print one pass/fail line for an acceptance criterion."""
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


# Reference Y3 of a ternary cubic, 1-based labels; "-" marks a negated entry.
# Entry (7, 2) is "133": the variant "113" there breaks the skew-symmetry
# that every other entry satisfies (its mirror (2, 7) is "-133").
Y3_REFERENCE = [
    "0 113 -112 0 -123 122 0 133 -123",
    "-113 0 111 123 0 -112 -133 0 113",
    "112 -111 0 -122 112 0 123 -113 0",
    "0 -123 122 0 223 -222 0 -233 223",
    "123 0 -112 -223 0 122 233 0 -123",
    "-122 112 0 222 -122 0 -223 123 0",
    "0 133 -123 0 -233 223 0 333 -233",
    "-133 0 113 233 0 -123 -333 0 133",
    "123 -113 0 -223 123 0 233 -133 0",
]
Y3_REFERENCE_VARIANT = (6, 1, "113")  # 0-based cell and the variant symbol


def y3_reference_numeric(T: SymmetricTensor, use_variant: bool = False) -> np.ndarray:
    out = np.zeros((9, 9))
    for r, line in enumerate(Y3_REFERENCE):
        for c, tok in enumerate(line.split()):
            if use_variant and (r, c) == Y3_REFERENCE_VARIANT[:2]:
                tok = Y3_REFERENCE_VARIANT[2]
            if tok == "0":
                continue
            sign = -1.0 if tok.startswith("-") else 1.0
            idx = tuple(int(ch) - 1 for ch in tok.lstrip("-"))
            out[r, c] = sign * T[idx]
    return out


def indicator_tensors(order: int, dim: int):
    """One tensor per canonical multi-index, with a single unit entry."""
    for idx in _multi_indices(dim, order):
        yield idx, SymmetricTensor.from_entries(order, dim, {idx: 1.0})


def random_model(rng: np.random.Generator, p: int, l: int, max_order: int = 6) -> SemModel:
    """A model drawn as in the simulation recipe (Gamma sources, U[-1, 1] coefficients)."""
    lam = rng.uniform(-1, 1, (p, p))
    np.fill_diagonal(lam, 0.0)
    gam = rng.uniform(-1, 1, (l, p))
    shapes, rates = rng.uniform(2, 3, p + l), rng.uniform(1, 5, p + l)
    cums = np.array([gamma_cumulants(s, r, max_order) for s, r in zip(shapes, rates)]).T
    return SemModel(lam, gam, {k: cums[k - 2] for k in range(2, max_order + 1)})


def random_symmetric(rng: np.random.Generator, order: int, dim: int) -> SymmetricTensor:
    from semgof.tensor_core import multichoose

    return SymmetricTensor(order, dim, rng.standard_normal(multichoose(dim, order)))


def skewed_source(rng: np.random.Generator, n: int) -> np.ndarray:
    """Standardized Beta(1, 4) draws: bounded, right-skewed, light-tailed."""
    x = rng.beta(1.0, 4.0, n)
    return (x - 0.2) / np.sqrt(4.0 / 150.0)


def three_pairs(seed: int, n: int = 2000) -> dict[str, np.ndarray]:
    """A linear pair, a pair sharing one hidden source, and a cosine pair."""
    rng = np.random.default_rng(seed)
    x = skewed_source(rng, n)
    y = 0.8 * x + skewed_source(rng, n)
    hidden = skewed_source(rng, n)
    x1 = hidden + skewed_source(rng, n)
    x2 = 0.3 * x1 - hidden + skewed_source(rng, n)
    u = rng.uniform(-3.0, 3.0, n)
    c = np.cos(u) + 0.2 * skewed_source(rng, n)
    return {"a_linear": np.c_[x, y], "b_confounded": np.c_[x1, x2], "c_cosine": np.c_[u, c]}


THREE_PAIR_CLASSES = {"a_linear": "linear", "b_confounded": "linear+confounder",
                      "c_cosine": "nonlinear"}
