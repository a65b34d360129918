"""Truncated Fock bases, ladder operators and excitation manifolds.

Operators are built by label arithmetic on the basis rather than by
composing restricted matrices, so a product such as a_m^dag a_n on a
manifold-restricted basis equals the projection of the full-space product.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class BasisError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Basis:
    names: tuple[str, ...]
    levels: tuple[int, ...]
    labels: np.ndarray  # (dim, n_modes) int occupations, lexicographic
    manifold: int | None = None
    n_max: int | None = None
    _index: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.labels.setflags(write=False)
        self._index.update({tuple(int(x) for x in row): i for i, row in enumerate(self.labels)})

    @property
    def dim(self) -> int:
        return len(self.labels)

    def __len__(self) -> int:
        return self.dim

    @property
    def n_modes(self) -> int:
        return len(self.levels)

    def mode(self, mode: int | str) -> int:
        if isinstance(mode, str):
            try:
                return self.names.index(mode)
            except ValueError:
                raise BasisError(f"no mode {mode!r} in basis {self.names}") from None
        if not 0 <= mode < self.n_modes:
            raise BasisError(f"mode index {mode} out of range")
        return int(mode)

    def index(self, label: Sequence[int]) -> int:
        return self._index[tuple(int(x) for x in label)]

    def get(self, label: Sequence[int]) -> int | None:
        return self._index.get(tuple(int(x) for x in label))

    def __contains__(self, label) -> bool:
        return tuple(int(x) for x in label) in self._index

    @property
    def excitations(self) -> np.ndarray:
        return self.labels.sum(axis=1)

    def manifold_indices(self) -> dict[int, np.ndarray]:
        """Basis indices grouped by total excitation number."""
        N = self.excitations
        return {int(n): np.flatnonzero(N == n) for n in np.unique(N)}

    def label_string(self, i: int) -> str:
        return "".join(str(int(x)) for x in self.labels[i])

    def to_dict(self) -> dict:
        return {
            "modes": list(self.names),
            "levels": list(self.levels),
            "manifold": self.manifold,
            "n_max": self.n_max,
            "labels": self.labels.tolist(),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict())


def enumerate_basis(
    levels: Sequence[int],
    manifold: int | None = None,
    n_max: int | None = None,
    names: Sequence[str] | None = None,
) -> Basis:
    """Lexicographically ordered occupation labels, optionally restricted.

    ``manifold`` keeps labels with exactly that many excitations, ``n_max``
    keeps labels with at most that many.
    """
    levels = tuple(int(L) for L in levels)
    if any(L < 2 for L in levels):
        raise BasisError(f"every mode needs at least 2 levels, got {levels}")
    if manifold is not None and n_max is not None:
        raise BasisError("give either manifold or n_max, not both")
    if names is None:
        names = tuple(f"m{i}" for i in range(len(levels)))
    names = tuple(names)
    if len(names) != len(levels):
        raise BasisError("names and levels differ in length")

    def keep(lab):
        s = sum(lab)
        if manifold is not None:
            return s == manifold
        if n_max is not None:
            return s <= n_max
        return True

    if manifold is not None or n_max is not None:
        # avoid materialising the full product space for large registers
        cap = manifold if manifold is not None else n_max
        labs = [lab for lab in _bounded_product(levels, cap) if keep(lab)]
    else:
        labs = list(itertools.product(*(range(L) for L in levels)))
    if not labs:
        raise BasisError(f"empty basis for levels={levels}, manifold={manifold}, n_max={n_max}")
    arr = np.array(labs, dtype=np.int64).reshape(len(labs), len(levels))
    return Basis(names, levels, arr, manifold, n_max)


def _bounded_product(levels: Sequence[int], cap: int, prefix=()) -> Iterable[tuple[int, ...]]:
    if not levels:
        yield prefix
        return
    used = sum(prefix)
    for k in range(min(levels[0], cap - used + 1)):
        yield from _bounded_product(levels[1:], cap, prefix + (k,))


def basis_for_model(model, manifold: int | None = None, n_max: int | None = None) -> Basis:
    return enumerate_basis(model.levels, manifold=manifold, n_max=n_max, names=model.names)


def monomial(basis: Basis, create: Sequence[int | str] = (), annihilate: Sequence[int | str] = ()) -> np.ndarray:
    """Matrix of a_{c1}^dag a_{c2}^dag ... a_{a1} a_{a2} ... on ``basis``.

    Annihilators act first.  Intermediate states are only required to respect
    the level caps, so the result is P (full-space product) P.
    """
    cre = [basis.mode(m) for m in create]
    ann = [basis.mode(m) for m in annihilate]
    levels = basis.levels
    op = np.zeros((basis.dim, basis.dim))
    for j, lab in enumerate(basis.labels):
        amp = 1.0
        n = [int(x) for x in lab]
        for m in ann:
            if n[m] == 0:
                amp = 0.0
                break
            amp *= math.sqrt(n[m])
            n[m] -= 1
        if amp == 0.0:
            continue
        for m in cre:
            if n[m] + 1 >= levels[m]:
                amp = 0.0
                break
            n[m] += 1
            amp *= math.sqrt(n[m])
        if amp == 0.0:
            continue
        i = basis.get(n)
        if i is not None:
            op[i, j] += amp
    return op


def ladder(mode: int | str, basis: Basis) -> np.ndarray:
    """Annihilation operator of ``mode``."""
    return monomial(basis, annihilate=[mode])


def creation(mode: int | str, basis: Basis) -> np.ndarray:
    return monomial(basis, create=[mode])


def number(mode: int | str, basis: Basis) -> np.ndarray:
    return np.diag(basis.labels[:, basis.mode(mode)].astype(float))


def total_number(basis: Basis) -> np.ndarray:
    return np.diag(basis.excitations.astype(float))


def hop(m: int | str, n: int | str, basis: Basis) -> np.ndarray:
    """a_m^dag a_n."""
    return monomial(basis, create=[m], annihilate=[n])


def exchange(m: int | str, n: int | str, basis: Basis) -> np.ndarray:
    """a_m^dag a_n + a_m a_n^dag."""
    A = hop(m, n, basis)
    return A + A.T


def charge_product(m: int | str, n: int | str, basis: Basis) -> np.ndarray:
    """(a_m^dag - a_m)(a_n^dag - a_n) for distinct modes."""
    if basis.mode(m) == basis.mode(n):
        raise BasisError("charge_product needs two distinct modes")
    return (
        monomial(basis, create=[m, n])
        - monomial(basis, create=[m], annihilate=[n])
        - monomial(basis, create=[n], annihilate=[m])
        + monomial(basis, annihilate=[m, n])
    )


def embed(op: np.ndarray, mode: int | str, basis: Basis) -> np.ndarray:
    """Embed a single-mode operator (levels x levels) acting on ``mode``."""
    m = basis.mode(mode)
    op = np.asarray(op)
    L = basis.levels[m]
    if op.shape != (L, L):
        raise BasisError(f"operator shape {op.shape} does not match {L} levels of mode {m}")
    out = np.zeros((basis.dim, basis.dim), dtype=np.result_type(op, float))
    for j, lab in enumerate(basis.labels):
        col = op[:, lab[m]]
        for k in np.flatnonzero(col):
            n = lab.copy()
            n[m] = k
            i = basis.get(n)
            if i is not None:
                out[i, j] += col[k]
    return out


def manifold_projector(basis: Basis, N: int) -> np.ndarray:
    return np.diag((basis.excitations == N).astype(float))


def is_hermitian(A: np.ndarray, tol: float = 1e-12) -> bool:
    return float(np.max(np.abs(A - A.conj().T), initial=0.0)) < tol
