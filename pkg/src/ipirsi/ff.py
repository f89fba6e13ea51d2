"""Prime-field arithmetic and small linear algebra over GF(q).

Messages live in GF(q^m) but every protocol coefficient is in GF(q), so a
message is carried as a length-m tuple of ints in [0, q) and scaled
coordinatewise. Hot paths work on plain ints with an explicit modulus;
:class:`FieldElem` is the checked, operator-friendly wrapper.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

MessageVec = tuple[int, ...]


class FieldError(ValueError):
    """Raised for invalid field operations (no inverse, singular systems, ...)."""


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    if n % 2 == 0:
        return n == 2
    d = 3
    while d * d <= n:
        if n % d == 0:
            return False
        d += 2
    return True


def next_prime(n: int) -> int:
    """Smallest prime >= n."""
    n = max(n, 2)
    while not is_prime(n):
        n += 1
    return n


@dataclass(frozen=True)
class FieldElem:
    value: int
    q: int

    def __post_init__(self) -> None:
        if not is_prime(self.q):
            raise FieldError(f"modulus {self.q} is not prime")
        object.__setattr__(self, "value", self.value % self.q)

    def _coerce(self, other: FieldElem | int) -> int:
        if isinstance(other, FieldElem):
            if other.q != self.q:
                raise FieldError(f"mismatched moduli {self.q} and {other.q}")
            return other.value
        return other % self.q

    def __add__(self, other: FieldElem | int) -> FieldElem:
        return FieldElem(self.value + self._coerce(other), self.q)

    __radd__ = __add__

    def __sub__(self, other: FieldElem | int) -> FieldElem:
        return FieldElem(self.value - self._coerce(other), self.q)

    def __rsub__(self, other: int) -> FieldElem:
        return FieldElem(self._coerce(other) - self.value, self.q)

    def __mul__(self, other: FieldElem | int) -> FieldElem:
        return FieldElem(self.value * self._coerce(other), self.q)

    __rmul__ = __mul__

    def __neg__(self) -> FieldElem:
        return FieldElem(-self.value, self.q)

    def __truediv__(self, other: FieldElem | int) -> FieldElem:
        return self * FieldElem(self._coerce(other), self.q).inv()

    def __pow__(self, e: int) -> FieldElem:
        if e < 0:
            return self.inv() ** (-e)
        # pow(0, 0, q) == 1, the convention the power rows rely on
        return FieldElem(pow(self.value, e, self.q), self.q)

    def inv(self) -> FieldElem:
        return FieldElem(inv(self.value, self.q), self.q)

    def __int__(self) -> int:
        return self.value

    def __repr__(self) -> str:
        return f"GF{self.q}({self.value})"


def inv(a: int, q: int) -> int:
    a %= q
    if a == 0:
        raise FieldError("no inverse: 0 is not invertible")
    return pow(a, q - 2, q)


# --- message vectors -------------------------------------------------------

def vec_add(u: MessageVec, v: MessageVec, q: int) -> MessageVec:
    return tuple((a + b) % q for a, b in zip(u, v))


def vec_sub(u: MessageVec, v: MessageVec, q: int) -> MessageVec:
    return tuple((a - b) % q for a, b in zip(u, v))


def vec_scale(c: int, u: MessageVec, q: int) -> MessageVec:
    return tuple((c * a) % q for a in u)


def linear_combination(coeffs: Sequence[int], vecs: Sequence[MessageVec], q: int, m: int) -> MessageVec:
    acc = [0] * m
    for c, v in zip(coeffs, vecs):
        if c:
            for t in range(m):
                acc[t] += c * v[t]
    return tuple(a % q for a in acc)


@lru_cache(maxsize=1024)
def power_rows(omegas: tuple[int, ...], n_rows: int, q: int) -> tuple[tuple[int, ...], ...]:
    """Rows ``(w_1^j, ..., w_n^j)`` for ``j = 0..n_rows-1``; row 0 is all ones."""
    return tuple(tuple(pow(w, j, q) for w in omegas) for j in range(n_rows))


# --- Vandermonde systems ---------------------------------------------------

def vandermonde_solve(omegas: Sequence[int], rhs: Sequence[MessageVec], q: int) -> list[MessageVec]:
    """Solve ``sum_l omegas[l]**j * x[l] = rhs[j]`` for ``j = 0..n-1``.

    Uses the Lagrange basis of the nodes: if ``L_l(z) = sum_j c[l][j] z^j``
    is the l-th basis polynomial then ``x[l] = sum_j c[l][j] rhs[j]``. O(n^2)
    per unknown, no elimination.
    """
    n = len(omegas)
    if n == 0 or len(rhs) != n:
        raise FieldError(f"need n >= 1 nodes and n right-hand sides, got {n} and {len(rhs)}")
    basis = lagrange_basis(tuple(x % q for x in omegas), q)
    m = len(rhs[0])
    return [linear_combination(coeffs, rhs, q, m) for coeffs in basis]


@lru_cache(maxsize=4096)
def lagrange_basis(nodes: tuple[int, ...], q: int) -> tuple[tuple[int, ...], ...]:
    """Coefficients (low to high) of the Lagrange basis polynomials on ``nodes``."""
    n = len(nodes)
    if len(set(nodes)) != n:
        raise FieldError("singular system: nodes are not distinct")

    # master polynomial P(z) = prod (z - w_k), coefficients low -> high
    master = [1]
    for wk in nodes:
        nxt = [0] * (len(master) + 1)
        for i, c in enumerate(master):
            nxt[i + 1] = (nxt[i + 1] + c) % q
            nxt[i] = (nxt[i] - wk * c) % q
        master = nxt

    out = []
    for l, wl in enumerate(nodes):
        # synthetic division P(z) / (z - w_l)
        quot = [0] * n
        carry = master[n]
        quot[n - 1] = carry
        for i in range(n - 1, 0, -1):
            carry = (master[i] + carry * wl) % q
            quot[i - 1] = carry
        denom = 1
        for k, wk in enumerate(nodes):
            if k != l:
                denom = denom * (wl - wk) % q
        scale = inv(denom, q)
        out.append(tuple(c * scale % q for c in quot))
    return tuple(out)


# --- general elimination ---------------------------------------------------

@dataclass(frozen=True)
class CoeffMatrix:
    rows: tuple[tuple[int, ...], ...]
    n_cols: int
    q: int

    def __post_init__(self) -> None:
        rows = self.rows
        for r in rows:
            if len(r) != self.n_cols:
                raise FieldError(f"row of length {len(r)} in a matrix with {self.n_cols} columns")
        if rows and self.n_cols and (min(map(min, rows)) < 0 or max(map(max, rows)) >= self.q):
            rows = tuple(tuple(x % self.q for x in r) for r in rows)
        object.__setattr__(self, "rows", tuple(map(tuple, rows)))

    @classmethod
    def from_rows(cls, rows: Iterable[Sequence[int]], q: int, n_cols: int | None = None) -> CoeffMatrix:
        rows = tuple(tuple(r) for r in rows)
        if n_cols is None:
            if not rows:
                raise FieldError("cannot infer column count of an empty matrix")
            n_cols = len(rows[0])
        return cls(rows, n_cols, q)

    def with_rows(self, extra: Iterable[Sequence[int]]) -> CoeffMatrix:
        return CoeffMatrix(self.rows + tuple(tuple(r) for r in extra), self.n_cols, self.q)

    def transpose(self) -> CoeffMatrix:
        return CoeffMatrix(tuple(zip(*self.rows)) if self.rows else (), len(self.rows), self.q)

    def __len__(self) -> int:
        return len(self.rows)


def _echelon(rows: Iterable[Sequence[int]], q: int) -> list[tuple[int, list[int]]]:
    """Reduced row-echelon basis as ``(pivot_col, row)`` with pivot entry 1."""
    basis: list[tuple[int, list[int]]] = []
    for r in rows:
        v = _reduce(list(r), basis, q)
        piv = next((i for i, x in enumerate(v) if x), None)
        if piv is None:
            continue
        s = inv(v[piv], q)
        v = [x * s % q for x in v]
        # keep earlier rows reduced against the new pivot
        for _, b in basis:
            c = b[piv]
            if c:
                for i in range(len(b)):
                    b[i] = (b[i] - c * v[i]) % q
        basis.append((piv, v))
    return basis


def _reduce(v: list[int], basis: list[tuple[int, list[int]]], q: int) -> list[int]:
    for piv, b in basis:
        c = v[piv]
        if c:
            v = [(x - c * y) % q for x, y in zip(v, b)]
    return v


def rank(matrix: CoeffMatrix) -> int:
    q = matrix.q
    rows = [list(r) for r in matrix.rows if any(r)]
    r = 0
    for col in range(matrix.n_cols):
        if r == len(rows):
            break
        piv = next((i for i in range(r, len(rows)) if rows[i][col]), None)
        if piv is None:
            continue
        rows[r], rows[piv] = rows[piv], rows[r]
        top = rows[r]
        s = inv(top[col], q)
        for i in range(r + 1, len(rows)):
            c = rows[i][col]
            if c:
                f = c * s % q
                rows[i] = [(x - f * y) % q for x, y in zip(rows[i], top)]
        r += 1
    return r


class RowSpace:
    """Echelon basis of a matrix's rows, for repeated membership tests."""

    def __init__(self, matrix: CoeffMatrix) -> None:
        self.q = matrix.q
        self.n_cols = matrix.n_cols
        self._basis = _echelon(matrix.rows, matrix.q)

    @property
    def dim(self) -> int:
        return len(self._basis)

    def __contains__(self, v: Sequence[int]) -> bool:
        if len(v) != self.n_cols:
            raise FieldError(f"vector of length {len(v)} against {self.n_cols} columns")
        return not any(_reduce([x % self.q for x in v], self._basis, self.q))


def in_row_space(matrix: CoeffMatrix, v: Sequence[int]) -> bool:
    return v in RowSpace(matrix)


def unit(n: int, i: int) -> tuple[int, ...]:
    """1-based unit vector ``e_i`` of length n."""
    return tuple(1 if k == i - 1 else 0 for k in range(n))


def solve_linear(a: Sequence[Sequence[int]], rhs: Sequence[MessageVec], q: int) -> list[MessageVec]:
    """Solve the square system ``a x = rhs`` by Gauss-Jordan elimination.

    Each right-hand side entry is a message vector, so the solve runs on the
    augmented matrix ``[a | rhs]`` with ``m`` extra columns.
    """
    n = len(a)
    if n == 0 or any(len(r) != n for r in a) or len(rhs) != n:
        raise FieldError("solve_linear needs a non-empty square system")
    m = len(rhs[0])
    aug = [[x % q for x in a[i]] + [x % q for x in rhs[i]] for i in range(n)]
    for col in range(n):
        piv = next((r for r in range(col, n) if aug[r][col]), None)
        if piv is None:
            raise FieldError("singular system")
        aug[col], aug[piv] = aug[piv], aug[col]
        s = inv(aug[col][col], q)
        aug[col] = [x * s % q for x in aug[col]]
        for r in range(n):
            c = aug[r][col]
            if r != col and c:
                aug[r] = [(x - c * y) % q for x, y in zip(aug[r], aug[col])]
    return [tuple(aug[i][n:n + m]) for i in range(n)]


def batch_rank(mats: np.ndarray, q: int) -> np.ndarray:
    """Ranks of a stack of matrices ``(N, R, C)`` over GF(q), by batched elimination.

    Same answer as :func:`rank` on each slice; used when thousands of small
    matrices need ranking at once.
    """
    # int32 suffices while q^2 fits; entries are reduced after every column
    dtype = np.int32 if q * q < 2**31 else np.int64
    A = (np.asarray(mats, dtype=np.int64) % q).astype(dtype)
    if A.ndim != 3:
        raise FieldError(f"expected a stack of matrices, got shape {A.shape}")
    N, R, C = A.shape
    if R == 0 or N == 0:
        return np.zeros(N, dtype=np.int64)
    inv_table = np.array([0] + [inv(a, q) for a in range(1, q)], dtype=dtype)
    r = np.zeros(N, dtype=np.int64)
    rows = np.arange(R)
    ar = np.arange(N)
    for c in range(C):
        cand = (A[:, :, c] != 0) & (rows[None, :] >= r[:, None])
        has = cand.any(axis=1)
        if not has.any():
            continue
        piv = np.argmax(cand, axis=1)
        top = np.minimum(r, R - 1)
        prow = A[ar, piv]
        trow = A[ar, top]
        # swap the pivot row up to position r (a no-op where there is no pivot)
        A[ar, piv] = np.where(has[:, None], trow, prow)
        prow = prow * inv_table[prow[:, c]][:, None] % q
        A[ar, top] = np.where(has[:, None], prow, trow)
        below = ((rows[None, :] > top[:, None]) & has[:, None]) * A[:, :, c]
        A -= below[:, :, None] * prow[:, None, :]
        A %= q
        r += has
    return r
