"""Set relations ``f: I -> J`` over small index sets and the good-relation checks.

A relation maps every ``I`` with ``|I| <= M`` to a subset of ``[K]``. Sets
are stored as frozensets externally and as bitmasks (bit ``i-1`` for index
``i``) inside the search loops.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Iterator, Mapping

from .ff import CoeffMatrix, RowSpace, unit
from .gpcip import Instance, Query, coefficient_matrix
from .motherset import BudgetExceeded, Digraph, _reach_masks

LITERAL = "literal"
EXCLUDING_I = "excluding-I"
VARIANTS = (LITERAL, EXCLUDING_I)
DEFAULT_COVER_BUDGET = 16


class RelationError(ValueError):
    """Malformed relation (not total, out-of-range indices)."""


class NotGoodError(ValueError):
    """A bound that only applies to good relations was asked of one that is not."""


def _mask(s: Iterable[int]) -> int:
    return sum(1 << (i - 1) for i in set(s))


def _members(mask: int) -> tuple[int, ...]:
    out, i = [], 1
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return tuple(out)


def domain(K: int, M: int) -> Iterator[frozenset[int]]:
    """All ``I`` with ``0 <= |I| <= M``, by size then lexicographically."""
    for size in range(M + 1):
        for I in combinations(range(1, K + 1), size):
            yield frozenset(I)


@dataclass(frozen=True)
class SetRelation:
    K: int
    M: int
    D: int
    f: Mapping[frozenset[int], frozenset[int]]

    def __post_init__(self) -> None:
        if self.K < 1 or self.M < 0 or self.D < 1:
            raise RelationError(f"bad parameters K={self.K}, M={self.M}, D={self.D}")
        f = {frozenset(I): frozenset(J) for I, J in self.f.items()}
        want = set(domain(self.K, self.M))
        if set(f) != want:
            extra = sorted(map(sorted, set(f) - want))
            missing = sorted(map(sorted, want - set(f)))
            raise RelationError(f"relation is not total on its domain: missing {missing}, extra {extra}")
        universe = set(range(1, self.K + 1))
        for I, J in f.items():
            if not J <= universe:
                raise RelationError(f"f({sorted(I)}) has indices outside [1, {self.K}]")
        object.__setattr__(self, "f", f)

    def __call__(self, I: Iterable[int]) -> frozenset[int]:
        return self.f[frozenset(I)]

    def items(self) -> Iterator[tuple[frozenset[int], frozenset[int]]]:
        for I in domain(self.K, self.M):
            yield I, self.f[I]

    def to_json(self) -> dict:
        return {
            "K": self.K, "M": self.M, "D": self.D,
            "f": [{"I": sorted(I), "J": sorted(J)} for I, J in self.items()],
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> SetRelation:
        try:
            f = {frozenset(e["I"]): frozenset(e["J"]) for e in obj["f"]}
            return cls(int(obj["K"]), int(obj["M"]), int(obj["D"]), f)
        except (KeyError, TypeError) as exc:
            raise RelationError(f"malformed relation JSON: {exc}") from exc


# --- validation ------------------------------------------------------------

@dataclass
class ConditionResult:
    passed: bool
    witness: object = None

    def to_json(self) -> dict:
        return {"pass": self.passed, "witness": self.witness}


@dataclass
class GoodReport:
    variant: str
    conditions: dict[str, ConditionResult]
    codomain: ConditionResult

    @property
    def good(self) -> bool:
        return all(c.passed for c in self.conditions.values())

    def to_json(self) -> dict:
        return {
            "variant": self.variant,
            "good": self.good,
            "conditions": {k: v.to_json() for k, v in self.conditions.items()},
            "codomain": self.codomain.to_json(),
        }


def _cond_i(rel: SetRelation) -> ConditionResult:
    for I, J in rel.items():
        if not I <= J:
            return ConditionResult(False, {"I": sorted(I), "f(I)": sorted(J)})
    return ConditionResult(True)


def _cond_ii(rel: SetRelation) -> ConditionResult:
    found: dict[int, dict] = {}
    for I, J in rel.items():
        free = sorted(J - I)
        if len(free) < rel.D:
            continue
        for j in free:
            if j not in found:
                others = [i for i in free if i != j][: rel.D - 1]
                found[j] = {"I": sorted(I), "J": sorted([j, *others])}
    missing = [j for j in range(1, rel.K + 1) if j not in found]
    if missing:
        return ConditionResult(False, {"j": missing[0]})
    return ConditionResult(True, {str(j): found[j] for j in sorted(found)})


def _cond_iii(rel: SetRelation) -> ConditionResult:
    entries = list(rel.items())
    for I1, J1 in entries:
        for I2, J2 in entries:
            if I2 <= J1 and not J2 <= J1:
                return ConditionResult(False, {"I1": sorted(I1), "I2": sorted(I2)})
    return ConditionResult(True)


def _cond_iv(rel: SetRelation, variant: str) -> ConditionResult:
    limit = -(-rel.K // rel.D)
    images = [
        _mask(J - I) if variant == EXCLUDING_I else _mask(J)
        for I, J in rel.items() if I
    ]
    for size in range(limit):
        for Jstar in combinations(range(1, rel.K + 1), size):
            jm = _mask(Jstar)
            if not any(img & jm == 0 for img in images):
                return ConditionResult(False, {"Jstar": list(Jstar)})
    return ConditionResult(True)


def validate_good(rel: SetRelation, variant: str = LITERAL) -> GoodReport:
    """Check conditions (i)-(iv); codomain conformance ``|f(I)| >= D`` separately.

    ``variant`` selects the reading of (iv): ``literal`` asks for a non-empty
    ``I`` with ``f(I)`` disjoint from ``J*``; ``excluding-I`` only asks that
    of ``f(I) - I``.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    small = [sorted(I) for I, J in rel.items() if len(J) < rel.D]
    codomain = ConditionResult(not small, {"I": small[0]} if small else None)
    return GoodReport(
        variant,
        {"i": _cond_i(rel), "ii": _cond_ii(rel), "iii": _cond_iii(rel), "iv": _cond_iv(rel, variant)},
        codomain,
    )


# --- cover bound -----------------------------------------------------------

def min_cover_size(rel: SetRelation, budget: int = DEFAULT_COVER_BUDGET) -> tuple[float | int, tuple[int, ...] | None]:
    """Smallest ``I*`` whose sub-images ``f(I)``, ``I <= I*``, cover ``[K]``.

    Returns ``(math.inf, None)`` when even ``I* = [K]`` does not cover.
    """
    K, M = rel.K, rel.M
    if K > budget:
        raise BudgetExceeded(f"cover search over K={K} exceeds the budget of {budget}")
    full = (1 << K) - 1
    img = {_mask(I): _mask(J) for I, J in rel.items()}
    base = img[0]
    for size in range(K + 1):
        for Istar in combinations(range(K), size):
            covered = base
            for l in range(1, min(M, size) + 1):
                for sub in combinations(Istar, l):
                    covered |= img[sum(1 << i for i in sub)]
            if covered == full:
                return size, tuple(i + 1 for i in Istar)
    return math.inf, None


def conjecture1_bound(K: int, M: int, D: int) -> int:
    a = M + D
    return max(K - D * -(-K // a), M * (K // a))


@dataclass
class Conj1Report:
    cover_size: float | int
    witness: tuple[int, ...] | None
    bound: int
    ok: bool

    def to_json(self) -> dict:
        size = self.cover_size if self.cover_size != math.inf else "inf"
        return {
            "cover_size": size,
            "witness": list(self.witness) if self.witness is not None else None,
            "bound": self.bound,
            "ok": self.ok,
        }


def check_conjecture1(rel: SetRelation, variant: str = LITERAL) -> Conj1Report:
    report = validate_good(rel, variant)
    if not report.good:
        failed = [k for k, c in report.conditions.items() if not c.passed]
        raise NotGoodError(f"relation is not good under the {variant} reading: fails {failed}")
    size, witness = min_cover_size(rel)
    bound = conjecture1_bound(rel.K, rel.M, rel.D)
    return Conj1Report(size, witness, bound, size <= bound)


# --- bridges ---------------------------------------------------------------

def relation_from_graph(G: Digraph, D: int = 2) -> SetRelation:
    """``f({v})`` is everything reachable from v (v included); ``f(empty) = empty``."""
    reach = _reach_masks(G)
    f = {frozenset(): frozenset()}
    for v in G.nodes:
        f[frozenset({v})] = frozenset(_members(reach[v - 1]))
    return SetRelation(G.n, 1, D, f)


def decodable_closure(base: CoeffMatrix, start: Iterable[int]) -> frozenset[int]:
    """Least superset of ``start`` closed under "unit vector lies in the row space".

    One pass suffices: a unit vector already in the span leaves the span
    unchanged when appended, so nothing new becomes decodable afterwards.
    """
    K = base.n_cols
    start = frozenset(start)
    space = RowSpace(base.with_rows(unit(K, i) for i in sorted(start)))
    return start | frozenset(j for j in range(1, K + 1) if unit(K, j) in space)


def relation_from_protocol(inst: Instance, query: Query) -> SetRelation:
    """``f(I)``: the messages decodable from the answer once ``X_I`` is known."""
    base = coefficient_matrix(query)
    f = {I: decodable_closure(base, I) for I in domain(inst.K, inst.M)}
    return SetRelation(inst.K, inst.M, inst.D, f)
