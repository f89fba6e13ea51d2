"""Exact verification of GPC-IP by enumerating its randomness.

Information model: the server sees the query only. Coefficient rows are the
same constants for every (W, S), and the block shuffle is uniform, so a query
is summarized without loss by its :class:`QueryKey` (``Q0`` plus the
unordered set of blocks). Every probability is a :class:`~fractions.Fraction`
and every comparison is exact.
"""

from __future__ import annotations

import math
import random
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from itertools import combinations
from math import comb, factorial, prod
from typing import Iterator, NamedTuple, Sequence

from .ff import RowSpace, batch_rank, rank, unit
from .gpcip import (
    HONEST,
    BranchWeights,
    DemandSideInfo,
    Instance,
    ParameterError,
    Query,
    Block,
    Variant,
    branch_probabilities,
    build_query,
    coefficient_matrix,
    coefficient_tensor,
    make_query,
    random_demand,
    sample_partition,
    theta_weights,
)
from .jsonutil import frac_str

DEFAULT_BUDGET = 10**7


class BudgetExceeded(RuntimeError):
    """Exact enumeration would exceed the configured placement budget."""


class AuditError(ValueError):
    pass


class QueryKey(NamedTuple):
    q0: tuple[int, ...]
    parts: tuple[tuple[int, ...], ...]

    @classmethod
    def canonical(cls, q0: Sequence[int], parts: Sequence[Sequence[int]]) -> QueryKey:
        return cls(tuple(sorted(q0)), tuple(sorted(tuple(sorted(p)) for p in parts)))

    def to_json(self) -> dict:
        return {"q0": list(self.q0), "parts": [list(p) for p in self.parts]}

    @classmethod
    def from_json(cls, obj: dict) -> QueryKey:
        return cls(tuple(obj["q0"]), tuple(tuple(p) for p in obj["parts"]))


def observe(query: Query, variant: Variant = HONEST) -> QueryKey:
    """What the server learns from a query.

    Without the shuffle the leading block is distinguishable; the remaining
    blocks are still exchangeable, so they are kept unordered.
    """
    parts = [b.indices for b in query.parts]
    if variant.shuffle:
        return QueryKey.canonical(query.q0.indices, parts)
    return QueryKey(query.q0.indices, (parts[0], *sorted(parts[1:])))


def query_from_key(inst: Instance, key: QueryKey) -> Query:
    return make_query(inst, key.q0, key.parts)


# --- enumeration -----------------------------------------------------------

def _block_partitions(items: Sequence[int], size: int) -> Iterator[tuple[tuple[int, ...], ...]]:
    """Unordered partitions of ``items`` into blocks of ``size``, each once."""
    if not items:
        yield ()
        return
    first, rest = items[0], items[1:]
    for comb_ in combinations(rest, size - 1):
        chosen = set(comb_)
        remaining = [x for x in rest if x not in chosen]
        for tail in _block_partitions(remaining, size):
            yield ((first, *comb_), *tail)


def _n_block_partitions(n_blocks: int, size: int) -> int:
    return factorial(n_blocks * size) // (factorial(size) ** n_blocks * factorial(n_blocks))


def branch_counts(inst: Instance) -> tuple[int, int]:
    """Number of equally likely placements per (W, S) in branch A and branch B.

    A placement is ``(Q0, Q1, unordered rest)``; each is equally likely within
    its branch, which is what uniform placement plus the shuffle produces.
    """
    p = inst.params
    a, r, K, M, D = p.alpha, p.rho, inst.K, inst.M, inst.D
    tail = _n_block_partitions(p.beta - 1, a)
    count_b = comb(K - a, r) * tail
    if p.case == "i":
        count_a = comb(D, r) * comb(K - a, r) * tail
    else:
        count_a = comb(M, r - D) * comb(K - r, a) * tail
    return count_a, count_b


def placement_budget_needed(inst: Instance) -> int:
    pairs = comb(inst.K, inst.M) * comb(inst.K - inst.M, inst.D)
    return pairs * sum(branch_counts(inst))


def _check_budget(needed: int, budget: int) -> None:
    if needed > budget:
        raise BudgetExceeded(
            f"exact enumeration needs {needed} placements (budget {budget}); "
            "raise the budget or use the Monte-Carlo mode"
        )


def _placements(inst: Instance, ws: DemandSideInfo) -> Iterator[tuple[str, tuple, tuple, tuple]]:
    """Yield ``(branch, Q0, Q1, rest_blocks)`` for every placement the rule allows."""
    p = inst.params
    a, r, D = p.alpha, p.rho, inst.D
    W, S = sorted(ws.W), sorted(ws.S)
    rest = [i for i in range(1, inst.K + 1) if i not in ws.W and i not in ws.S]

    if p.case == "i":
        for q0 in combinations(W, r):
            lead = [i for i in W if i not in q0] + S
            for fill in combinations(rest, r):
                chosen = set(fill)
                remaining = [i for i in rest if i not in chosen]
                q1 = tuple(sorted(lead + list(fill)))
                for tail in _block_partitions(remaining, a):
                    yield "A", q0, q1, tail
    else:
        for extra in combinations(S, r - D):
            q0 = tuple(sorted(W + list(extra)))
            others = [i for i in range(1, inst.K + 1) if i not in q0]
            for q1 in combinations(others, a):
                chosen = set(q1)
                remaining = [i for i in others if i not in chosen]
                for tail in _block_partitions(remaining, a):
                    yield "A", q0, q1, tail

    q1 = tuple(sorted(W + S))
    for q0 in combinations(rest, r):
        chosen = set(q0)
        remaining = [i for i in rest if i not in chosen]
        for tail in _block_partitions(remaining, a):
            yield "B", q0, q1, tail


def _key(q0: tuple, q1: tuple, tail: tuple, variant: Variant) -> QueryKey:
    if variant.shuffle:
        return QueryKey(q0, tuple(sorted((q1, *tail))))
    return QueryKey(q0, (q1, *tail))


def query_distribution(
    inst: Instance, ws: DemandSideInfo, variant: Variant = HONEST, budget: int = DEFAULT_BUDGET
) -> dict[QueryKey, Fraction]:
    """Exact law of the observed query given (W, S)."""
    ws.check(inst)
    _check_budget(sum(branch_counts(inst)), budget)
    probs = dict(zip("AB", branch_probabilities(inst, variant)))
    counts = dict(zip("AB", branch_counts(inst)))
    dist: dict[QueryKey, Fraction] = defaultdict(Fraction)
    for branch, q0, q1, tail in _placements(inst, ws):
        if probs[branch]:
            dist[_key(q0, q1, tail, variant)] += probs[branch] / counts[branch]
    return dict(dist)


@dataclass
class Joint:
    """Joint law of (W, query key) under the uniform priors."""

    inst: Instance
    variant: Variant
    mass: dict[QueryKey, Fraction]
    index_mass: dict[QueryKey, dict[int, Fraction]]
    demands: dict[QueryKey, set[frozenset[int]]]

    def keys(self) -> list[QueryKey]:
        return sorted(self.mass)


def prior(inst: Instance) -> tuple[Fraction, Fraction]:
    """``(p_S(S), p_W|S(W|S))`` for any valid disjoint pair; invalid pairs get 0."""
    return Fraction(1, comb(inst.K, inst.M)), Fraction(1, comb(inst.K - inst.M, inst.D))


def prior_pmf(inst: Instance, W: frozenset[int], S: frozenset[int]) -> Fraction:
    if len(S) != inst.M or len(W) != inst.D or W & S:
        return Fraction(0)
    p_s, p_w = prior(inst)
    return p_s * p_w


def all_demands(inst: Instance) -> Iterator[DemandSideInfo]:
    idx = range(1, inst.K + 1)
    for S in combinations(idx, inst.M):
        rest = [i for i in idx if i not in S]
        for W in combinations(rest, inst.D):
            yield DemandSideInfo(frozenset(W), frozenset(S))


@lru_cache(maxsize=64)
def joint_distribution(inst: Instance, variant: Variant = HONEST, budget: int = DEFAULT_BUDGET) -> Joint:
    _check_budget(placement_budget_needed(inst), budget)
    p_s, p_w = prior(inst)
    probs = dict(zip("AB", branch_probabilities(inst, variant)))
    counts = dict(zip("AB", branch_counts(inst)))
    unit_mass = {b: p_s * p_w * probs[b] / counts[b] for b in "AB"}

    # integer tallies per branch; converted to rationals once at the end
    tally: dict[QueryKey, list[int]] = defaultdict(lambda: [0, 0])
    jtally: dict[QueryKey, dict[int, list[int]]] = defaultdict(lambda: defaultdict(lambda: [0, 0]))
    demands: dict[QueryKey, set[frozenset[int]]] = defaultdict(set)
    for ws in all_demands(inst):
        for branch, q0, q1, tail in _placements(inst, ws):
            if not probs[branch]:
                continue
            b = 0 if branch == "A" else 1
            key = _key(q0, q1, tail, variant)
            tally[key][b] += 1
            jt = jtally[key]
            for j in ws.W:
                jt[j][b] += 1
            demands[key].add(ws.W)

    def to_frac(c: list[int]) -> Fraction:
        return c[0] * unit_mass["A"] + c[1] * unit_mass["B"]

    mass = {k: to_frac(c) for k, c in tally.items()}
    index_mass = {
        k: {j: to_frac(jtally[k][j]) if j in jtally[k] else Fraction(0) for j in range(1, inst.K + 1)}
        for k in tally
    }
    return Joint(inst, variant, mass, index_mass, dict(demands))


# --- posterior / privacy ---------------------------------------------------

@dataclass
class PosteriorReport:
    key: QueryKey
    values: dict[int, Fraction]

    @property
    def total(self) -> Fraction:
        return sum(self.values.values(), Fraction(0))

    def to_json(self) -> dict:
        return {"key": self.key.to_json(), "posterior": {str(j): frac_str(v) for j, v in self.values.items()}}


def posterior(
    inst: Instance, key: QueryKey, variant: Variant = HONEST, budget: int = DEFAULT_BUDGET
) -> PosteriorReport:
    """``P(j in W | key)`` for every j, by Bayes over all (W, S)."""
    joint = joint_distribution(inst, variant, budget)
    if key not in joint.mass:
        raise AuditError(f"unreachable key {key}")
    z = joint.mass[key]
    return PosteriorReport(key, {j: m / z for j, m in joint.index_mass[key].items()})


@dataclass
class PrivacyReport:
    instance: Instance
    variant: str
    keys_checked: int
    passed: bool
    worst_violation: Fraction
    violations: list[tuple[QueryKey, int, Fraction]] = field(default_factory=list)

    def to_json(self, max_violations: int = 50) -> dict:
        return {
            "instance": self.instance.to_json(),
            "keys_checked": self.keys_checked,
            "pass": self.passed,
            "violations": [
                {"key": k.to_json(), "j": j, "posterior": frac_str(p)}
                for k, j, p in self.violations[:max_violations]
            ],
            "n_violations": len(self.violations),
            "worst_violation": frac_str(self.worst_violation),
            "variant": self.variant,
        }


def audit_individual_privacy(
    inst: Instance, variant: Variant = HONEST, budget: int = DEFAULT_BUDGET
) -> PrivacyReport:
    joint = joint_distribution(inst, variant, budget)
    target = Fraction(inst.D, inst.K)
    violations = []
    worst = Fraction(0)
    for key in joint.keys():
        for j, p in posterior(inst, key, variant, budget).values.items():
            if p != target:
                violations.append((key, j, p))
                worst = max(worst, abs(p - target))
    return PrivacyReport(
        instance=inst,
        variant=variant.name,
        keys_checked=len(joint.mass),
        passed=not violations,
        worst_violation=worst,
        violations=violations,
    )


# --- theta balance -----------------------------------------------------------

def theta_balance_sides(
    inst: Instance, weights: BranchWeights | None = None, form: str = "printed"
) -> tuple[Fraction, Fraction]:
    """Both sides of the balance identity for one index in ``Q0`` vs one in a block.

    Each side is a count of (W, S) pairs times the closed-form ``P(Q | W, S)``.
    ``form="printed"`` uses the pair counts exactly as the closed forms in the
    privacy proof state them; ``form="direct"`` recounts the pairs from the
    sums' index sets. The two differ only when ``rho > D`` (``C(rho, D)`` vs
    ``C(rho-1, D-1)`` choices of a demand set inside ``Q0`` containing j).
    """
    if form not in ("printed", "direct"):
        raise ValueError(f"unknown form {form!r}")
    w = weights or theta_weights(inst)
    K, M, D = inst.K, inst.M, inst.D
    p = inst.params
    a, b, r = p.alpha, p.beta, p.rho
    total = w.theta1 + w.other
    pa, pb = w.theta1 / total, w.other / total
    prod_shifted = prod(comb(K - i * a - r, a) for i in range(1, b))
    prod_plain = prod(comb(K - i * a, a) for i in range(1, b))
    if r < D:
        p_a = pa * factorial(b - 1) / (comb(D, r) * comb(K - a, r) * prod_shifted)
        p_b = pb * factorial(b - 1) / prod_plain
        q0_side = b * comb(a, M + r) * comb(M + r, M) * p_a
        block_side = comb(a - 1, M) * p_b + comb(a - 1, D - r - 1) * comb(M + r, M) * p_a
        return q0_side, block_side
    p_a = pa * factorial(b) / (comb(M, r - D) * prod(comb(K - i * a - r, a) for i in range(b)))
    p_b = pb * factorial(b - 1) / prod_plain
    w_choices = comb(r, D) if form == "printed" else comb(r - 1, D - 1)
    q0_side = w_choices * comb(K - r, a - r) * p_a
    block_side = comb(a - 1, M) * p_b
    return q0_side, block_side


def verify_theta_balance(inst: Instance, weights: BranchWeights | None = None, form: str = "printed") -> bool:
    lhs, rhs = theta_balance_sides(inst, weights, form)
    return lhs == rhs


# --- support bound / decodability -------------------------------------------

def min_certain_cover(
    inst: Instance, key: QueryKey, variant: Variant = HONEST, budget: int = DEFAULT_BUDGET
) -> tuple[int, tuple[int, ...]]:
    """Smallest J hitting every demand set that has positive mass under ``key``."""
    joint = joint_distribution(inst, variant, budget)
    if key not in joint.mass:
        raise AuditError(f"unreachable key {key}")
    masks = [sum(1 << (j - 1) for j in W) for W in joint.demands[key]]
    for size in range(inst.K + 1):
        for J in combinations(range(1, inst.K + 1), size):
            jm = sum(1 << (j - 1) for j in J)
            if all(m & jm for m in masks):
                return size, J
    raise AssertionError("J = [K] always hits every demand set")


def decodability_check(query: Query, Sstar: Sequence[int], Wstar: Sequence[int]) -> bool:
    """True iff the answer plus ``X_{S*}`` determines every ``X_j``, ``j`` in ``W*``."""
    Sstar, Wstar = set(Sstar), set(Wstar)
    if len(Sstar) != query.M or len(Wstar) != query.D or Sstar & Wstar:
        raise ParameterError(
            f"need disjoint |S*|={query.M} and |W*|={query.D}, got {sorted(Sstar)} and {sorted(Wstar)}"
        )
    space = RowSpace(coefficient_matrix(query).with_rows(unit(query.K, i) for i in Sstar))
    return all(unit(query.K, j) in space for j in Wstar)


def drop_block(query: Query, index: int) -> Query:
    """The query with one block's equations removed (a truncated answer)."""
    parts = list(query.parts)
    parts[index] = Block(parts[index].indices, ())
    return Query(
        K=query.K, q=query.q, m=query.m, rho=query.rho, alpha=query.alpha,
        gamma=query.gamma, D=query.D, q0=query.q0, parts=tuple(parts),
    )


@dataclass
class Lemma2Report:
    instance: Instance
    keys_checked: int
    passed: bool
    failures: list[tuple[QueryKey, int]] = field(default_factory=list)
    witnesses: dict = field(default_factory=dict, repr=False)

    def to_json(self) -> dict:
        return {
            "instance": self.instance.to_json(),
            "keys_checked": self.keys_checked,
            "pass": self.passed,
            "failures": [{"key": k.to_json(), "j": j} for k, j in self.failures],
        }


def decodable_sets(query: Query, M: int) -> dict[tuple[int, ...], frozenset[int]]:
    """For every side set S* of size M, the messages decodable from it."""
    base = coefficient_matrix(query)
    out = {}
    for Sstar in combinations(range(1, query.K + 1), M):
        space = RowSpace(base.with_rows(unit(query.K, i) for i in Sstar))
        out[Sstar] = frozenset(i for i in range(1, query.K + 1) if unit(query.K, i) in space)
    return out


def lemma2_audit(
    inst: Instance,
    variant: Variant = HONEST,
    budget: int = DEFAULT_BUDGET,
    truncate: int | None = None,
) -> Lemma2Report:
    """Every index must sit in some D-set decodable from some disjoint M-set.

    ``truncate`` drops the equations of that block position (in canonical key
    order) from every query, simulating a server that omits a block.
    """
    joint = joint_distribution(inst, variant, budget)
    failures = []
    witnesses = {}
    for key in joint.keys():
        query = query_from_key(inst, key)
        if truncate is not None:
            query = drop_block(query, truncate)
        found: dict[int, tuple] = {}
        for Sstar, dec in decodable_sets(query, inst.M).items():
            free = sorted(dec - set(Sstar))
            if len(free) < inst.D:
                continue
            for j in free:
                if j not in found:
                    Wstar = [j] + [i for i in free if i != j][: inst.D - 1]
                    if decodability_check(query, Sstar, Wstar):
                        found[j] = (tuple(sorted(Wstar)), Sstar)
        for j in range(1, inst.K + 1):
            if j not in found:
                failures.append((key, j))
        witnesses[key] = found
    return Lemma2Report(inst, len(joint.mass), not failures, failures, witnesses)


def measured_rate(query: Query) -> Fraction:
    """Demand size over answer dimension; with uniform messages H(A|Q)/L is the rank."""
    return Fraction(query.D, rank(coefficient_matrix(query)))


def measured_rates(queries: Sequence[Query]) -> list[Fraction]:
    """:func:`measured_rate` for a batch of same-instance queries, ranked together."""
    if not queries:
        return []
    ranks = batch_rank(coefficient_tensor(queries), queries[0].q)
    return [Fraction(qr.D, int(r)) for qr, r in zip(queries, ranks)]


# --- Monte-Carlo smoke test ------------------------------------------------

@dataclass
class MonteCarloReport:
    instance: Instance
    samples: int
    target: Fraction
    estimates: dict[str, float]
    z_scores: dict[str, float]

    @property
    def passed(self) -> bool:
        return all(abs(z) <= 3 for z in self.z_scores.values())

    def to_json(self) -> dict:
        return {
            "instance": self.instance.to_json(),
            "samples": self.samples,
            "target": frac_str(self.target),
            "estimates": self.estimates,
            "z_scores": self.z_scores,
            "pass": self.passed,
        }


def monte_carlo_privacy(
    inst: Instance, samples: int, seed: int, variant: Variant = HONEST
) -> MonteCarloReport:
    """Sampled check that a random index of ``Q0`` (or of a block) is demanded w.p. D/K.

    Each run draws (W, S) from the priors and inspects one uniformly chosen
    index per position class, so the indicators are independent Bernoulli
    trials and the 3-sigma binomial band applies. A smoke test only.
    """
    rng = random.Random(seed)
    hits: dict[str, int] = defaultdict(int)
    trials: dict[str, int] = defaultdict(int)
    for _ in range(samples):
        ws = random_demand(inst, rng)
        query = build_query(inst, sample_partition(inst, ws, rng, variant), rng, variant)
        classes = {"blocks": [i for b in query.parts for i in b.indices]}
        if query.q0.indices:
            classes["q0"] = list(query.q0.indices)
        if not variant.shuffle:
            classes["lead_block"] = list(query.parts[0].indices)
        for name, members in classes.items():
            trials[name] += 1
            hits[name] += rng.choice(members) in ws.W
    p = inst.D / inst.K
    estimates = {k: hits[k] / trials[k] for k in trials}
    z = {k: (estimates[k] - p) / math.sqrt(p * (1 - p) / trials[k]) for k in trials}
    return MonteCarloReport(inst, samples, Fraction(inst.D, inst.K), estimates, z)
