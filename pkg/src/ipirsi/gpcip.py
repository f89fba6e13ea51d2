"""The GPC-IP retrieval protocol: partition, query, answer, recover.

The aggregator splits ``[K]`` into a small block ``Q0`` of size ``rho`` and
``beta`` blocks of size ``alpha = M + D``, then asks the server for a few
Vandermonde-coded sums over each block. Which block holds the demand is hidden
by a weighted coin between two placement branches plus a shuffle of the
blocks.

Indices are 1-based throughout, matching the external JSON formats.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property, lru_cache
from math import comb, prod
from typing import Iterable, Mapping, Sequence

import numpy as np

from .ff import (
    CoeffMatrix,
    FieldError,
    MessageVec,
    is_prime,
    linear_combination,
    next_prime,
    power_rows,
    vandermonde_solve,
)


class ParameterError(ValueError):
    """Invalid problem parameters."""


class ProtocolError(RuntimeError):
    """A query/answer pair that cannot be decoded (never happens on honest runs)."""


def check_params(K: int, M: int, D: int) -> None:
    if D < 2:
        raise ParameterError(f"D must be >= 2 (got D={D})")
    if M < 1:
        raise ParameterError(f"M must be >= 1 (got M={M})")
    if D + M > K:
        raise ParameterError(f"D+M must be ≤ K (got D+M={D + M}, K={K})")


@dataclass(frozen=True)
class Instance:
    """Problem size. ``q`` defaults to the smallest prime >= M+D."""

    K: int
    M: int
    D: int
    q: int | None = None
    m: int = 1

    def __post_init__(self) -> None:
        check_params(self.K, self.M, self.D)
        if self.m < 1:
            raise ParameterError(f"m must be >= 1 (got m={self.m})")
        if self.q is None:
            object.__setattr__(self, "q", next_prime(self.M + self.D))
        if not is_prime(self.q):
            raise ParameterError(f"q must be prime (got q={self.q})")
        if self.q < self.M + self.D:
            raise ParameterError(f"field too small: q={self.q} < alpha={self.M + self.D}")

    @cached_property
    def params(self) -> DerivedParams:
        return derive_params(self)

    def to_json(self) -> dict:
        return {"K": self.K, "M": self.M, "D": self.D, "q": self.q, "m": self.m}


@dataclass(frozen=True)
class DerivedParams:
    alpha: int
    beta: int
    rho: int
    gamma: int
    omegas: tuple[int, ...]
    case: str  # "i" when rho < D, "ii" otherwise


def derive_params(inst: Instance) -> DerivedParams:
    alpha = inst.M + inst.D
    if inst.q < alpha:
        raise ParameterError(f"field too small: q={inst.q} < alpha={alpha}")
    beta = inst.K // alpha
    rho = inst.K - alpha * beta
    return DerivedParams(
        alpha=alpha,
        beta=beta,
        rho=rho,
        gamma=min(rho, inst.D),
        omegas=tuple(range(alpha)),
        case="i" if rho < inst.D else "ii",
    )


@dataclass(frozen=True)
class DemandSideInfo:
    W: frozenset[int]
    S: frozenset[int]

    def __post_init__(self) -> None:
        object.__setattr__(self, "W", frozenset(self.W))
        object.__setattr__(self, "S", frozenset(self.S))
        if self.W & self.S:
            raise ParameterError(f"demand and side information overlap: {sorted(self.W & self.S)}")

    def check(self, inst: Instance) -> None:
        if len(self.W) != inst.D or len(self.S) != inst.M:
            raise ParameterError(
                f"need |W|={inst.D} and |S|={inst.M}, got {len(self.W)} and {len(self.S)}"
            )
        bad = [i for i in self.W | self.S if not 1 <= i <= inst.K]
        if bad:
            raise ParameterError(f"indices out of range 1..{inst.K}: {sorted(bad)}")


# --- branch weights ---------------------------------------------------------

@dataclass(frozen=True)
class BranchWeights:
    theta1: Fraction
    theta2: Fraction | None = None
    theta3: Fraction | None = None

    @property
    def other(self) -> Fraction:
        """The weight competing with theta1 (theta2 in case (i), theta3 in case (ii))."""
        return self.theta2 if self.theta2 is not None else self.theta3

    def branch_probs(self) -> tuple[Fraction, Fraction]:
        """``(P(branch A), P(branch B))``; A is the theta1 branch."""
        total = self.theta1 + self.other
        return self.theta1 / total, self.other / total


def _binom(n: int, k: int) -> int:
    assert 0 <= k <= n, f"binomial({n}, {k}) outside the valid range"
    return comb(n, k)


def theta_weights(inst: Instance, corrected: bool = False) -> BranchWeights:
    """Branch weights as printed. With ``corrected=True``, theta3 counts the
    demand sets inside ``Q0`` that contain a fixed index, C(rho-1, D-1), in
    place of C(rho, D); the two agree unless rho > D, and only the corrected
    weight balances the posteriors there."""
    K, M, D = inst.K, inst.M, inst.D
    p = inst.params
    a, b, r = p.alpha, p.beta, p.rho
    theta1 = Fraction(_binom(a - 1, M), prod(_binom(K - i * a, a) for i in range(1, b)))
    if r < D:
        num = _binom(a - 1, M + r) * _binom(M + r, M) * (Fraction(a * b, D - r) - 1)
        den = _binom(D, r) * _binom(K - a, r) * prod(_binom(K - i * a - r, a) for i in range(1, b))
        return BranchWeights(theta1=theta1, theta2=num / den)
    w_choices = _binom(r - 1, D - 1) if corrected else _binom(r, D)
    num = b * w_choices * _binom(K - r, a - r)
    den = _binom(M, r - D) * prod(_binom(K - i * a - r, a) for i in range(b))
    return BranchWeights(theta1=theta1, theta3=Fraction(num, den))


@dataclass(frozen=True)
class Variant:
    """Protocol knobs. The default is the honest protocol; the others are
    deliberate breakages used to show the auditor is not vacuous."""

    always_branch_a: bool = False
    theta1_scale: Fraction = Fraction(1)
    shuffle: bool = True
    corrected_theta3: bool = False

    @property
    def name(self) -> str:
        if self == HONEST:
            return "honest"
        parts = []
        if self.always_branch_a:
            parts.append("always-branch-a")
        if self.theta1_scale != 1:
            parts.append(f"theta1x{self.theta1_scale}")
        if not self.shuffle:
            parts.append("no-shuffle")
        if self.corrected_theta3:
            parts.append("corrected-theta3")
        return "+".join(parts)


HONEST = Variant()
MUTATIONS = {
    "always-branch-a": Variant(always_branch_a=True),
    "theta1-doubled": Variant(theta1_scale=Fraction(2)),
    "no-shuffle": Variant(shuffle=False),
}
CORRECTED = Variant(corrected_theta3=True)


@lru_cache(maxsize=256)
def branch_probabilities(inst: Instance, variant: Variant = HONEST) -> tuple[Fraction, Fraction]:
    if variant.always_branch_a:
        return Fraction(1), Fraction(0)
    w = theta_weights(inst, corrected=variant.corrected_theta3)
    if variant.theta1_scale != 1:
        w = BranchWeights(w.theta1 * variant.theta1_scale, w.theta2, w.theta3)
    return w.branch_probs()


def _bernoulli(p: Fraction, rng: random.Random) -> bool:
    # exact: integer threshold against the reduced denominator
    return rng.randrange(p.denominator) < p.numerator


# --- partition / query / answer -------------------------------------------

@dataclass(frozen=True)
class Partition:
    """Output of the placement step, before the shuffle.

    ``parts[0]`` is the block the placement rule singles out (``Q1``).
    ``branch`` is ``"A"`` for the theta1 branch, ``"B"`` otherwise.
    """

    q0: tuple[int, ...]
    parts: tuple[tuple[int, ...], ...]
    branch: str
    case: str

    def validate(self, K: int, rho: int, alpha: int) -> None:
        cells = [self.q0, *self.parts]
        flat = [i for c in cells for i in c]
        if len(flat) != len(set(flat)) or set(flat) != set(range(1, K + 1)):
            raise ProtocolError(f"cells do not partition [1..{K}]: {cells}")
        if len(self.q0) != rho or any(len(p) != alpha for p in self.parts):
            raise ProtocolError(f"bad cell sizes: {[len(c) for c in cells]}")


def _chunk(items: Sequence[int], size: int) -> list[tuple[int, ...]]:
    return [tuple(sorted(items[i:i + size])) for i in range(0, len(items), size)]


def sample_partition(
    inst: Instance, ws: DemandSideInfo, rng: random.Random, variant: Variant = HONEST
) -> Partition:
    ws.check(inst)
    p = inst.params
    a, r, D = p.alpha, p.rho, inst.D
    W, S = sorted(ws.W), sorted(ws.S)
    rest = [i for i in range(1, inst.K + 1) if i not in ws.W and i not in ws.S]
    pa, _ = branch_probabilities(inst, variant)
    branch_a = _bernoulli(pa, rng)

    if not branch_a:
        rng.shuffle(rest)
        q0, others = rest[:r], rest[r:]
        parts = [tuple(sorted(W + S)), *_chunk(others, a)]
    elif r < D:
        q0 = rng.sample(W, r)
        fillers = rng.sample(rest, r)
        used = set(fillers)
        q1 = [i for i in W if i not in q0] + S + fillers
        others = [i for i in rest if i not in used]
        rng.shuffle(others)
        parts = [tuple(sorted(q1)), *_chunk(others, a)]
    else:
        q0 = W + rng.sample(S, r - D)
        taken = set(q0)
        others = [i for i in range(1, inst.K + 1) if i not in taken]
        rng.shuffle(others)
        parts = _chunk(others, a)
    return Partition(
        q0=tuple(sorted(q0)),
        parts=tuple(parts),
        branch="A" if branch_a else "B",
        case=p.case,
    )


@dataclass(frozen=True)
class Block:
    indices: tuple[int, ...]
    coeff_rows: tuple[tuple[int, ...], ...]

    def to_json(self) -> dict:
        return {"indices": list(self.indices), "coeff_rows": [list(r) for r in self.coeff_rows]}

    @classmethod
    def from_json(cls, obj: Mapping) -> Block:
        return cls(tuple(obj["indices"]), tuple(tuple(r) for r in obj["coeff_rows"]))


@dataclass(frozen=True)
class Query:
    K: int
    q: int
    m: int
    rho: int
    alpha: int
    gamma: int
    D: int
    q0: Block
    parts: tuple[Block, ...]

    @property
    def M(self) -> int:
        return self.alpha - self.D

    @property
    def blocks(self) -> tuple[Block, ...]:
        return (self.q0, *self.parts)

    def to_json(self) -> dict:
        return {
            "K": self.K, "q": self.q, "m": self.m, "rho": self.rho, "alpha": self.alpha,
            "gamma": self.gamma, "D": self.D,
            "q0": self.q0.to_json(),
            "parts": [b.to_json() for b in self.parts],
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> Query:
        return cls(
            K=obj["K"], q=obj["q"], m=obj["m"], rho=obj["rho"], alpha=obj["alpha"],
            gamma=obj["gamma"], D=obj["D"],
            q0=Block.from_json(obj["q0"]),
            parts=tuple(Block.from_json(b) for b in obj["parts"]),
        )


def make_query(inst: Instance, q0: Iterable[int], parts: Iterable[Iterable[int]]) -> Query:
    """Attach the fixed coefficient rows to blocks given in send order."""
    p = inst.params
    q0_rows = power_rows(p.omegas[:p.rho], p.gamma, inst.q) if p.rho else ()
    part_rows = power_rows(p.omegas, inst.D, inst.q)
    return Query(
        K=inst.K, q=inst.q, m=inst.m, rho=p.rho, alpha=p.alpha, gamma=p.gamma, D=inst.D,
        q0=Block(tuple(sorted(q0)), q0_rows),
        parts=tuple(Block(tuple(sorted(b)), part_rows) for b in parts),
    )


def build_query(
    inst: Instance, partition: Partition, rng: random.Random, variant: Variant = HONEST
) -> Query:
    partition.validate(inst.K, inst.params.rho, inst.params.alpha)
    parts = list(partition.parts)
    if variant.shuffle:
        rng.shuffle(parts)
    return make_query(inst, partition.q0, parts)


@dataclass(frozen=True)
class Answer:
    a0: tuple[MessageVec, ...]
    ai: tuple[tuple[MessageVec, ...], ...]

    def to_json(self) -> dict:
        return {"a0": [list(v) for v in self.a0], "ai": [[list(v) for v in blk] for blk in self.ai]}

    @classmethod
    def from_json(cls, obj: Mapping) -> Answer:
        return cls(
            a0=tuple(tuple(v) for v in obj["a0"]),
            ai=tuple(tuple(tuple(v) for v in blk) for blk in obj["ai"]),
        )


def _block_answer(block: Block, messages: Sequence[MessageVec], q: int, m: int) -> tuple[MessageVec, ...]:
    xs = [messages[i - 1] for i in block.indices]
    return tuple(linear_combination(row, xs, q, m) for row in block.coeff_rows)


def answer_query(query: Query, messages: Sequence[MessageVec]) -> Answer:
    """Server side: one coded sum per coefficient row of every block."""
    if len(messages) != query.K:
        raise ParameterError(f"expected {query.K} messages, got {len(messages)}")
    return Answer(
        a0=_block_answer(query.q0, messages, query.q, query.m),
        ai=tuple(_block_answer(b, messages, query.q, query.m) for b in query.parts),
    )


def recover(
    query: Query, answer: Answer, ws: DemandSideInfo, side_values: Mapping[int, MessageVec]
) -> dict[int, MessageVec]:
    """Aggregator side: strip known side messages, solve each demand block."""
    if len(answer.ai) != len(query.parts) or len(answer.a0) != len(query.q0.coeff_rows):
        raise ProtocolError("answer does not match the query's block structure")
    missing = ws.S - set(side_values)
    if missing:
        raise ParameterError(f"side values missing for {sorted(missing)}")

    q, m = query.q, query.m
    out: dict[int, MessageVec] = {}
    for block, eqs in zip(query.blocks, (answer.a0, *answer.ai)):
        if not ws.W.intersection(block.indices):
            continue
        if len(eqs) != len(block.coeff_rows):
            raise ProtocolError("answer block has the wrong number of equations")
        known = [l for l, i in enumerate(block.indices) if i in ws.S]
        unknown = [l for l, i in enumerate(block.indices) if i not in ws.S]
        if len(unknown) > len(eqs):
            raise ProtocolError(
                f"undecodable: {len(unknown)} unknowns in block {block.indices} with {len(eqs)} equations"
            )
        n = len(unknown)
        residual = []
        for row, y in zip(block.coeff_rows[:n], eqs[:n]):
            side = linear_combination(
                [row[l] for l in known], [side_values[block.indices[l]] for l in known], q, m
            )
            residual.append(tuple((a - b) % q for a, b in zip(y, side)))
        # row j is (w^j) over the block's positions, so the residual system is Vandermonde
        nodes = [block.coeff_rows[1][l] if n > 1 else 0 for l in unknown]
        if any(block.coeff_rows[j][l] != pow(w, j, q) for j in range(n) for l, w in zip(unknown, nodes)):
            raise ProtocolError(f"coefficient rows of block {block.indices} are not power rows")
        try:
            sol = vandermonde_solve(nodes, residual, q)
        except FieldError as exc:
            raise ProtocolError(f"undecodable: {exc}") from exc
        for l, x in zip(unknown, sol):
            i = block.indices[l]
            if i in ws.W:
                out[i] = x
    if set(out) != ws.W:
        raise ProtocolError(f"undecodable: recovered {sorted(out)} of {sorted(ws.W)}")
    return out


def coefficient_matrix(query: Query) -> CoeffMatrix:
    """One K-column row per answer equation, blocks in send order."""
    rows = []
    for block in query.blocks:
        for coeffs in block.coeff_rows:
            row = [0] * query.K
            for i, c in zip(block.indices, coeffs):
                row[i - 1] = c
            rows.append(tuple(row))
    return CoeffMatrix(tuple(rows), query.K, query.q)


def coefficient_tensor(queries: Sequence[Query]) -> np.ndarray:
    """Stack ``coefficient_matrix`` of many same-shape queries into ``(N, rows, K)``.

    All queries must share K, q and the per-block coefficient rows (true for
    any batch from one instance); only the index placement varies.
    """
    if not queries:
        raise ParameterError("empty batch")
    first = queries[0]
    # template in send-order positions: column t is the t-th index listed
    template = coefficient_matrix(make_positional(first))
    sizes = tuple(len(b.indices) for b in first.blocks)
    rows = tuple(b.coeff_rows for b in first.blocks)
    order = []
    for query in queries:
        blocks = query.blocks
        if (
            query.K != first.K or query.q != first.q
            or tuple(len(b.indices) for b in blocks) != sizes
            or any(b.coeff_rows is not r and b.coeff_rows != r for b, r in zip(blocks, rows))
        ):
            raise ParameterError("batch mixes queries of different shapes")
        order.append([i for b in blocks for i in b.indices])
    order = np.array(order, dtype=np.int64).reshape(len(queries), first.K)
    T = np.array(template.rows, dtype=np.int64).reshape(len(template), first.K)
    out = np.zeros((len(queries), T.shape[0], first.K), dtype=np.int64)
    idx = np.broadcast_to((order - 1)[:, None, :], out.shape)
    np.put_along_axis(out, idx, np.broadcast_to(T, out.shape), axis=2)
    return out


def make_positional(query: Query) -> Query:
    """The same query with block indices renamed 1..K in send order."""
    blocks, start = [], 1
    for b in query.blocks:
        blocks.append(Block(tuple(range(start, start + len(b.indices))), b.coeff_rows))
        start += len(b.indices)
    return Query(
        K=query.K, q=query.q, m=query.m, rho=query.rho, alpha=query.alpha,
        gamma=query.gamma, D=query.D, q0=blocks[0], parts=tuple(blocks[1:]),
    )


def achievable_rate(K: int, M: int, D: int) -> Fraction:
    check_params(K, M, D)
    a = M + D
    beta = K // a
    if Fraction(K - D, a) <= beta:
        return Fraction(D, K - M * beta)
    return Fraction(1, -(-K // a))


def random_messages(inst: Instance, rng: random.Random) -> list[MessageVec]:
    flat = rng.choices(range(inst.q), k=inst.K * inst.m)
    return [tuple(flat[i * inst.m:(i + 1) * inst.m]) for i in range(inst.K)]


def random_demand(inst: Instance, rng: random.Random) -> DemandSideInfo:
    """Draw (W, S) from the uniform priors: S uniform, then W uniform off S."""
    idx = list(range(1, inst.K + 1))
    S = rng.sample(idx, inst.M)
    W = rng.sample([i for i in idx if i not in S], inst.D)
    return DemandSideInfo(frozenset(W), frozenset(S))


@dataclass
class RunResult:
    partition: Partition
    query: Query
    answer: Answer
    recovered: dict[int, MessageVec]


def run_protocol(
    inst: Instance,
    ws: DemandSideInfo,
    messages: Sequence[MessageVec],
    rng: random.Random,
    variant: Variant = HONEST,
) -> RunResult:
    partition = sample_partition(inst, ws, rng, variant)
    query = build_query(inst, partition, rng, variant)
    answer = answer_query(query, messages)
    recovered = recover(query, answer, ws, {i: messages[i - 1] for i in ws.S})
    return RunResult(partition, query, answer, recovered)
