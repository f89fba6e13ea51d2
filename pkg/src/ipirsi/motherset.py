"""Digraphs, mother vertex-sets and the D-graph conjecture scanner.

Nodes are 1-based. Minimum mother vertex-sets are found by brute force over
node subsets in increasing size, so the first hit is a minimum-cardinality
witness.

Two mother-set readings are supported:

* ``restricted-target``: every node outside the set with nonzero out-degree
  (external) or in-degree (internal) is reachable from the set;
* ``full-cover``: the reach sets of the chosen nodes cover every node.

The conjecture checker uses ``restricted-target``. Graph scans are vectorized
with numpy over bitmask adjacency; :func:`classify_graphs` is that fast path
and is cross-checked against the per-graph functions in the test-suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Iterator, Mapping

import numpy as np

RESTRICTED = "restricted-target"
FULL = "full-cover"
DEFAULT_NODE_BUDGET = 20
DEFAULT_SCAN_BUDGET = 2**21


class GraphError(ValueError):
    pass


class BudgetExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class Digraph:
    n: int
    edges: frozenset[tuple[int, int]]

    def __post_init__(self) -> None:
        edges = frozenset((int(u), int(v)) for u, v in self.edges)
        for u, v in edges:
            if u == v:
                raise GraphError(f"self-loop at node {u}")
            if not (1 <= u <= self.n and 1 <= v <= self.n):
                raise GraphError(f"edge ({u}, {v}) outside nodes 1..{self.n}")
        object.__setattr__(self, "edges", edges)

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]]) -> Digraph:
        return cls(n, frozenset(map(tuple, edges)))

    @property
    def nodes(self) -> range:
        return range(1, self.n + 1)

    def out_degree(self, v: int) -> int:
        return sum(1 for u, _ in self.edges if u == v)

    def in_degree(self, v: int) -> int:
        return sum(1 for _, w in self.edges if w == v)

    def successors(self) -> dict[int, list[int]]:
        succ: dict[int, list[int]] = {v: [] for v in self.nodes}
        for u, v in sorted(self.edges):
            succ[u].append(v)
        return succ

    def to_json(self) -> dict:
        return {"n": self.n, "edges": [list(e) for e in sorted(self.edges)]}

    @classmethod
    def from_json(cls, obj: Mapping) -> Digraph:
        return cls.from_edges(obj["n"], (tuple(e) for e in obj["edges"]))


def complete_digraph(n: int) -> Digraph:
    return Digraph.from_edges(n, ((u, v) for u in range(1, n + 1) for v in range(1, n + 1) if u != v))


def transpose(G: Digraph) -> Digraph:
    return Digraph(G.n, frozenset((v, u) for u, v in G.edges))


def reach_set(G: Digraph, v: int) -> frozenset[int]:
    """``v`` plus every node reachable from it by a nonempty path."""
    succ = G.successors()
    seen = {v}
    stack = [v]
    while stack:
        for w in succ[stack.pop()]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return frozenset(seen)


def _reach_masks(G: Digraph) -> list[int]:
    # bit (v-1) of masks[u-1] is set iff v in reach_set(G, u)
    return [sum(1 << (w - 1) for w in reach_set(G, v)) for v in G.nodes]


# --- strongly connected components ------------------------------------------

@dataclass
class Condensation:
    components: list[frozenset[int]]
    component_of: dict[int, int]
    dag: dict[int, set[int]]


def scc_condensation(G: Digraph) -> Condensation:
    """Tarjan's algorithm (iterative); components come out sinks-first."""
    succ = G.successors()
    index: dict[int, int] = {}
    low: dict[int, int] = {}
    on_stack: set[int] = set()
    stack: list[int] = []
    comps: list[frozenset[int]] = []
    counter = 0
    for root in G.nodes:
        if root in index:
            continue
        work = [(root, iter(succ[root]))]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            v, it = work[-1]
            advanced = False
            for w in it:
                if w not in index:
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack.add(w)
                    work.append((w, iter(succ[w])))
                    advanced = True
                    break
                if w in on_stack:
                    low[v] = min(low[v], index[w])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[v])
            if low[v] == index[v]:
                comp = set()
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.add(w)
                    if w == v:
                        break
                comps.append(frozenset(comp))
    comp_of = {v: i for i, c in enumerate(comps) for v in c}
    dag: dict[int, set[int]] = {i: set() for i in range(len(comps))}
    for u, v in G.edges:
        if comp_of[u] != comp_of[v]:
            dag[comp_of[u]].add(comp_of[v])
    return Condensation(comps, comp_of, dag)


def reach_via_condensation(cond: Condensation, v: int) -> frozenset[int]:
    start = cond.component_of[v]
    seen = {start}
    stack = [start]
    while stack:
        for c in cond.dag[stack.pop()]:
            if c not in seen:
                seen.add(c)
                stack.append(c)
    return frozenset().union(*(cond.components[c] for c in seen))


# --- mother vertex-sets ----------------------------------------------------

@dataclass(frozen=True)
class MotherSetResult:
    size: int
    witness: tuple[int, ...]
    variant: str


def _min_mother_set(G: Digraph, targets: int, variant: str, budget: int) -> MotherSetResult:
    if G.n > budget:
        raise BudgetExceeded(f"brute force over {G.n} nodes exceeds the budget of {budget}")
    if variant not in (RESTRICTED, FULL):
        raise ValueError(f"unknown variant {variant!r}")
    reach = _reach_masks(G)
    goal = (1 << G.n) - 1 if variant == FULL else targets
    for size in range(G.n + 1):
        for I in combinations(range(G.n), size):
            covered = 0
            for v in I:
                covered |= reach[v]
            # reach masks contain their own node, so covered includes I itself
            if goal & ~covered == 0:
                return MotherSetResult(size, tuple(v + 1 for v in I), variant)
    raise AssertionError("the full node set always covers")


def mu_ext(G: Digraph, variant: str = RESTRICTED, budget: int = DEFAULT_NODE_BUDGET) -> MotherSetResult:
    targets = sum(1 << (u - 1) for u in {u for u, _ in G.edges})
    return _min_mother_set(G, targets, variant, budget)


def mu_int(G: Digraph, variant: str = RESTRICTED, budget: int = DEFAULT_NODE_BUDGET) -> MotherSetResult:
    targets = sum(1 << (v - 1) for v in {v for _, v in G.edges})
    return _min_mother_set(G, targets, variant, budget)


@dataclass
class DGraphReport:
    ok: bool
    failed_conditions: list[str]
    mu_int_transpose: int


def is_d_graph(G: Digraph, D: int) -> DGraphReport:
    failed = []
    if any(G.in_degree(v) < 1 for v in G.nodes):
        failed.append("i")
    if any(0 < G.out_degree(v) < D for v in G.nodes):
        failed.append("ii")
    mu = mu_int(transpose(G)).size
    if mu < -(-G.n // D):
        failed.append("iii")
    return DGraphReport(not failed, failed, mu)


# --- vectorized scanning -----------------------------------------------------

def _edge_slots(n: int) -> list[tuple[int, int]]:
    """0-based ordered pairs; bit e of a graph code is the edge ``slots[e]``."""
    return [(u, v) for u in range(n) for v in range(n) if u != v]


def graph_from_bits(bits: np.ndarray, n: int) -> Digraph:
    slots = _edge_slots(n)
    return Digraph.from_edges(n, ((u + 1, v + 1) for e, (u, v) in enumerate(slots) if bits[e]))


def bits_from_graph(G: Digraph) -> np.ndarray:
    return np.array([(u + 1, v + 1) in G.edges for u, v in _edge_slots(G.n)], dtype=np.uint8)


def _subset_covers(cols: np.ndarray, n: int) -> np.ndarray:
    """``cov[mask]`` = OR of ``cols[:, v]`` over bits v of mask, for all masks."""
    cov = np.zeros((1 << n, cols.shape[0]), dtype=np.int64)
    for mask in range(1, 1 << n):
        low = (mask & -mask).bit_length() - 1
        cov[mask] = cov[mask & (mask - 1)] | cols[:, low]
    return cov


_POPCOUNT = [bin(m).count("1") for m in range(1 << 12)]


def _min_cover_sizes(cols: np.ndarray, targets: np.ndarray, n: int) -> np.ndarray:
    cov = _subset_covers(cols, n)
    best = np.full(targets.size, n, dtype=np.int64)
    for mask in range(1 << n):
        ok = (targets & ~cov[mask]) == 0
        best = np.where(ok, np.minimum(best, _POPCOUNT[mask]), best)
    return best


def batch_mother_sets(bits: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Restricted-target ``(mu_ext(G), mu_int(G^T))`` for a batch of graphs.

    Rows of ``bits`` are edge indicators in :func:`_edge_slots` order.
    """
    N = bits.shape[0]
    out_mask = np.zeros((N, n), dtype=np.int64)
    has_out = np.zeros((N, n), dtype=np.int64)
    for e, (u, v) in enumerate(_edge_slots(n)):
        col = bits[:, e].astype(np.int64)
        out_mask[:, u] |= col << v
        has_out[:, u] |= col
    reach = out_mask | (np.int64(1) << np.arange(n, dtype=np.int64))
    for k in range(n):
        has_k = ((reach >> k) & 1).astype(bool)
        reach = np.where(has_k, reach | reach[:, k:k + 1], reach)
    reach_t = np.zeros_like(reach)
    for u in range(n):
        for v in range(n):
            reach_t[:, v] |= ((reach[:, u] >> v) & 1) << u
    # external targets: out-degree > 0 in G; internal targets of G^T: in-degree > 0
    # there, which is again out-degree > 0 in G
    targets = (has_out << np.arange(n, dtype=np.int64)).sum(axis=1)
    return _min_cover_sizes(reach, targets, n), _min_cover_sizes(reach_t, targets, n)


def classify_graphs(bits: np.ndarray, n: int, D: int) -> tuple[np.ndarray, np.ndarray]:
    """For a batch of graphs, return ``(is_d_graph, mu_ext)``.

    ``mu_ext`` is the restricted-target external mother-set size, -1 where
    the graph is not a D-graph.
    """
    N = bits.shape[0]
    out_deg = np.zeros((N, n), dtype=np.int64)
    in_deg = np.zeros((N, n), dtype=np.int64)
    for e, (u, v) in enumerate(_edge_slots(n)):
        col = bits[:, e].astype(np.int64)
        out_deg[:, u] += col
        in_deg[:, v] += col
    is_d = (in_deg >= 1).all(axis=1) & ((out_deg == 0) | (out_deg >= D)).all(axis=1)
    mu = np.full(N, -1, dtype=np.int64)
    idx = np.flatnonzero(is_d)
    if idx.size:
        ext, int_t = batch_mother_sets(bits[idx], n)
        third = int_t >= -(-n // D)
        is_d[idx[~third]] = False
        mu[idx[third]] = ext[third]
    return is_d, mu


@dataclass
class Conj2Report:
    K: int
    D: int
    mode: str
    graphs_scanned: int
    d_graphs_found: int
    max_mu_ext: int | None
    bound: int
    mu_ext_histogram: dict[int, int] = field(default_factory=dict)
    counterexamples: list[Digraph] = field(default_factory=list)
    seed: int | None = None

    @property
    def ok(self) -> bool:
        return not self.counterexamples

    def to_json(self) -> dict:
        return {
            "K": self.K,
            "D": self.D,
            "mode": self.mode,
            "seed": self.seed,
            "graphs_scanned": self.graphs_scanned,
            "d_graphs_found": self.d_graphs_found,
            "max_mu_ext": self.max_mu_ext,
            "bound": self.bound,
            "mu_ext_histogram": {str(k): v for k, v in sorted(self.mu_ext_histogram.items())},
            "counterexamples": [g.to_json() for g in self.counterexamples],
        }


def _exhaustive_batches(n: int, chunk: int) -> Iterator[np.ndarray]:
    E = n * (n - 1)
    shifts = np.arange(E, dtype=np.int64)
    for start in range(0, 1 << E, chunk):
        codes = np.arange(start, min(start + chunk, 1 << E), dtype=np.int64)
        yield ((codes[:, None] >> shifts) & 1).astype(np.uint8)


def _sample_batches(n: int, count: int, seed: int, chunk: int) -> Iterator[np.ndarray]:
    # PCG64 edge-presence bits, Bernoulli(1/2) per ordered pair, drawn chunk by chunk
    rng = np.random.Generator(np.random.PCG64(seed))
    E = n * (n - 1)
    done = 0
    while done < count:
        c = min(chunk, count - done)
        yield rng.integers(0, 2, size=(c, E), dtype=np.uint8)
        done += c


def check_conjecture2(
    K: int,
    D: int,
    mode: str = "exhaustive",
    count: int = 0,
    seed: int = 1,
    budget: int = DEFAULT_SCAN_BUDGET,
    chunk: int = 1 << 15,
) -> Conj2Report:
    """Scan digraphs on K nodes for D-graphs whose external mother set exceeds floor(K/(D+1))."""
    if K < 1 or D < 1:
        raise GraphError("need K >= 1 and D >= 1")
    if K > 12:
        raise BudgetExceeded("vectorized scan supports at most 12 nodes")
    if mode == "exhaustive":
        total = 1 << (K * (K - 1))
        if total > budget:
            raise BudgetExceeded(
                f"exhaustive scan of {total} digraphs exceeds the budget of {budget}; use sample mode"
            )
        batches = _exhaustive_batches(K, chunk)
    elif mode == "sample":
        if count < 1:
            raise GraphError("sample mode needs a positive count")
        batches = _sample_batches(K, count, seed, chunk)
    else:
        raise ValueError(f"unknown mode {mode!r}")

    bound = K // (D + 1)
    report = Conj2Report(K, D, mode, 0, 0, None, bound, seed=seed if mode == "sample" else None)
    hist: dict[int, int] = {}
    for bits in batches:
        is_d, mu = classify_graphs(bits, K, D)
        report.graphs_scanned += bits.shape[0]
        report.d_graphs_found += int(is_d.sum())
        for value, c in zip(*np.unique(mu[is_d], return_counts=True)):
            hist[int(value)] = hist.get(int(value), 0) + int(c)
        for row in np.flatnonzero(is_d & (mu > bound)):
            report.counterexamples.append(graph_from_bits(bits[row], K))
    report.mu_ext_histogram = hist
    report.max_mu_ext = max(hist) if hist else None
    return report
