"""Acceptance gate: one test per criterion, each printing a single PASS/FAIL line.

Every comparison is exact (rationals or integers). Wall-clock limits are
asserted per criterion.
"""

import dataclasses
import random
import time

from ipirsi import audit, goodrel as gr
from ipirsi import motherset as ms
from ipirsi.ff import rank, solve_linear, vandermonde_solve
from ipirsi.gpcip import (
    MUTATIONS,
    Instance,
    achievable_rate,
    answer_query,
    build_query,
    coefficient_matrix,
    random_messages,
    recover,
    sample_partition,
    theta_weights,
)

AUDITED = [(4, 1, 2), (5, 1, 2), (6, 1, 2), (7, 1, 2), (8, 1, 2), (5, 2, 2), (6, 2, 2)]

# Recoverability grid: every (W, S) exhaustively, 100 seeds, m in {1, 3}.
# (M, D) = (1, 2) runs all the way to K = 10; the other (M, D) pairs stop at
# RECOVER_K_OTHER so the whole criterion fits its time limit on one core.
RECOVER_SEEDS = 100
RECOVER_K_MAX = 10
RECOVER_K_OTHER = 8


def report(capsys, num, name, ok, detail, elapsed, limit):
    verdict = "PASS" if ok and elapsed < limit else "FAIL"
    line = f"{verdict} criterion {num} ({name}): {detail} [{elapsed:.1f}s, limit {limit}s]"
    with capsys.disabled():
        print("\n" + line)
    assert ok, line
    assert elapsed < limit, line


def _grid(K_range, Ms, Ds):
    return [(K, M, D) for K in K_range for M in Ms for D in Ds if M + D <= K]


def test_criterion_01_rate_reproduction(capsys):
    t0 = time.perf_counter()
    grid = _grid(range(3, 13), (1, 2, 3), (2, 3))
    runs, mismatches = 0, []
    for K, M, D in grid:
        inst = Instance(K, M, D)
        want = achievable_rate(K, M, D)
        demands = list(audit.all_demands(inst))
        queries = []
        for seed in range(1, 11):
            rng = random.Random(seed * 1_000_003 + K * 10_000 + M * 100 + D)
            queries.extend(build_query(inst, sample_partition(inst, ws, rng), rng) for ws in demands)
        for start in range(0, len(queries), 50_000):
            rates = audit.measured_rates(queries[start:start + 50_000])
            mismatches += [(K, M, D, r) for r in rates if r != want]
        runs += len(queries)
    elapsed = time.perf_counter() - t0
    report(capsys, 1, "rate reproduction", not mismatches,
           f"{len(grid)} instances, {runs} runs (10 seeds x all (W,S)), {len(mismatches)} mismatches",
           elapsed, 60)


def test_criterion_02_recoverability(capsys):
    t0 = time.perf_counter()
    grid = [g for g in _grid(range(3, RECOVER_K_MAX + 1), (1, 2, 3), (2, 3))
            if (g[1], g[2]) == (1, 2) or g[0] <= RECOVER_K_OTHER]
    runs, failures = 0, []
    for K, M, D in grid:
        inst1, inst3 = Instance(K, M, D, m=1), Instance(K, M, D, m=3)
        assert inst1.q == inst3.q  # smallest prime >= alpha
        demands = list(audit.all_demands(inst1))
        for seed in range(1, RECOVER_SEEDS + 1):
            rng = random.Random(seed * 1_000_003 + K * 10_000 + M * 100 + D)
            for ws in demands:
                query = build_query(inst1, sample_partition(inst1, ws, rng), rng)
                # one placement serves both message widths
                for inst, q in ((inst1, query), (inst3, dataclasses.replace(query, m=3))):
                    msgs = random_messages(inst, rng)
                    got = recover(q, answer_query(q, msgs), ws, {i: msgs[i - 1] for i in ws.S})
                    if got != {i: msgs[i - 1] for i in ws.W}:
                        failures.append((K, M, D, seed, sorted(ws.W), sorted(ws.S), inst.m))
                    runs += 1
    elapsed = time.perf_counter() - t0
    report(capsys, 2, "recoverability", not failures,
           f"{len(grid)} instances (K<={RECOVER_K_MAX} for M=1,D=2; K<={RECOVER_K_OTHER} otherwise), "
           f"{runs} round trips, {len(failures)} failures", elapsed, 120)


def test_criterion_03_exact_privacy(capsys):
    t0 = time.perf_counter()
    results = {inst: audit.audit_individual_privacy(Instance(*inst)) for inst in AUDITED}
    elapsed = time.perf_counter() - t0
    bad = [k for k, r in results.items() if not r.passed]
    keys = sum(r.keys_checked for r in results.values())
    rhos = sorted({Instance(*k).params.rho - Instance(*k).D for k in AUDITED})
    report(capsys, 3, "exact individual privacy", not bad,
           f"{len(AUDITED)} instances, {keys} keys, posterior = D/K everywhere; rho-D in {rhos}; failing: {bad}",
           elapsed, 300)


def test_criterion_04_mutation_sensitivity(capsys):
    t0 = time.perf_counter()
    caught = {}
    for name, variant in sorted(MUTATIONS.items()):
        caught[name] = [k for k in AUDITED if not audit.audit_individual_privacy(Instance(*k), variant).passed]
    elapsed = time.perf_counter() - t0
    ok = all(caught.values())
    detail = "; ".join(f"{n} fails on {len(v)}/{len(AUDITED)}" for n, v in caught.items())
    report(capsys, 4, "mutation sensitivity", ok, detail, elapsed, 300)


def test_criterion_05_certain_cover_bound(capsys):
    t0 = time.perf_counter()
    worst, bad, keys = {}, [], 0
    for k in AUDITED:
        inst = Instance(*k)
        need = -(-inst.K // inst.D)
        sizes = [audit.min_certain_cover(inst, key)[0] for key in audit.joint_distribution(inst).keys()]
        keys += len(sizes)
        worst[k] = min(sizes)
        bad += [k for s in sizes if s < need]
    elapsed = time.perf_counter() - t0
    report(capsys, 5, "certain-cover bound", not bad,
           f"{keys} keys; smallest cover per instance {worst}", elapsed, 120)


def test_criterion_06_decodable_demands(capsys):
    t0 = time.perf_counter()
    reps = {k: audit.lemma2_audit(Instance(*k)) for k in AUDITED}
    elapsed = time.perf_counter() - t0
    bad = [k for k, r in reps.items() if not r.passed]
    keys = sum(r.keys_checked for r in reps.values())
    report(capsys, 6, "decodable demand sets", not bad, f"{keys} keys x every j; failing: {bad}", elapsed, 300)


def test_criterion_07_theta_balance(capsys):
    t0 = time.perf_counter()
    n, bad_true, bad_perturbed = 0, [], []
    for K in range(3, 31):
        for D in range(2, K):
            for M in range(1, K - D + 1):
                inst = Instance(K, M, D)
                n += 1
                if not audit.verify_theta_balance(inst):
                    bad_true.append((K, M, D))
                w = theta_weights(inst)
                other = "theta2" if w.theta2 is not None else "theta3"
                for field in ("theta1", other):
                    for f in (lambda x: x + 1, lambda x: 2 * x, lambda x: x / 3):
                        pert = dataclasses.replace(w, **{field: f(getattr(w, field))})
                        if audit.verify_theta_balance(inst, pert):
                            bad_perturbed.append((K, M, D, field))
    elapsed = time.perf_counter() - t0
    report(capsys, 7, "theta balance", not bad_true and not bad_perturbed,
           f"{n} instances K<=30 balanced: {n - len(bad_true)}; "
           f"perturbations wrongly balanced: {len(bad_perturbed)} of {6 * n}", elapsed, 10)


def test_criterion_08_mother_set_bound(capsys):
    t0 = time.perf_counter()
    reps = [ms.check_conjecture2(K, 2) for K in (3, 4, 5)]
    reps += [ms.check_conjecture2(K, 2, "sample", 10**6, seed=K) for K in (6, 7)]
    elapsed = time.perf_counter() - t0
    ok = all(r.ok for r in reps)
    detail = "; ".join(
        f"K={r.K} {r.mode} {r.graphs_scanned} graphs, {r.d_graphs_found} D-graphs, "
        f"{len(r.counterexamples)} violations of mu_ext <= {r.bound}"
        for r in reps
    )
    report(capsys, 8, "mother-set bound", ok, detail, elapsed, 600)


def _random_digraph(rng, n):
    pairs = [(u, v) for u in range(1, n + 1) for v in range(1, n + 1) if u != v]
    return ms.Digraph.from_edges(n, [e for e in pairs if rng.random() < 0.5])


def test_criterion_09_oracle_equivalences(capsys):
    t0 = time.perf_counter()
    rng = random.Random(2024)
    bad_a = 0
    for _ in range(10_000):
        g = _random_digraph(rng, rng.randint(1, 8))
        cond = ms.scc_condensation(g)
        bad_a += any(ms.reach_via_condensation(cond, v) != ms.reach_set(g, v) for v in g.nodes)

    bad_b, done = 0, 0
    while done < 10_000:
        g = _random_digraph(rng, rng.randint(2, 7))
        if any(g.out_degree(v) == 0 for v in g.nodes):
            continue  # rejection sampling: uniform over sink-free digraphs
        done += 1
        bad_b += gr.min_cover_size(gr.relation_from_graph(g))[0] != ms.mu_ext(g, ms.FULL).size

    bad_c, systems = 0, 0
    for q in (3, 5, 7, 11, 13):
        for n in range(1, min(8, q) + 1):
            for _ in range(50):
                omegas = rng.sample(range(q), n)
                rhs = [tuple(rng.randrange(q) for _ in range(3)) for _ in range(n)]
                a = [[pow(w, j, q) for w in omegas] for j in range(n)]
                bad_c += vandermonde_solve(omegas, rhs, q) != solve_linear(a, rhs, q)
                systems += 1
    elapsed = time.perf_counter() - t0
    report(capsys, 9, "oracle equivalences", not (bad_a or bad_b or bad_c),
           f"(a) 10000 digraphs n<=8: {bad_a} mismatches; (b) 10000 sink-free n<=7: {bad_b}; "
           f"(c) {systems} Vandermonde systems: {bad_c}", elapsed, 300)


def test_criterion_10_cover_size_bound(capsys):
    t0 = time.perf_counter()
    keys, bad = 0, []
    for k in AUDITED:
        inst = Instance(*k)
        bound = gr.conjecture1_bound(*k)
        for key in audit.joint_distribution(inst).keys():
            query = audit.query_from_key(inst, key)
            size, _ = gr.min_cover_size(gr.relation_from_protocol(inst, query))
            keys += 1
            if not (size <= bound and inst.K - size <= rank(coefficient_matrix(query))):
                bad.append((k, key, size))
    elapsed = time.perf_counter() - t0
    report(capsys, 10, "cover-size bound", not bad, f"{keys} keys on {len(AUDITED)} instances; {len(bad)} violations",
           elapsed, 300)
