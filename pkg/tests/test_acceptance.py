"""Acceptance criteria 1-9.

Each criterion is computed once (cached) so that criterion 5 can re-check
every allocation produced by criteria 1, 4 and 8. A pass/fail line per
criterion is printed in the terminal summary.
"""

import functools
import itertools
import time

import numpy as np
import pytest

from conftest import random_graph, random_gamma, record_criterion
from revmax import AdCampaign, Graph, IncentiveTable, Instance, build_incentives
from revmax.allocators import CAGreedy, CSGreedy, TICARM, TICSRM
from revmax.analysis import (average_curvature, bound_ca, bound_cs, brute_force_opt, curvature_wrt_set,
                             make_tightness_instance, payment_curvatures, ranks, revenue_curvature,
                             singleton_payments, total_curvature)
from revmax.bench import synth_graph
from revmax.economics import Allocation, downward_closure_check
from revmax.oracle import ExactSpreadOracle, exact_spread, exact_spread_table, mc_spread
from revmax.rr import (PilotBound, RRSample, estimate_spread, remove_covered, sample_size_L,
                       select_best_ca_node, windowed_select_best_cs_node)

TOL = 1e-9


# -- 1 ------------------------------------------------------------------------

@functools.lru_cache(None)
def criterion_1():
    t0 = time.perf_counter()
    inst = make_tightness_instance()
    ca = CAGreedy().fit(inst)
    opt_alloc, opt = brute_force_opt(inst)
    r, R = ranks(inst)
    kappa = revenue_curvature(inst)
    bound = bound_ca(1.0, 1, 2)
    cs = CSGreedy().fit(inst)
    ti = TICSRM(epsilon=0.1, random_state=0).fit(inst)
    elapsed = time.perf_counter() - t0
    values = dict(ca=ca.revenue_, opt=opt, bound=bound, cs=cs.revenue_, ti_csrm=ti.revenue_, r=r, R=R, kappa=kappa)
    ok = (ca.revenue_ == 3.0 and opt == 6.0 and bound == 0.5 and ca.revenue_ == bound * opt
          and cs.revenue_ == 6.0 and ti.revenue_ == 6.0 and (r, R, kappa) == (1, 2, 1.0) and elapsed < 1.0)
    allocs = [ca.allocation_, opt_alloc, cs.allocation_, ti.allocation_]
    return ok, values, elapsed, allocs


def test_criterion_1_tightness():
    ok, values, elapsed, _ = criterion_1()
    record_criterion(1, ok, f"{values} in {elapsed:.3f}s")
    assert ok, values


# -- 2 ------------------------------------------------------------------------

@functools.lru_cache(None)
def criterion_2():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    hits = total = 0
    worst = 0.0
    for _ in range(20):
        L = int(rng.integers(1, 3))
        n = int(rng.integers(4, 9))
        g = random_graph(rng, n, int(rng.integers(n, min(25, n * (n - 1)) + 1)), topics=L)
        camp = AdCampaign(0, random_gamma(rng, L), 1.0, 1.0)
        for _ in range(5):
            seeds = rng.choice(n, size=int(rng.integers(1, 4)), replace=False).tolist()
            exact = exact_spread(g, camp, seeds).value
            mc = mc_spread(g, camp, seeds, 200_000, rng).value
            err = abs(mc - exact)
            worst = max(worst, err / n)
            hits += err <= 0.02 * n
            total += 1
    elapsed = time.perf_counter() - t0
    return hits / total, worst, elapsed


def test_criterion_2_oracle_agreement():
    frac, worst, elapsed = criterion_2()
    ok = frac >= 0.95 and elapsed < 300
    record_criterion(2, ok, f"{frac:.1%} within 0.02n (worst {worst:.4f}n) in {elapsed:.1f}s")
    assert ok


# -- 3 ------------------------------------------------------------------------

@functools.lru_cache(None)
def criterion_3():
    rng = np.random.default_rng(3)
    camp = AdCampaign(0, (1.0,), 1.0, 1.0)
    n, s, eps = 50, 3, 0.1
    t0 = time.perf_counter()
    good = reps = 0
    for gi in range(10):
        g = synth_graph("random-directed", {"n": n, "m": 200}, 100 + gi, wc=True)
        # OPT_s stand-in: greedy on a large sample (greedy <= OPT_s keeps the check conservative)
        big = RRSample(g, camp, 1000 + gi).extend(200_000)
        cov = 0
        for _ in range(s):
            v, _ = select_best_ca_node(big)
            cov += remove_covered(big, v)
        opt_s = n * cov / big.theta
        lb = PilotBound(g, camp, 2000 + gi).lower_bound(s, eps)
        theta = sample_size_L(n, s, eps, 1, lb)
        sets = [rng.choice(n, size=int(rng.integers(1, s + 1)), replace=False).tolist() for _ in range(20)]
        truth = [mc_spread(g, camp, S, 100_000, 3000 + gi).value for S in sets]
        for rep in range(20):
            smp = RRSample(g, camp, [gi, rep], stratified=False).extend(theta)
            reps += 1
            good += all(abs(estimate_spread(smp, S) - t) < eps * opt_s for S, t in zip(sets, truth))
    elapsed = time.perf_counter() - t0
    return good / reps, elapsed


def test_criterion_3_rr_accuracy():
    frac, elapsed = criterion_3()
    ok = frac >= 0.95 and elapsed < 600
    record_criterion(3, ok, f"{frac:.1%} of 200 repetitions accurate for all 20 sets in {elapsed:.1f}s")
    assert ok


# -- 4 ------------------------------------------------------------------------

def _random_enumerable_instance(rng):
    n = int(rng.integers(3, 8))
    h = int(rng.integers(1, 3))
    m = int(rng.integers(0, min(10, n * (n - 1)) + 1))
    g = random_graph(rng, n, m, p_low=0.1, p_high=1.0)
    costs = rng.uniform(0.05, 3.0, (h, n))
    base = [AdCampaign(i, (1.0,), float(rng.uniform(0.5, 2.0)), 0.0) for i in range(h)]
    est = ExactSpreadOracle(g, base)
    camps = []
    for i, c in enumerate(base):
        singles = [c.cpe * est(i, [u]) + costs[i, u] for u in range(n)]
        # affordable: at least the cheapest singleton payment
        budget = min(singles) + float(rng.uniform(0, 1)) * (sum(singles) - min(singles))
        camps.append(AdCampaign(i, (1.0,), c.cpe, budget))
    return Instance(g, camps, IncentiveTable(costs, "given"))


@functools.lru_cache(None)
def criterion_4():
    rng = np.random.default_rng(4)
    t0 = time.perf_counter()
    violations, allocs, count = [], [], 0
    while count < 220:
        inst = _random_enumerable_instance(rng)
        est = ExactSpreadOracle(inst.graph, inst.campaigns)
        r, R = ranks(inst, est)
        if R == 0:
            continue
        opt_alloc, opt = brute_force_opt(inst, est)
        kappa = revenue_curvature(inst, est)
        pays = singleton_payments(inst, est)
        b_ca = bound_ca(kappa, r, R)
        b_cs = bound_cs(R, float(pays.max()), float(pays.min()), max(payment_curvatures(inst, est))).value
        ca = CAGreedy(oracle=est).fit(inst).allocation_
        cs = CSGreedy(oracle=est).fit(inst).allocation_
        if ca.total_revenue < b_ca * opt - TOL:
            violations.append(("ca", count, ca.total_revenue, b_ca * opt))
        if cs.total_revenue < b_cs * opt - TOL:
            violations.append(("cs", count, cs.total_revenue, b_cs * opt))
        allocs += [ca, cs, opt_alloc]
        count += 1
    return count, violations, time.perf_counter() - t0, allocs


def test_criterion_4_bound_compliance():
    count, violations, elapsed, _ = criterion_4()
    ok = count >= 200 and not violations and elapsed < 600
    n_ca = sum(v[0] == "ca" for v in violations)
    n_cs = sum(v[0] == "cs" for v in violations)
    record_criterion(4, ok, f"{count} instances, CA bound violations {n_ca}, CS bound violations {n_cs} "
                            f"in {elapsed:.1f}s")
    assert ok, violations[:5]


# -- 6 ------------------------------------------------------------------------

@functools.lru_cache(None)
def criterion_6():
    t0 = time.perf_counter()
    mismatches = 0
    g = synth_graph("random-directed", {"n": 400, "m": 2000}, 6, wc=True)
    for run in range(20):
        rng = np.random.default_rng(run)
        h = int(rng.integers(2, 5))
        camps = [AdCampaign(i, (1.0,), float(rng.uniform(0.5, 2)), float(rng.uniform(20, 80))) for i in range(h)]
        inc = build_incentives(g, camps, "constant", alpha=float(rng.uniform(0.1, 0.5)), runs=300, random_state=run)
        inst = Instance(g, camps, inc)
        a = TICARM(epsilon=0.2, random_state=run).fit(inst).allocation_
        b = TICSRM(epsilon=0.2, random_state=run).fit(inst).allocation_
        mismatches += a.seeds != b.seeds
    return mismatches, time.perf_counter() - t0


def test_criterion_6_constant_equivalence():
    mismatches, elapsed = criterion_6()
    record_criterion(6, mismatches == 0, f"{mismatches} mismatches over 20 paired runs in {elapsed:.1f}s")
    assert mismatches == 0


# -- 7 ------------------------------------------------------------------------

def test_criterion_7_window_collapse():
    rng = np.random.default_rng(7)
    camp = AdCampaign(0, (1.0,), 1.0, 1.0)
    t0 = time.perf_counter()
    mismatches = 0
    for _ in range(10_000):
        n = int(rng.integers(1, 15))
        g = Graph(n, [], [], np.zeros((0, 1)))
        sets = [rng.choice(n, size=int(rng.integers(1, n + 1)), replace=False) for _ in range(int(rng.integers(1, 12)))]
        smp = RRSample.from_sets(g, camp, sets)
        for v in rng.choice(n, size=int(rng.integers(0, 3))):
            remove_covered(smp, int(v))
        excluded = rng.random(n) < 0.3
        costs = np.where(rng.random(n) < 0.1, 0.0, rng.uniform(0, 3, n))
        mismatches += windowed_select_best_cs_node(smp, costs, excluded, 1) != select_best_ca_node(smp, excluded)
    elapsed = time.perf_counter() - t0
    record_criterion(7, mismatches == 0, f"{mismatches} mismatches over 10,000 states in {elapsed:.1f}s")
    assert mismatches == 0


# -- 8 ------------------------------------------------------------------------

ALPHAS = (0.1, 0.2, 0.3, 0.4, 0.5)


@functools.lru_cache(None)
def criterion_8():
    t0 = time.perf_counter()
    g = synth_graph("random-directed", {"n": 1000, "m": 5000}, 8, wc=True)
    cpe = [1.0, 1.5, 2.0, 1.2, 1.8]
    budgets = [150.0, 200.0, 250.0, 180.0, 220.0]
    camps = [AdCampaign(i, (1.0,), cpe[i], budgets[i]) for i in range(5)]
    rows, allocs = {}, []
    for alpha in ALPHAS:
        inst = Instance(g, camps, build_incentives(g, camps, "linear", alpha=alpha, runs=1000, random_state=0))
        res = {"ti-carm": [], "ti-csrm": []}
        for seed in range(5):
            for est in (TICARM(epsilon=0.1, random_state=seed), TICSRM(epsilon=0.1, random_state=seed)):
                a = est.fit(inst).allocation_
                res[est.algorithm].append((a.total_revenue, a.total_incentive))
                allocs.append(a)
        rows[alpha] = {k: tuple(np.mean(v, axis=0)) for k, v in res.items()}
    return rows, time.perf_counter() - t0, allocs


def test_criterion_8_dominance():
    rows, elapsed, _ = criterion_8()
    ok = elapsed < 1800
    parts = []
    for alpha, r in rows.items():
        (rev_ca, cost_ca), (rev_cs, cost_cs) = r["ti-carm"], r["ti-csrm"]
        ok &= rev_cs >= rev_ca and cost_cs <= cost_ca
        parts.append(f"a={alpha}: rev {rev_cs:.1f}>={rev_ca:.1f} cost {cost_cs:.1f}<={cost_ca:.1f}")
    record_criterion(8, ok, "; ".join(parts) + f" in {elapsed:.0f}s")
    assert ok


# -- 9 ------------------------------------------------------------------------

def _check_monotone_submodular(F, k):
    bad = 0
    full = 1 << k
    for S in range(full):
        for T in range(full):
            if S & T != S:
                continue
            bad += F[S] > F[T] + 1e-12
            for x in range(k):
                if not T >> x & 1:
                    bad += F[T | 1 << x] - F[T] > F[S | 1 << x] - F[S] + 1e-12
    return bad


def _random_feasible_allocation(inst, est, rng):
    seeds = [[] for _ in range(inst.h)]
    used = set()
    for _ in range(inst.n * inst.h):
        u, i = int(rng.integers(inst.n)), int(rng.integers(inst.h))
        if u in used:
            continue
        trial = seeds[i] + [u]
        c = inst.campaigns[i]
        if c.cpe * est(i, trial) + inst.incentives.costs[i, trial].sum() <= c.budget + TOL:
            seeds[i] = trial
            used.add(u)
    return Allocation.from_estimator(seeds, inst.campaigns, inst.incentives, est)


@functools.lru_cache(None)
def criterion_9():
    rng = np.random.default_rng(9)
    t0 = time.perf_counter()
    counts = {}
    # coverage functions on a 6-element ground set
    bad = 0
    for _ in range(20):
        universes = [set(rng.choice(10, size=int(rng.integers(0, 5)), replace=False).tolist()) for _ in range(6)]
        F = [len(set().union(*(universes[j] for j in range(6) if S >> j & 1))) for S in range(64)]
        bad += _check_monotone_submodular(F, 6)
    counts["coverage"] = bad
    # exact spread on graphs with <= 5 nodes
    bad = 0
    for _ in range(20):
        L = int(rng.integers(1, 3))
        g = random_graph(rng, 5, int(rng.integers(0, 12)), topics=L)
        F = exact_spread_table(g, AdCampaign(0, random_gamma(rng, L), 1.0, 1.0))
        bad += _check_monotone_submodular(F, 5)
    counts["exact_spread"] = int(bad)
    # curvature chain on 500 random coverage functions
    bad = 0
    for _ in range(500):
        k = int(rng.integers(2, 7))
        universes = [set(rng.choice(8, size=int(rng.integers(1, 4)), replace=False).tolist()) for _ in range(k)]
        f = lambda S, U=universes: float(len(set().union(*(U[j] for j in S)))) if S else 0.0
        ground = range(k)
        S = [j for j in ground if rng.random() < 0.6] or [0]
        avg, wrt, tot = average_curvature(f, S), curvature_wrt_set(f, S), total_curvature(f, ground)
        bad += not (0 <= avg <= wrt + 1e-12 <= tot + 2e-12 <= 1 + 3e-12)
    counts["curvature"] = bad
    # downward closure
    bad = 0
    for _ in range(1000):
        inst = _random_enumerable_instance(rng)
        est = ExactSpreadOracle(inst.graph, inst.campaigns)
        bad += not downward_closure_check(_random_feasible_allocation(inst, est, rng), est)
    counts["downward_closure"] = bad
    return counts, time.perf_counter() - t0


def test_criterion_9_properties():
    counts, elapsed = criterion_9()
    ok = not any(counts.values()) and elapsed < 300
    record_criterion(9, ok, f"violations {counts} in {elapsed:.1f}s")
    assert ok


# -- 5 ------------------------------------------------------------------------

def test_criterion_5_structural_feasibility():
    allocs = list(criterion_1()[3]) + list(criterion_4()[3]) + list(criterion_8()[2])
    scalable = len(criterion_8()[2])
    bad = [a for a in allocs if not a.is_disjoint() or not a.within_budgets(TOL)]
    ok = not bad and scalable >= 50
    record_criterion(5, ok, f"{len(allocs)} allocations ({scalable} scalable on 1,000 nodes), {len(bad)} violations")
    assert ok
