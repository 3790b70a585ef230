"""Curvature, ranks, approximation bounds and exhaustive optima.

Everything here evaluates set functions exactly, so it is meant for small
instances (a few dozen (node, ad) pairs at most).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Hashable, Iterable

import numpy as np

from .economics import BUDGET_TOL, Allocation, IncentiveTable, Instance
from .exceptions import EnumerationBudgetError, RevMaxError, UndefinedCurvatureError, ValidationError
from .graph import AdCampaign, Graph
from .oracle import ExactSpreadOracle

MAX_PAIRS = 22
TIGHTNESS_LABELS = ("b", "a", "c", "x1", "x2", "y1", "y2")

SetFunction = Callable[[frozenset], float]


def _clip01(x: float) -> float:
    return min(1.0, max(0.0, x))


def curvature_wrt_set(f: SetFunction, S: Iterable[Hashable]) -> float:
    """``1 - min_j f(j | S - j) / f({j})`` over j in S with ``f({j}) > 0``."""
    S = frozenset(S)
    fS = f(S)
    ratios = []
    for j in S:
        single = f(frozenset([j]))
        if single > 0:
            ratios.append((fS - f(S - {j})) / single)
    if not ratios:
        raise UndefinedCurvatureError("all singleton values are zero")
    return _clip01(1.0 - min(ratios))


def total_curvature(f: SetFunction, ground_set: Iterable[Hashable]) -> float:
    """Curvature with respect to the whole ground set."""
    return curvature_wrt_set(f, ground_set)


def average_curvature(f: SetFunction, S: Iterable[Hashable]) -> float:
    """``1 - sum_j f(j | S - j) / sum_j f({j})`` over j in S."""
    S = frozenset(S)
    fS = f(S)
    num = sum(fS - f(S - {j}) for j in S)
    den = sum(f(frozenset([j])) for j in S)
    if den <= 0:
        raise UndefinedCurvatureError("all singleton values are zero")
    return _clip01(1.0 - num / den)


# --------------------------------------------------------------------------
# Instance-level set functions


def _oracle_for(instance: Instance, oracle):
    return oracle if oracle is not None else ExactSpreadOracle(instance.graph, instance.campaigns)


def revenue_function(instance: Instance, ad: int, oracle=None) -> SetFunction:
    est = _oracle_for(instance, oracle)
    cpe = instance.campaigns[ad].cpe
    return lambda S: cpe * est(ad, sorted(S))


def payment_function(instance: Instance, ad: int, oracle=None) -> SetFunction:
    est = _oracle_for(instance, oracle)
    cpe = instance.campaigns[ad].cpe
    costs = instance.incentives.costs[ad]
    return lambda S: cpe * est(ad, sorted(S)) + float(costs[sorted(S)].sum()) if S else 0.0


def revenue_curvature(instance: Instance, oracle=None) -> float:
    """Total curvature of the total revenue over (node, ad) pairs.

    Revenue is separable across ads, so the pair-level marginal of (u, i)
    against all other pairs is ``pi_i(u | V - u)``.
    """
    est = _oracle_for(instance, oracle)
    ratios = []
    V = frozenset(range(instance.n))
    for i in range(instance.h):
        f = revenue_function(instance, i, est)
        fV = f(V)
        for u in V:
            single = f(frozenset([u]))
            if single > 0:
                ratios.append((fV - f(V - {u})) / single)
    if not ratios:
        raise UndefinedCurvatureError("all singleton revenues are zero")
    return _clip01(1.0 - min(ratios))


def payment_curvatures(instance: Instance, oracle=None) -> list[float]:
    est = _oracle_for(instance, oracle)
    V = range(instance.n)
    return [total_curvature(payment_function(instance, i, est), V) for i in range(instance.h)]


def singleton_payments(instance: Instance, oracle=None) -> np.ndarray:
    est = _oracle_for(instance, oracle)
    return np.array([[instance.campaigns[i].cpe * est(i, [u]) + instance.incentives.costs[i, u]
                      for u in range(instance.n)] for i in range(instance.h)])


# --------------------------------------------------------------------------
# Enumeration of feasible allocations


def _check_small(instance: Instance):
    if instance.n * instance.h > MAX_PAIRS:
        raise EnumerationBudgetError(
            f"{instance.n * instance.h} (node, ad) pairs exceed the enumeration budget of {MAX_PAIRS}"
        )


def _feasible_allocations(instance: Instance, est):
    """Yield every disjoint, budget-feasible allocation as a tuple of seed tuples.

    Nodes are decided in id order (unassigned first, then ads 0..h-1).
    Payments are monotone, so infeasible partial allocations are pruned.
    """
    n, h = instance.n, instance.h
    camps, costs = instance.campaigns, instance.incentives.costs
    seeds = [[] for _ in range(h)]

    def pay(i):
        return camps[i].cpe * est(i, seeds[i]) + float(costs[i, seeds[i]].sum()) if seeds[i] else 0.0

    def rec(u):
        if u == n:
            yield tuple(tuple(s) for s in seeds)
            return
        yield from rec(u + 1)
        for i in range(h):
            seeds[i].append(u)
            if pay(i) <= camps[i].budget + BUDGET_TOL:
                yield from rec(u + 1)
            seeds[i].pop()

    yield from rec(0)


def _can_extend(instance: Instance, est, alloc) -> bool:
    used = {v for s in alloc for v in s}
    camps, costs = instance.campaigns, instance.incentives.costs
    for u in range(instance.n):
        if u in used:
            continue
        for i, s in enumerate(alloc):
            t = list(s) + [u]
            if camps[i].cpe * est(i, t) + float(costs[i, t].sum()) <= camps[i].budget + BUDGET_TOL:
                return True
    return False


def ranks(instance: Instance, estimator=None) -> tuple[int, int]:
    """Lower and upper rank: sizes of the smallest and largest maximal feasible allocations."""
    _check_small(instance)
    est = _oracle_for(instance, estimator)
    r, R = math.inf, 0
    for alloc in _feasible_allocations(instance, est):
        size = sum(len(s) for s in alloc)
        if size >= r and size <= R:
            continue
        if not _can_extend(instance, est, alloc):
            r, R = min(r, size), max(R, size)
    return int(r), int(R)


def brute_force_opt(instance: Instance, oracle=None) -> tuple[Allocation, float]:
    """Best feasible allocation by exhaustive search.

    Ties within 1e-9 go to the lexicographically smallest allocation.
    """
    _check_small(instance)
    est = _oracle_for(instance, oracle)
    camps = instance.campaigns
    best, best_rev = tuple(() for _ in range(instance.h)), 0.0
    for alloc in _feasible_allocations(instance, est):
        rev = sum(c.cpe * est(i, s) for i, (c, s) in enumerate(zip(camps, alloc)) if s)
        if rev > best_rev + 1e-9 or (abs(rev - best_rev) <= 1e-9 and alloc < best):
            best, best_rev = alloc, rev
    return Allocation.from_estimator(best, camps, instance.incentives, est), float(best_rev)


# --------------------------------------------------------------------------
# Bounds


def bound_ca(kappa: float, r: int, R: int) -> float:
    """``(1/kappa) * (1 - ((R - kappa)/R)**r)``, equal to ``r/R`` at kappa = 0.

    Never below ``1/R``.
    """
    if not 0 <= kappa <= 1:
        raise ValidationError("curvature must lie in [0, 1]")
    if R < 1 or r < 1 or r > R:
        raise ValidationError("ranks must satisfy 1 <= r <= R")
    if kappa == 0:
        value = r / R
    elif kappa == R:  # kappa = R = 1: the power term vanishes
        value = 1.0 / kappa
    else:
        value = -math.expm1(r * math.log1p(-kappa / R)) / kappa
    return max(value, 1.0 / R)


@dataclass(frozen=True)
class CSBound:
    value: float
    degenerate: bool

    def __float__(self):
        return self.value


def bound_cs(R: int, rho_max: float, rho_min: float, max_kappa_rho: float) -> CSBound:
    """``1 - R*rho_max / (R*rho_max + (1 - max_kappa)*rho_min)``.

    A maximum curvature of 1 makes the bound vanish; it is flagged degenerate.
    """
    if R < 1:
        raise ValidationError("R must be >= 1")
    if not 0 <= max_kappa_rho <= 1:
        raise ValidationError("curvature must lie in [0, 1]")
    if rho_max < rho_min or rho_min < 0:
        raise ValidationError("need 0 <= rho_min <= rho_max")
    if max_kappa_rho == 1 or rho_max == 0:
        return CSBound(0.0, True)
    top = R * rho_max
    return CSBound(1.0 - top / (top + (1.0 - max_kappa_rho) * rho_min), False)


@dataclass(frozen=True)
class DeterioratedBound:
    """``beta * OPT - sum_i cpe_i * eps * OPT_{s_i}``."""

    beta: float
    slack: float

    def __call__(self, opt_revenue: float) -> float:
        return self.beta * opt_revenue - self.slack


def bound_deteriorated(beta: float, cpe, epsilon: float, opt_s) -> DeterioratedBound:
    if not 0 <= beta <= 1:
        raise ValidationError("beta must lie in [0, 1]")
    cpe, opt_s = np.atleast_1d(cpe).astype(float), np.atleast_1d(opt_s).astype(float)
    if cpe.shape != opt_s.shape:
        raise ValidationError("cpe and OPT_s lists differ in length")
    return DeterioratedBound(float(beta), float(epsilon * np.dot(cpe, opt_s)))


# --------------------------------------------------------------------------
# Tightness instance


def make_tightness_instance(verify: bool = True) -> Instance:
    """Single-ad instance on which the cost-agnostic bound is attained.

    Nodes b, a, c each reach two followers (all probabilities 1); a and c
    reach disjoint followers, b shares one with each. Incentives are 4 for
    b, 0.5 for a and c, 2 for followers; cpe 1 and budget 7. Node b comes
    first so that lowest-id tie-breaking lets the cost-agnostic greedy pick it.
    """
    idx = {lab: k for k, lab in enumerate(TIGHTNESS_LABELS)}
    arcs = [("a", "x1"), ("a", "x2"), ("c", "y1"), ("c", "y2"), ("b", "x1"), ("b", "y1")]
    g = Graph(len(idx), [idx[u] for u, _ in arcs], [idx[v] for _, v in arcs], np.ones((len(arcs), 1)),
              labels=list(TIGHTNESS_LABELS))
    camp = AdCampaign(0, (1.0,), 1.0, 7.0)
    costs = np.array([[4.0, 0.5, 0.5, 2.0, 2.0, 2.0, 2.0]])
    inst = Instance(g, (camp,), IncentiveTable(costs, "given"))
    if verify:
        est = ExactSpreadOracle(g, (camp,))
        checks = {
            "spread(b)": (est(0, [idx["b"]]), 3.0),
            "spread(a)": (est(0, [idx["a"]]), 3.0),
            "spread(c)": (est(0, [idx["c"]]), 3.0),
            "payment({b})": (est(0, [idx["b"]]) + 4.0, 7.0),
            "payment({a,c})": (est(0, [idx["a"], idx["c"]]) + 1.0, 7.0),
        }
        for name, (got, want) in checks.items():
            if abs(got - want) > 1e-12:
                raise RevMaxError(f"tightness instance broken: {name} = {got}, expected {want}")
    return inst


# --------------------------------------------------------------------------
# Report


@dataclass
class BoundReport:
    kappa_pi: float
    kappa_rho: list
    average_kappa_rho: list
    r: int
    R: int
    rho_max: float
    rho_min: float
    ca_bound: float
    ca_floor: float
    cs_bound: float
    cs_degenerate: bool
    opt: float
    opt_allocation: list
    epsilon: float | None = None
    opt_s: list | None = None
    achieved: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def to_text(self) -> str:
        lines = []
        for k, v in self.to_dict().items():
            if isinstance(v, dict):
                lines.extend(f"{k}.{kk}: {vv}" for kk, vv in sorted(v.items()))
            else:
                lines.append(f"{k}: {v}")
        return "\n".join(lines) + "\n"


def bound_report(instance: Instance, oracle=None, achieved: dict | None = None,
                 epsilon: float | None = None, opt_s=None) -> BoundReport:
    """Evaluate every quantity the bounds depend on, plus the optimum."""
    from .allocators import CAGreedy, CSGreedy

    est = _oracle_for(instance, oracle)
    r, R = ranks(instance, est)
    opt_alloc, opt = brute_force_opt(instance, est)
    kappa_pi = revenue_curvature(instance, est)
    kappa_rho = payment_curvatures(instance, est)
    avg = []
    for i, s in enumerate(opt_alloc.seeds):
        try:
            avg.append(average_curvature(payment_function(instance, i, est), s) if s else 0.0)
        except UndefinedCurvatureError:
            avg.append(None)
    pays = singleton_payments(instance, est)
    cs = bound_cs(R, float(pays.max()), float(pays.min()), max(kappa_rho))
    if achieved is None:
        achieved = {a.algorithm: a.fit(instance).revenue_ for a in (CAGreedy(oracle=est), CSGreedy(oracle=est))}
    return BoundReport(
        kappa_pi=kappa_pi, kappa_rho=kappa_rho, average_kappa_rho=avg, r=r, R=R,
        rho_max=float(pays.max()), rho_min=float(pays.min()),
        ca_bound=bound_ca(kappa_pi, r, R), ca_floor=1.0 / R, cs_bound=cs.value, cs_degenerate=cs.degenerate,
        opt=opt, opt_allocation=[list(s) for s in opt_alloc.seeds],
        epsilon=epsilon, opt_s=None if opt_s is None else list(opt_s), achieved=dict(achieved),
    )
