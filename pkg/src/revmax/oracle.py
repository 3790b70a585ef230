"""Ground-truth spread under the topic-aware independent cascade.

Spread is computed as reachability in sampled possible worlds, which is
equivalent to running the cascade step by step. Two estimators are offered:
Monte-Carlo averaging and exact enumeration of every world on tiny graphs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from . import _kernels
from ._rng import make_rng
from .exceptions import EnumerationBudgetError, ValidationError
from .graph import AdCampaign, Graph

MAX_EXACT_ARCS = 25
# 2**(uncertain arcs + nodes) above which the all-subsets table is not built.
MAX_TABLE_LOG2 = 26
_MC_CHUNK_FLOATS = 1 << 22


@dataclass(frozen=True)
class PossibleWorld:
    """One deterministic realisation: ``live[e]`` tells whether arc e fired."""

    graph: Graph
    campaign: AdCampaign
    live: np.ndarray

    def reachable(self, seeds: Iterable[int]) -> set[int]:
        g = self.graph
        seen = set(int(s) for s in seeds)
        stack = list(seen)
        while stack:
            v = stack.pop()
            for j in range(g.out_ptr[v], g.out_ptr[v + 1]):
                e = g.out_arcs[j]
                u = int(g.targets[e])
                if self.live[e] and u not in seen:
                    seen.add(u)
                    stack.append(u)
        return seen


@dataclass(frozen=True)
class SpreadEstimate:
    value: float
    method: str  # "exact" | "monte-carlo"
    runs: int | None
    seed_count: int

    def __float__(self):
        return float(self.value)


def _check_seeds(graph: Graph, seed_set) -> np.ndarray:
    seeds = np.unique(np.asarray(list(seed_set), dtype=np.int64))
    if seeds.size and (seeds[0] < 0 or seeds[-1] >= graph.n):
        raise ValidationError("seed node outside 0..n-1")
    return seeds


def sample_possible_world(graph: Graph, campaign: AdCampaign, rng=None) -> PossibleWorld:
    """Keep each arc independently with its ad-specific probability."""
    rng = make_rng(rng)
    p = graph.arc_probabilities(campaign)
    live = rng.random(graph.m) < p
    live.setflags(write=False)
    return PossibleWorld(graph, campaign, live)


def _reach_totals(graph: Graph, probs: np.ndarray, queries: list[np.ndarray], runs: int, rng) -> np.ndarray:
    """Summed reach counts over ``runs`` sampled worlds, one per query.

    World r uses uniforms ``[r*m, (r+1)*m)`` of the stream, so a run count
    prefix always sees the same worlds.
    """
    n, m = graph.n, graph.m
    totals = np.zeros(len(queries), dtype=np.int64)
    q_ptr = np.zeros(len(queries) + 1, dtype=np.int64)
    np.cumsum([len(q) for q in queries], out=q_ptr[1:])
    q_nodes = np.concatenate(queries).astype(np.int64) if queries else np.zeros(0, np.int64)
    mark = np.zeros(max(n, 1), dtype=np.int64)
    queue = np.zeros(max(n, 1), dtype=np.int64)
    chunk = max(1, _MC_CHUNK_FLOATS // max(m, 1))
    done = 0
    while done < runs:
        r = min(chunk, runs - done)
        uniforms = rng.random((r, m)) if m else np.zeros((r, 0))
        _kernels.forward_reach_counts(
            graph.out_ptr, graph.out_arcs, graph.targets, probs, uniforms, q_ptr, q_nodes, mark, queue, totals
        )
        done += r
    return totals


def mc_spread(graph: Graph, campaign: AdCampaign, seed_set, runs: int, rng=None) -> SpreadEstimate:
    """Monte-Carlo expected spread of ``seed_set`` over ``runs`` worlds."""
    if runs < 1:
        raise ValidationError("runs must be >= 1")
    seeds = _check_seeds(graph, seed_set)
    if seeds.size == 0:
        return SpreadEstimate(0.0, "monte-carlo", runs, 0)
    rng = make_rng(rng)
    totals = _reach_totals(graph, graph.arc_probabilities(campaign), [seeds], runs, rng)
    return SpreadEstimate(float(totals[0]) / runs, "monte-carlo", runs, int(seeds.size))


def _split_arcs(graph: Graph, probs: np.ndarray, keep: np.ndarray | None = None):
    certain = probs >= 1.0
    uncertain = (probs > 0.0) & ~certain
    if keep is not None:
        certain &= keep
        uncertain &= keep
    return (
        graph.sources[certain].astype(np.int64),
        graph.targets[certain].astype(np.int64),
        graph.sources[uncertain].astype(np.int64),
        graph.targets[uncertain].astype(np.int64),
        probs[uncertain].astype(np.float64),
    )


def _forward_closure(graph: Graph, probs: np.ndarray, seeds: np.ndarray) -> np.ndarray:
    """Nodes reachable from seeds through arcs of positive probability."""
    seen = np.zeros(graph.n, dtype=bool)
    seen[seeds] = True
    stack = list(seeds.tolist())
    while stack:
        v = stack.pop()
        for j in range(graph.out_ptr[v], graph.out_ptr[v + 1]):
            e = graph.out_arcs[j]
            u = graph.targets[e]
            if probs[e] > 0 and not seen[u]:
                seen[u] = True
                stack.append(int(u))
    return seen


def exact_spread(graph: Graph, campaign: AdCampaign, seed_set, max_arcs: int = MAX_EXACT_ARCS) -> SpreadEstimate:
    """Exact expected spread by enumerating every possible world.

    Only arcs whose outcome can matter are enumerated: arcs with probability
    strictly between 0 and 1 that leave a node reachable from the seeds.
    """
    seeds = _check_seeds(graph, seed_set)
    if seeds.size == 0:
        return SpreadEstimate(0.0, "exact", None, 0)
    probs = graph.arc_probabilities(campaign)
    reach = _forward_closure(graph, probs, seeds)
    keep = reach[graph.sources]
    ls, ld, us, ud, up = _split_arcs(graph, probs, keep)
    if len(up) > max_arcs:
        raise EnumerationBudgetError(
            f"{len(up)} uncertain arcs exceed the enumeration budget of {max_arcs}; use mc_spread"
        )
    value = _kernels.exact_expected_reach(graph.n, ls, ld, us, ud, up, seeds)
    return SpreadEstimate(float(value), "exact", None, int(seeds.size))


def exact_spread_table(graph: Graph, campaign: AdCampaign) -> np.ndarray:
    """Exact spread of every node subset, indexed by bitmask."""
    probs = graph.arc_probabilities(campaign)
    ls, ld, us, ud, up = _split_arcs(graph, probs)
    if len(up) > MAX_EXACT_ARCS or len(up) + graph.n > MAX_TABLE_LOG2:
        raise EnumerationBudgetError(
            f"subset table needs 2^{len(up) + graph.n} steps, budget is 2^{MAX_TABLE_LOG2}"
        )
    return _kernels.exact_subset_table(graph.n, ls, ld, us, ud, up)


def singleton_spreads(graph: Graph, campaign: AdCampaign, method: str = "monte-carlo", runs: int = 1000, rng=None) -> np.ndarray:
    """Expected spread of every singleton seed set.

    ``method`` is ``exact``, ``monte-carlo`` (all nodes share the same
    sampled worlds) or ``out-degree-proxy`` (1 + out-degree).
    """
    n = graph.n
    if method == "out-degree-proxy":
        return 1.0 + graph.out_degree().astype(np.float64)
    if method == "exact":
        return np.array([exact_spread(graph, campaign, [u]).value for u in range(n)])
    if method == "monte-carlo":
        if runs < 1:
            raise ValidationError("runs must be >= 1")
        rng = make_rng(rng)
        queries = [np.array([u], dtype=np.int64) for u in range(n)]
        totals = _reach_totals(graph, graph.arc_probabilities(campaign), queries, runs, rng)
        return totals.astype(np.float64) / runs
    raise ValidationError(f"unknown spread source {method!r}")


class ExactSpreadOracle:
    """Exact spread per ad with memoisation.

    Builds the all-subsets table when it fits the budget, otherwise
    enumerates worlds per query.
    """

    method = "exact"

    def __init__(self, graph: Graph, campaigns):
        self.graph = graph
        self.campaigns = list(campaigns)
        self._tables: dict[int, np.ndarray | None] = {}
        self._cache: dict[tuple[int, frozenset], float] = {}

    def _table(self, ad: int):
        if ad not in self._tables:
            try:
                self._tables[ad] = exact_spread_table(self.graph, self.campaigns[ad])
            except EnumerationBudgetError:
                self._tables[ad] = None
        return self._tables[ad]

    def spread(self, ad: int, seeds) -> float:
        seeds = frozenset(int(s) for s in seeds)
        if not seeds:
            return 0.0
        key = (ad, seeds)
        if key not in self._cache:
            table = self._table(ad)
            if table is not None:
                mask = 0
                for s in seeds:
                    mask |= 1 << s
                self._cache[key] = float(table[mask])
            else:
                self._cache[key] = exact_spread(self.graph, self.campaigns[ad], seeds).value
        return self._cache[key]

    __call__ = spread


class MonteCarloSpreadOracle:
    """Monte-Carlo spread per ad over a fixed set of sampled worlds.

    Reusing the same worlds for every query keeps the estimate a monotone
    submodular function of the seed set.
    """

    method = "monte-carlo"

    def __init__(self, graph: Graph, campaigns, runs: int = 10_000, seed=0):
        self.graph = graph
        self.campaigns = list(campaigns)
        self.runs = int(runs)
        self.seed = seed
        self._cache: dict[tuple[int, frozenset], float] = {}

    def spread(self, ad: int, seeds) -> float:
        seeds = frozenset(int(s) for s in seeds)
        if not seeds:
            return 0.0
        key = (ad, seeds)
        if key not in self._cache:
            rng = make_rng(self.seed, ad)
            est = mc_spread(self.graph, self.campaigns[ad], sorted(seeds), self.runs, rng)
            self._cache[key] = est.value
        return self._cache[key]

    __call__ = spread


def make_oracle(graph: Graph, campaigns, kind: str = "auto", runs: int = 10_000, seed=0):
    """Exact oracle when every arc can be enumerated, else Monte-Carlo."""
    if kind == "auto":
        kind = "exact" if graph.m <= MAX_EXACT_ARCS else "monte-carlo"
    if kind == "exact":
        return ExactSpreadOracle(graph, campaigns)
    if kind == "monte-carlo":
        return MonteCarloSpreadOracle(graph, campaigns, runs=runs, seed=seed)
    raise ValidationError(f"unknown oracle kind {kind!r}")
