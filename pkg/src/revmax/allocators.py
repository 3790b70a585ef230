"""Allocation algorithms as scikit-learn style estimators.

Every allocator is fitted on an :class:`~revmax.economics.Instance` and
exposes ``allocation_``, ``trace_`` and ``revenue_`` afterwards::

    alloc = TICSRM(epsilon=0.1, random_state=7).fit(instance)
    alloc.allocation_.total_revenue

Exact greedy variants evaluate marginals with a spread oracle; the
``TI*`` and PageRank variants estimate spread on per-ad RR samples.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from . import rr
from ._rng import make_rng
from .economics import BUDGET_TOL, Allocation, Instance
from .exceptions import ValidationError
from .graph import Graph
from .oracle import make_oracle
from .validation import check_instance

ALGORITHMS = ("ca-greedy", "cs-greedy", "ti-carm", "ti-csrm", "pagerank-gr", "pagerank-rr")


@dataclass
class TraceRecord:
    iteration: int
    event: str  # accept | reject | extend | revoke
    ad: int
    node: int | None = None
    marginal_revenue: float | None = None
    marginal_payment: float | None = None
    theta: int | None = None
    latent_size: int | None = None
    revenue: float | None = None
    # Sum of marginal revenues credited at acceptance time; never decreases.
    gain_total: float | None = None


@dataclass
class RunTrace:
    algorithm: str
    records: list = field(default_factory=list)
    wall_time: float = 0.0
    totals: dict = field(default_factory=dict)

    def log(self, **kw) -> None:
        if kw["event"] == "accept":
            prev = next((r.gain_total for r in reversed(self.records) if r.gain_total is not None), 0.0)
            kw["gain_total"] = prev + kw["marginal_revenue"]
        self.records.append(TraceRecord(**kw))

    def accepted(self) -> list[TraceRecord]:
        return [r for r in self.records if r.event == "accept"]

    def to_dict(self, include_time: bool = True) -> dict:
        out = {"algorithm": self.algorithm, "records": [asdict(r) for r in self.records], "totals": self.totals}
        if include_time:
            out["wall_time"] = self.wall_time
        return out

    def to_json(self, include_time: bool = False) -> str:
        return json.dumps(self.to_dict(include_time), sort_keys=True)


def _ratio(rev: float, pay: float) -> float:
    # Useless seeds rank last; free useful seeds rank first.
    if rev <= 0:
        return 0.0
    if pay <= 0:
        return math.inf
    return rev / pay


class _BaseAllocator(BaseEstimator):
    algorithm = ""

    def fit(self, instance: Instance, y=None):
        instance = check_instance(instance)
        t0 = time.perf_counter()
        allocation, trace = self._allocate(instance)
        trace.wall_time = time.perf_counter() - t0
        trace.totals = {
            "revenue": allocation.total_revenue,
            "incentive": allocation.total_incentive,
            "seeds": list(allocation.seed_counts),
        }
        self.allocation_ = allocation
        self.trace_ = trace
        self.revenue_ = allocation.total_revenue
        return self

    def _allocate(self, instance):  # pragma: no cover - abstract
        raise NotImplementedError


# --------------------------------------------------------------------------
# Exact greedy


class _ExactGreedy(_BaseAllocator):
    cost_sensitive = False

    def __init__(self, oracle="auto", mc_runs=10_000, random_state=0):
        self.oracle = oracle
        self.mc_runs = mc_runs
        self.random_state = random_state

    def _oracle(self, instance):
        if isinstance(self.oracle, str):
            return make_oracle(instance.graph, instance.campaigns, self.oracle, self.mc_runs, self.random_state)
        return self.oracle

    def _allocate(self, instance: Instance):
        oracle = self._oracle(instance)
        self.oracle_method_ = getattr(oracle, "method", type(oracle).__name__)
        camps, costs = instance.campaigns, instance.incentives.costs
        h, n = instance.h, instance.n
        live = np.ones((h, n), dtype=bool)
        seeds = [[] for _ in range(h)]
        spread = [0.0] * h
        pay = [0.0] * h
        owner = np.full(n, -1)
        trace = RunTrace(self.algorithm)
        it = 0
        while live.any():
            best = None
            best_key = None
            for u in range(n):
                for i in range(h):
                    if not live[i, u]:
                        continue
                    gain = max(0.0, oracle(i, seeds[i] + [u]) - spread[i])
                    rev = camps[i].cpe * gain
                    mpay = rev + costs[i, u]
                    key = (_ratio(rev, mpay), rev) if self.cost_sensitive else (rev,)
                    if best_key is None or key > best_key:
                        best, best_key = (u, i, gain, rev, mpay), key
            u, i, gain, rev, mpay = best
            live[i, u] = False
            it += 1
            if owner[u] < 0 and pay[i] + mpay <= camps[i].budget + BUDGET_TOL:
                seeds[i].append(u)
                owner[u] = i
                spread[i] += gain
                pay[i] += mpay
                trace.log(iteration=it, event="accept", ad=i, node=u, marginal_revenue=rev,
                          marginal_payment=mpay, revenue=float(sum(c.cpe * s for c, s in zip(camps, spread))))
            else:
                trace.log(iteration=it, event="reject", ad=i, node=u, marginal_revenue=rev, marginal_payment=mpay)
        allocation = Allocation.from_estimator(seeds, camps, instance.incentives, oracle)
        return allocation, trace


class CAGreedy(_ExactGreedy):
    """Cost-agnostic greedy: each step takes the pair of largest marginal revenue.

    Parameters
    ----------
    oracle : {"auto", "exact", "monte-carlo"} or callable ``(ad, seeds) -> spread``
        "auto" enumerates worlds when the graph has at most 25 arcs.
    mc_runs : int
        Worlds for the Monte-Carlo oracle.
    random_state : int
    """

    algorithm = "ca-greedy"


class CSGreedy(_ExactGreedy):
    """Cost-sensitive greedy: each step takes the pair of largest
    marginal-revenue to marginal-payment ratio. Same parameters as CAGreedy."""

    algorithm = "cs-greedy"
    cost_sensitive = True


# --------------------------------------------------------------------------
# RR-set based skeleton shared by TI-CARM, TI-CSRM and the PageRank baselines


@dataclass
class _AdState:
    sample: rr.RRSample
    pilot: rr.PilotBound
    ledger: rr.SeedLedger
    latent: int
    revenue: float = 0.0
    incentive: float = 0.0
    excluded: np.ndarray | None = None
    done: bool = False

    @property
    def payment(self) -> float:
        return self.revenue + self.incentive


class _RRAllocator(_BaseAllocator):
    def __init__(self, epsilon=0.1, ell=1.0, random_state=0, stratified=True, pilot_size=rr.PILOT_SIZE):
        self.epsilon = epsilon
        self.ell = ell
        self.random_state = random_state
        self.stratified = stratified
        self.pilot_size = pilot_size

    def _check_params(self):
        if not 0 < self.epsilon < 1:
            raise ValidationError("epsilon must lie in (0, 1)")
        if not self.ell > 0:
            raise ValidationError("ell must be > 0")

    def _theta_for(self, st: _AdState, s: int) -> int:
        n = st.sample.n
        s = min(max(1, s), n)
        lb = st.pilot.lower_bound(s, self.epsilon)
        return st.sample.full_rounds(rr.sample_size_L(n, s, self.epsilon, self.ell, lb))

    # hooks ------------------------------------------------------------------
    def _prepare(self, instance, states):
        pass

    def _candidate(self, j, st, instance, eligible_mask):
        raise NotImplementedError

    def _choose(self, cands, it):
        """cands: list of (ad, node, cov, mrev, mpay); returns one of them."""
        raise NotImplementedError

    # ------------------------------------------------------------------------
    def _allocate(self, instance: Instance):
        self._check_params()
        g: Graph = instance.graph
        camps = instance.campaigns
        costs = instance.incentives.costs
        n, h = g.n, instance.h
        trace = RunTrace(self.algorithm)
        if n == 0:
            return Allocation.empty(camps, instance.incentives), trace
        states = []
        for j, camp in enumerate(camps):
            sample = rr.RRSample(g, camp, make_rng(self.random_state, j, 0), self.stratified)
            pilot = rr.PilotBound(g, camp, make_rng(self.random_state, j, 1), self.pilot_size)
            st = _AdState(sample, pilot, rr.SeedLedger(), latent=1, excluded=np.zeros(n, dtype=bool))
            sample.extend(self._theta_for(st, 1))
            states.append(st)
            trace.log(iteration=0, event="extend", ad=j, theta=sample.theta, latent_size=1)
        self._prepare(instance, states)
        assigned = np.zeros(n, dtype=bool)
        it = 0
        while True:
            it += 1
            cands = []
            for j, st in enumerate(states):
                if st.done:
                    continue
                while True:
                    found = self._candidate(j, st, instance, ~(assigned | st.excluded))
                    if found is None:
                        st.done = True
                        break
                    v, cov = found
                    mrev = camps[j].cpe * n * cov / st.sample.theta
                    mpay = mrev + costs[j, v]
                    if st.payment + mpay <= camps[j].budget + BUDGET_TOL:
                        cands.append((j, v, cov, mrev, mpay))
                        break
                    st.excluded[v] = True
                    trace.log(iteration=it, event="reject", ad=j, node=v, marginal_revenue=mrev,
                              marginal_payment=mpay, theta=st.sample.theta, latent_size=st.latent)
            if not cands:
                break
            i, v, cov, mrev, mpay = self._choose(cands, it)
            st = states[i]
            assigned[v] = True
            removed = rr.remove_covered(st.sample, v)
            st.ledger.add(v, removed)
            st.revenue += mrev
            st.incentive += costs[i, v]
            trace.log(iteration=it, event="accept", ad=i, node=v, marginal_revenue=mrev, marginal_payment=mpay,
                      theta=st.sample.theta, latent_size=st.latent, revenue=sum(s.revenue for s in states))
            if len(st.ledger) >= st.latent:
                self._grow(i, st, instance, assigned, trace, it, states)
        seeds = [s.ledger.nodes for s in states]
        spreads = [s.revenue / c.cpe for s, c in zip(states, camps)]
        self.thetas_ = [s.sample.theta for s in states]
        self.latent_sizes_ = [s.latent for s in states]
        self.samples_ = [s.sample for s in states]
        return Allocation(seeds, spreads, camps, instance.incentives), trace

    def _grow(self, i, st, instance, assigned, trace, it, states):
        """Revise the latent seed-set size and top the sample up to match."""
        camp = instance.campaigns[i]
        n = instance.n
        f_max = st.sample.alive_cov.max() / st.sample.theta
        s_next = rr.latent_seed_size_update(st.latent, camp.budget, st.payment,
                                            instance.incentives.c_max(i), camp.cpe, n, f_max)
        st.latent = min(n, max(s_next, len(st.ledger)))
        wanted = self._theta_for(st, st.latent)
        extra = max(0, wanted - st.sample.theta)
        if extra == 0:
            return
        st.sample.extend(extra)
        st.revenue = rr.update_estimates(st.sample, st.ledger, camp)
        trace.log(iteration=it, event="extend", ad=i, theta=st.sample.theta, latent_size=st.latent,
                  revenue=sum(s.revenue for s in states))
        # A revised estimate can push the payment over budget; drop the
        # latest seeds of this ad until it fits again.
        while st.payment > camp.budget + BUDGET_TOL and len(st.ledger):
            v = self._revoke_last(st, instance, i)
            assigned[v] = False
            st.excluded[v] = True
            trace.log(iteration=it, event="revoke", ad=i, node=v, theta=st.sample.theta,
                      latent_size=st.latent, revenue=sum(s.revenue for s in states))
        st.done = False

    @staticmethod
    def _revoke_last(st, instance, i):
        v, _ = st.ledger.entries.pop()
        smp = st.sample
        others = np.zeros(smp.n, dtype=bool)
        others[st.ledger.nodes] = True
        revived = []
        for r in smp.idx_sets[smp.idx_ptr[v]:smp.idx_ptr[v + 1]]:
            if smp.alive[r]:
                continue
            mem = smp.members[smp.offsets[r]:smp.offsets[r + 1]]
            if not others[mem].any():
                revived.append(r)
        for r in revived:
            smp.alive[r] = True
            np.add.at(smp.alive_cov, smp.members[smp.offsets[r]:smp.offsets[r + 1]], 1)
        camp = instance.campaigns[i]
        st.revenue = camp.cpe * smp.n * st.ledger.total_coverage / smp.theta
        st.incentive -= instance.incentives.costs[i, v]
        return v


class TICARM(_RRAllocator):
    """Scalable cost-agnostic allocator on RR samples.

    Parameters
    ----------
    epsilon : float in (0, 1)
        Accuracy parameter of the sample size.
    ell : float
        Confidence exponent; estimates hold w.p. about ``1 - n**-ell``.
    random_state : int
    stratified : bool
        Draw RR targets in random-permutation rounds and round sample sizes
        up to whole rounds.
    pilot_size : int
        RR sets used to lower-bound OPT_s.
    """

    algorithm = "ti-carm"

    def _candidate(self, j, st, instance, eligible):
        return rr.select_best_ca_node(st.sample, ~eligible)

    def _choose(self, cands, it):
        return min(cands, key=lambda c: (-c[3], c[0]))


class TICSRM(_RRAllocator):
    """Scalable cost-sensitive allocator on RR samples.

    Same parameters as :class:`TICARM` plus ``window``: per ad, only the
    ``window`` unassigned nodes of highest coverage are ranked by
    coverage-to-cost ratio. ``None`` inspects every node; ``1`` reproduces
    the cost-agnostic candidates.
    """

    algorithm = "ti-csrm"

    def __init__(self, epsilon=0.1, ell=1.0, window=None, random_state=0, stratified=True,
                 pilot_size=rr.PILOT_SIZE):
        super().__init__(epsilon, ell, random_state, stratified, pilot_size)
        self.window = window

    def _check_params(self):
        super()._check_params()
        if self.window is not None and self.window < 1:
            raise ValidationError("window must be >= 1")

    def _candidate(self, j, st, instance, eligible):
        return rr.windowed_select_best_cs_node(st.sample, instance.incentives.costs[j], ~eligible, self.window)

    def _choose(self, cands, it):
        return min(cands, key=lambda c: (-_ratio(c[3], c[4]), -c[3], c[0]))


# --------------------------------------------------------------------------
# PageRank baselines


def pagerank(graph: Graph, campaign, damping: float = 0.85, tol: float = 1e-12, max_iter: int = 10_000) -> np.ndarray:
    """Power-iteration PageRank along arc direction.

    Arc weights are the ad-specific probabilities normalised per source;
    nodes without positive out-weight spread their rank uniformly.
    """
    n = graph.n
    if n == 0:
        return np.zeros(0)
    w = graph.arc_probabilities(campaign)
    out_w = np.bincount(graph.sources, weights=w, minlength=n)
    src, dst = graph.sources, graph.targets
    norm = np.divide(w, out_w[src], out=np.zeros_like(w), where=out_w[src] > 0)
    dangling = out_w <= 0
    x = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        flow = np.bincount(dst, weights=x[src] * norm, minlength=n)
        new = damping * (flow + x[dangling].sum() / n) + (1 - damping) / n
        if np.abs(new - x).sum() < tol:
            return new
        x = new
    return x


class PageRankBaseline(_RRAllocator):
    """Candidates follow the ad-specific PageRank order.

    ``mode="gr"`` gives the next node to the ad with the largest marginal
    revenue (estimated on its RR sample); ``mode="rr"`` serves ads in
    round-robin order, skipping ads without a feasible candidate.
    """

    def __init__(self, mode="gr", epsilon=0.1, ell=1.0, random_state=0, stratified=True,
                 pilot_size=rr.PILOT_SIZE, damping=0.85):
        super().__init__(epsilon, ell, random_state, stratified, pilot_size)
        self.mode = mode
        self.damping = damping

    @property
    def algorithm(self):
        return f"pagerank-{self.mode}"

    def _check_params(self):
        super()._check_params()
        if self.mode not in ("gr", "rr"):
            raise ValidationError("mode must be 'gr' or 'rr'")

    def _prepare(self, instance, states):
        self.orders_ = []
        for camp in instance.campaigns:
            score = pagerank(instance.graph, camp, self.damping)
            self.orders_.append(np.lexsort((np.arange(instance.n), -score)))
        self._cursor = [0] * instance.h
        self._turn = 0

    def _candidate(self, j, st, instance, eligible):
        order = self.orders_[j]
        k = self._cursor[j]
        while k < order.size and not eligible[order[k]]:
            k += 1
        self._cursor[j] = k
        if k == order.size:
            return None
        v = int(order[k])
        return v, int(st.sample.alive_cov[v])

    def _choose(self, cands, it):
        if self.mode == "gr":
            return min(cands, key=lambda c: (-c[3], c[0]))
        h = len(self._cursor)
        by_ad = {c[0]: c for c in cands}
        for step in range(h):
            j = (self._turn + step) % h
            if j in by_ad:
                self._turn = (j + 1) % h
                return by_ad[j]
        raise AssertionError("no candidate")


# --------------------------------------------------------------------------
# Configuration and functional entry points


@dataclass(frozen=True)
class AllocatorConfig:
    algorithm: str = "ti-csrm"
    epsilon: float = 0.1
    ell: float = 1.0
    window: int | None = None
    seed: int = 0
    oracle: str = "auto"
    mc_runs: int = 10_000

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValidationError(f"unknown algorithm {self.algorithm!r}")
        if not 0 < self.epsilon < 1:
            raise ValidationError("epsilon must lie in (0, 1)")
        if self.window is not None and self.window < 1:
            raise ValidationError("window must be >= 1")


def make_allocator(config: AllocatorConfig) -> _BaseAllocator:
    a = config.algorithm
    if a == "ca-greedy":
        return CAGreedy(config.oracle, config.mc_runs, config.seed)
    if a == "cs-greedy":
        return CSGreedy(config.oracle, config.mc_runs, config.seed)
    if a == "ti-carm":
        return TICARM(config.epsilon, config.ell, config.seed)
    if a == "ti-csrm":
        return TICSRM(config.epsilon, config.ell, config.window, config.seed)
    return PageRankBaseline(a.split("-")[1], config.epsilon, config.ell, config.seed)


def _run(est, graph, campaigns, incentives):
    est.fit(Instance(graph, campaigns, incentives))
    return est.allocation_, est.trace_


def ca_greedy(graph, campaigns, incentives, oracle="auto"):
    return _run(CAGreedy(oracle=oracle), graph, campaigns, incentives)


def cs_greedy(graph, campaigns, incentives, oracle="auto"):
    return _run(CSGreedy(oracle=oracle), graph, campaigns, incentives)


def ti_carm(graph, campaigns, incentives, config: AllocatorConfig | None = None):
    config = config or AllocatorConfig("ti-carm")
    return _run(TICARM(config.epsilon, config.ell, config.seed), graph, campaigns, incentives)


def ti_csrm(graph, campaigns, incentives, config: AllocatorConfig | None = None):
    config = config or AllocatorConfig("ti-csrm")
    return _run(TICSRM(config.epsilon, config.ell, config.window, config.seed), graph, campaigns, incentives)


def pagerank_baseline(graph, campaigns, incentives, config: AllocatorConfig | None = None, mode="gr"):
    config = config or AllocatorConfig(f"pagerank-{mode}")
    return _run(PageRankBaseline(mode, config.epsilon, config.ell, config.seed), graph, campaigns, incentives)
