"""Seed incentives, payments, revenue and feasibility of allocations."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from ._rng import make_rng
from .exceptions import ValidationError
from .graph import AdCampaign, Graph
from .oracle import singleton_spreads

BUDGET_TOL = 1e-9
INCENTIVE_KINDS = ("linear", "constant", "sublinear", "superlinear")
SPREAD_SOURCES = ("exact", "monte-carlo", "out-degree-proxy")

# (ad index, seed set) -> estimated spread
SpreadEstimator = Callable[[int, Sequence[int]], float]


def incentive_costs(kind: str, alpha: float, spreads: np.ndarray) -> np.ndarray:
    """Per-node incentives for one ad from its singleton spreads."""
    spreads = np.asarray(spreads, dtype=np.float64)
    if kind == "linear":
        return alpha * spreads
    if kind == "constant":
        mean = spreads.sum() / spreads.size if spreads.size else 0.0
        return np.full(spreads.shape, alpha * mean)
    if kind == "sublinear":
        if np.any(spreads < 1.0):
            raise ValidationError("sublinear incentives need every singleton spread >= 1")
        return alpha * np.log(spreads)
    if kind == "superlinear":
        return alpha * spreads**2
    raise ValidationError(f"unknown incentive model {kind!r}")


@dataclass(frozen=True)
class IncentiveTable:
    """Matrix of seed incentives ``costs[i, u]`` (ads x nodes)."""

    costs: np.ndarray
    source: str
    kind: str | None = None
    alpha: float | None = None
    spreads: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        c = np.array(self.costs, dtype=np.float64, ndmin=2)
        if np.any(c < 0) or not np.all(np.isfinite(c)):
            raise ValidationError("incentives must be finite and non-negative")
        c.setflags(write=False)
        object.__setattr__(self, "costs", c)

    @property
    def h(self) -> int:
        return self.costs.shape[0]

    def cost(self, ad: int, node: int) -> float:
        return float(self.costs[ad, node])

    def total(self, ad: int, nodes) -> float:
        nodes = list(nodes)
        return float(self.costs[ad, nodes].sum()) if nodes else 0.0

    def c_max(self, ad: int) -> float:
        return float(self.costs[ad].max()) if self.costs.shape[1] else 0.0

    def unaffordable_ads(self, campaigns: Sequence[AdCampaign]) -> list[int]:
        """Ads whose budget is below their cheapest incentive."""
        return [i for i, c in enumerate(campaigns)
                if self.costs.shape[1] and c.budget < self.costs[i].min()]


class IncentiveModel(BaseEstimator):
    """Builds an :class:`IncentiveTable` from singleton spreads.

    Parameters
    ----------
    kind : {"linear", "constant", "sublinear", "superlinear"}
    alpha : float
        Currency scale, > 0.
    spread_source : {"exact", "monte-carlo", "out-degree-proxy"}
    runs : int
        Monte-Carlo runs per ad when ``spread_source="monte-carlo"``.
    random_state : int or None
    """

    def __init__(self, kind="linear", alpha=0.2, spread_source="monte-carlo", runs=1000, random_state=0):
        self.kind = kind
        self.alpha = alpha
        self.spread_source = spread_source
        self.runs = runs
        self.random_state = random_state

    def fit(self, graph: Graph, campaigns: Sequence[AdCampaign]):
        if self.kind not in INCENTIVE_KINDS:
            raise ValidationError(f"unknown incentive model {self.kind!r}")
        if not self.alpha > 0:
            raise ValidationError("alpha must be > 0")
        if self.spread_source not in SPREAD_SOURCES:
            raise ValidationError(f"unknown spread source {self.spread_source!r}")
        by_gamma: dict[tuple, np.ndarray] = {}
        rows = []
        for i, camp in enumerate(campaigns):
            # Ads with the same topic mix share one spread estimate.
            if camp.gamma not in by_gamma:
                rng = make_rng(self.random_state, len(by_gamma))
                by_gamma[camp.gamma] = singleton_spreads(graph, camp, self.spread_source, self.runs, rng)
            rows.append(by_gamma[camp.gamma])
        self.singleton_spreads_ = np.array(rows).reshape(len(rows), graph.n)
        return self

    def transform(self, graph=None, campaigns=None) -> IncentiveTable:
        spreads = self.singleton_spreads_
        costs = np.array([incentive_costs(self.kind, self.alpha, row) for row in spreads]).reshape(spreads.shape)
        return IncentiveTable(costs, self.spread_source, self.kind, float(self.alpha), spreads)

    def fit_transform(self, graph, campaigns, **fit_params) -> IncentiveTable:
        return self.fit(graph, campaigns).transform()


def build_incentives(graph: Graph, campaigns: Sequence[AdCampaign], model: IncentiveModel | str,
                     spread_source: str | None = None, alpha: float | None = None, **kwargs) -> IncentiveTable:
    """Functional shortcut for ``IncentiveModel(...).fit_transform``."""
    if isinstance(model, str):
        model = IncentiveModel(kind=model, **({"alpha": alpha} if alpha is not None else {}), **kwargs)
    if spread_source is not None:
        model = model.set_params(spread_source=spread_source)
    return model.fit_transform(graph, campaigns)


def incentives_from_spreads(spreads, kind: str, alpha: float, source: str = "given") -> IncentiveTable:
    """Table from explicit singleton spreads, one row per ad."""
    spreads = np.array(spreads, dtype=np.float64, ndmin=2)
    costs = np.array([incentive_costs(kind, alpha, row) for row in spreads]).reshape(spreads.shape)
    return IncentiveTable(costs, source, kind, alpha, spreads)


@dataclass(frozen=True)
class Instance:
    """A complete revenue-maximisation problem."""

    graph: Graph
    campaigns: tuple
    incentives: IncentiveTable

    def __post_init__(self):
        object.__setattr__(self, "campaigns", tuple(self.campaigns))
        if self.incentives.costs.shape != (len(self.campaigns), self.graph.n):
            raise ValidationError(
                f"incentive table has shape {self.incentives.costs.shape}, "
                f"expected ({len(self.campaigns)}, {self.graph.n})"
            )

    @property
    def h(self) -> int:
        return len(self.campaigns)

    @property
    def n(self) -> int:
        return self.graph.n


@dataclass(frozen=True)
class Allocation:
    """Disjoint seed sets per ad plus the spread estimates used to price them.

    ``seeds[i]`` lists ad i's seeds in selection order; ``spreads[i]`` is
    the estimated spread of that whole set.
    """

    seeds: tuple
    spreads: tuple
    campaigns: tuple = field(repr=False)
    incentives: IncentiveTable = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(tuple(int(v) for v in s) for s in self.seeds))
        object.__setattr__(self, "spreads", tuple(float(x) for x in self.spreads))
        object.__setattr__(self, "campaigns", tuple(self.campaigns))

    @classmethod
    def empty(cls, campaigns, incentives) -> "Allocation":
        h = len(campaigns)
        return cls(((),) * h, (0.0,) * h, campaigns, incentives)

    @classmethod
    def from_estimator(cls, seeds, campaigns, incentives, estimator: SpreadEstimator) -> "Allocation":
        spreads = [estimator(i, s) if len(s) else 0.0 for i, s in enumerate(seeds)]
        return cls(seeds, spreads, campaigns, incentives)

    @property
    def h(self) -> int:
        return len(self.seeds)

    @property
    def revenues(self) -> tuple:
        return tuple(c.cpe * s for c, s in zip(self.campaigns, self.spreads))

    @property
    def incentive_totals(self) -> tuple:
        return tuple(self.incentives.total(i, s) for i, s in enumerate(self.seeds))

    @property
    def payments(self) -> tuple:
        return tuple(r + c for r, c in zip(self.revenues, self.incentive_totals))

    @property
    def total_revenue(self) -> float:
        return float(sum(self.revenues))

    @property
    def total_incentive(self) -> float:
        return float(sum(self.incentive_totals))

    @property
    def seed_counts(self) -> tuple:
        return tuple(len(s) for s in self.seeds)

    def assigned(self) -> dict[int, int]:
        """node -> ad for every seed."""
        return {v: i for i, s in enumerate(self.seeds) for v in s}

    def is_disjoint(self) -> bool:
        flat = [v for s in self.seeds for v in s]
        return len(flat) == len(set(flat))

    def within_budgets(self, tol: float = BUDGET_TOL) -> bool:
        return all(p <= c.budget + tol for p, c in zip(self.payments, self.campaigns))

    def with_seeds(self, seeds, estimator: SpreadEstimator) -> "Allocation":
        return Allocation.from_estimator(seeds, self.campaigns, self.incentives, estimator)

    def to_dict(self) -> dict:
        return {
            "seeds": [list(s) for s in self.seeds],
            "spreads": list(self.spreads),
            "revenues": list(self.revenues),
            "incentive_totals": list(self.incentive_totals),
            "payments": list(self.payments),
            "budgets": [c.budget for c in self.campaigns],
            "total_revenue": self.total_revenue,
            "total_incentive": self.total_incentive,
        }


def payment(allocation: Allocation, ad: int, estimator: SpreadEstimator | None = None) -> float:
    """``cpe(i) * spread(S_i) + c_i(S_i)``; stored spreads are used when no estimator is given."""
    seeds = allocation.seeds[ad]
    if not seeds:
        return 0.0
    spread = allocation.spreads[ad] if estimator is None else estimator(ad, seeds)
    return allocation.campaigns[ad].cpe * spread + allocation.incentives.total(ad, seeds)


def is_feasible(allocation: Allocation, candidate_pair, estimator: SpreadEstimator, tol: float = BUDGET_TOL) -> bool:
    """Can node u be added to ad i without breaking disjointness or i's budget?"""
    u, i = int(candidate_pair[0]), int(candidate_pair[1])
    if u in allocation.assigned():
        return False
    seeds = allocation.seeds[i] + (u,)
    camp = allocation.campaigns[i]
    rho = camp.cpe * estimator(i, seeds) + allocation.incentives.total(i, seeds)
    return rho <= camp.budget + tol


def allocation_is_feasible(allocation: Allocation, estimator: SpreadEstimator | None = None,
                           tol: float = BUDGET_TOL) -> bool:
    if not allocation.is_disjoint():
        return False
    return all(payment(allocation, i, estimator) <= c.budget + tol for i, c in enumerate(allocation.campaigns))


def downward_closure_check(allocation: Allocation, estimator: SpreadEstimator, tol: float = BUDGET_TOL) -> bool:
    """Every allocation obtained by dropping one (node, ad) pair is feasible."""
    for i, seeds in enumerate(allocation.seeds):
        for u in seeds:
            reduced = list(allocation.seeds)
            reduced[i] = tuple(v for v in seeds if v != u)
            smaller = Allocation.from_estimator(reduced, allocation.campaigns, allocation.incentives, estimator)
            if not allocation_is_feasible(smaller, estimator, tol):
                return False
    return True
