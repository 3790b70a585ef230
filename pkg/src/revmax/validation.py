"""Input checks shared by the estimators and the command line."""

from __future__ import annotations

import numpy as np

from .exceptions import DimensionError, ValidationError
from .graph import AdCampaign, Graph


def check_graph(graph) -> Graph:
    if not isinstance(graph, Graph):
        raise ValidationError(f"expected a Graph, got {type(graph).__name__}")
    return graph


def check_campaigns(campaigns, topics: int | None = None) -> tuple:
    campaigns = tuple(campaigns)
    for c in campaigns:
        if not isinstance(c, AdCampaign):
            raise ValidationError(f"expected AdCampaign, got {type(c).__name__}")
        if topics is not None and c.gamma_array.size != topics:
            raise DimensionError(f"ad {c.ad_id!r} has {c.gamma_array.size} topics, graph has {topics}")
    return campaigns


def check_seed_set(seeds, n: int) -> list[int]:
    out = [int(s) for s in seeds]
    if any(s < 0 or s >= n for s in out):
        raise ValidationError("seed node outside 0..n-1")
    if len(set(out)) != len(out):
        raise ValidationError("seed set has duplicates")
    return out


def check_cost_matrix(costs, h: int, n: int) -> np.ndarray:
    costs = np.asarray(costs, dtype=np.float64)
    if costs.shape != (h, n):
        raise DimensionError(f"incentives have shape {costs.shape}, expected ({h}, {n})")
    if np.any(costs < 0) or not np.all(np.isfinite(costs)):
        raise ValidationError("incentives must be finite and non-negative")
    return costs


def check_instance(instance):
    from .economics import Instance

    if not isinstance(instance, Instance):
        raise ValidationError(f"expected an Instance, got {type(instance).__name__}")
    check_graph(instance.graph)
    check_campaigns(instance.campaigns, instance.graph.topics)
    check_cost_matrix(instance.incentives.costs, instance.h, instance.n)
    return instance
