"""Directed social graph with topic-aware arc probabilities.

Node labels from input files are compacted to dense indices ``0..n-1``;
the original labels are kept in :attr:`Graph.labels`.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Sequence

import numpy as np

from .exceptions import DimensionError, ParseError, UnsupportedConfigurationError, ValidationError

GAMMA_TOL = 1e-9


def _csr(keys: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Group arc indices by ``keys``; returns (ptr, arc_ids)."""
    order = np.argsort(keys, kind="stable").astype(np.int64)
    counts = np.bincount(keys, minlength=n) if n else np.zeros(0, dtype=np.int64)
    ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=ptr[1:])
    return ptr, order


class Graph:
    """Immutable directed graph with an ``(m, L)`` matrix of topic probabilities.

    Args:
        n: number of nodes.
        sources, targets: arc endpoints as dense node indices.
        probs: array of shape ``(m, L)`` with entries in [0, 1].
        labels: original node labels, defaults to ``range(n)``.
    """

    def __init__(self, n: int, sources, targets, probs, labels: Sequence[Hashable] | None = None):
        if n < 0:
            raise ValidationError("node count must be non-negative")
        src = np.asarray(sources, dtype=np.int32).reshape(-1)
        dst = np.asarray(targets, dtype=np.int32).reshape(-1)
        p = np.asarray(probs, dtype=np.float64)
        if p.ndim == 1:
            p = p.reshape(-1, 1)
        if len(src) != len(dst) or p.shape[0] != len(src):
            raise ValidationError("sources, targets and probs must describe the same arcs")
        if p.shape[0] == 0 and p.shape[1] == 0:
            p = p.reshape(0, 1)
        if p.shape[1] < 1:
            raise ValidationError("topic count L must be at least 1")
        if len(src) and (src.min() < 0 or dst.min() < 0 or src.max() >= n or dst.max() >= n):
            raise ValidationError("arc endpoint outside 0..n-1")
        if not np.all(np.isfinite(p)) or np.any(p < 0.0) or np.any(p > 1.0):
            raise ValidationError("every arc probability must lie in [0, 1]")
        if np.any(src == dst):
            raise ValidationError("self-loops are not allowed")
        if len(src):
            pair = src.astype(np.int64) * max(n, 1) + dst
            if len(np.unique(pair)) != len(pair):
                raise ValidationError("parallel arcs are not allowed")

        self.n = int(n)
        self.sources = src
        self.targets = dst
        self.probs = p
        for arr in (self.sources, self.targets, self.probs):
            arr.setflags(write=False)
        self.labels = tuple(labels) if labels is not None else tuple(range(n))
        if len(self.labels) != n:
            raise ValidationError("labels must have one entry per node")
        self.out_ptr, self.out_arcs = _csr(src.astype(np.int64), n)
        self.in_ptr, self.in_arcs = _csr(dst.astype(np.int64), n)

    @property
    def m(self) -> int:
        return len(self.sources)

    @property
    def topics(self) -> int:
        return self.probs.shape[1]

    def __repr__(self):
        return f"Graph(n={self.n}, m={self.m}, L={self.topics})"

    def index_of(self, label) -> int:
        """Dense index of an original node label."""
        try:
            return self._label_index[label]
        except AttributeError:
            self._label_index = {lab: i for i, lab in enumerate(self.labels)}
            return self._label_index[label]

    def arcs(self) -> Iterable[tuple[int, int]]:
        return zip(self.sources.tolist(), self.targets.tolist())

    def out_degree(self) -> np.ndarray:
        return np.diff(self.out_ptr)

    def in_degree(self) -> np.ndarray:
        return np.diff(self.in_ptr)

    def arc_probabilities(self, campaign: "AdCampaign") -> np.ndarray:
        """Ad-specific probability of every arc, shape ``(m,)``."""
        gamma = campaign.gamma_array
        if gamma.shape[0] != self.topics:
            raise DimensionError(
                f"campaign {campaign.ad_id} has {gamma.shape[0]} topics, graph has {self.topics}"
            )
        p = self.probs @ gamma
        # Rounding can push a convex combination a hair outside [0, 1].
        return np.clip(p, 0.0, 1.0)

    def transpose(self) -> "Graph":
        return Graph(self.n, self.targets, self.sources, self.probs, self.labels)

    def with_probabilities(self, probs) -> "Graph":
        return Graph(self.n, self.sources, self.targets, probs, self.labels)

    def arc_set(self) -> set[tuple[int, int]]:
        return set(self.arcs())


@dataclass(frozen=True)
class AdCampaign:
    """One advertiser: topic distribution, cost per engagement and budget."""

    ad_id: int
    gamma: tuple[float, ...]
    cpe: float
    budget: float
    gamma_array: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        g = np.asarray(self.gamma, dtype=np.float64).reshape(-1)
        if g.size < 1:
            raise ValidationError(f"campaign {self.ad_id}: empty topic distribution")
        if np.any(g < 0) or not np.all(np.isfinite(g)):
            raise ValidationError(f"campaign {self.ad_id}: topic weights must be non-negative")
        total = float(g.sum())
        if abs(total - 1.0) > GAMMA_TOL:
            raise ValidationError(f"campaign {self.ad_id}: topic weights sum to {total!r}, expected 1")
        if not self.cpe > 0:
            raise ValidationError(f"campaign {self.ad_id}: cpe must be > 0")
        if not self.budget >= 0:
            # Budget 0 is tolerated so that degenerate instances can be expressed.
            raise ValidationError(f"campaign {self.ad_id}: budget must be >= 0")
        g.setflags(write=False)
        object.__setattr__(self, "gamma", tuple(float(x) for x in g))
        object.__setattr__(self, "gamma_array", g)


def edge_probability(graph: Graph, arc: tuple[int, int] | int, campaign: AdCampaign) -> float:
    """Topic-weighted probability of one arc for one ad.

    ``arc`` is either an arc index or a ``(source, target)`` pair of dense indices.
    """
    if isinstance(arc, (int, np.integer)):
        idx = int(arc)
        if not 0 <= idx < graph.m:
            raise ValidationError(f"arc index {idx} out of range")
    else:
        u, v = arc
        hits = np.flatnonzero((graph.sources == u) & (graph.targets == v))
        if hits.size == 0:
            raise ValidationError(f"arc {arc!r} not in graph")
        idx = int(hits[0])
    gamma = campaign.gamma_array
    if gamma.shape[0] != graph.topics:
        raise DimensionError(f"campaign has {gamma.shape[0]} topics, graph has {graph.topics}")
    return min(1.0, max(0.0, float(graph.probs[idx] @ gamma)))


def weighted_cascade_probabilities(graph: Graph) -> Graph:
    """Replace every arc probability by ``1 / in_degree(target)``."""
    if graph.topics != 1:
        raise UnsupportedConfigurationError("weighted cascade is only defined for single-topic graphs")
    indeg = graph.in_degree()
    p = np.zeros((graph.m, 1))
    if graph.m:
        p[:, 0] = 1.0 / indeg[graph.targets]
    return graph.with_probabilities(p)


def _parse_label(token: str):
    try:
        return int(token)
    except ValueError:
        return token


def load_graph(path: str | os.PathLike, format: str = "edgelist") -> Graph:
    """Read a graph file.

    The ``edgelist`` format has one arc per line,
    ``source<TAB>target<TAB>p_1 ... p_L``; runs of spaces are accepted as
    separators too. ``#topics L`` fixes L, other ``#`` lines are comments.
    """
    if format != "edgelist":
        raise ValidationError(f"unknown graph format {format!r}")
    topics = None
    labels: dict = {}
    src, dst, probs = [], [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                head = line[1:].split()
                if len(head) == 2 and head[0] == "topics":
                    try:
                        topics = int(head[1])
                    except ValueError:
                        raise ParseError(f"bad topic count {head[1]!r}", lineno) from None
                    if topics < 1:
                        raise ParseError("topic count must be >= 1", lineno)
                continue
            parts = line.split("\t") if "\t" in line else line.split()
            parts = [t.strip() for t in parts if t.strip()]
            if len(parts) < 3:
                raise ParseError("expected source, target and at least one probability", lineno)
            if topics is None:
                topics = len(parts) - 2
            if len(parts) - 2 != topics:
                raise ParseError(f"expected {topics} probabilities, found {len(parts) - 2}", lineno)
            try:
                row = [float(t) for t in parts[2:]]
            except ValueError:
                raise ParseError("probability is not a number", lineno) from None
            if any(not (0.0 <= x <= 1.0) or math.isnan(x) for x in row):
                raise ValidationError(f"line {lineno}: probability outside [0, 1]")
            u, v = _parse_label(parts[0]), _parse_label(parts[1])
            if u == v:
                raise ValidationError(f"line {lineno}: self-loop on {parts[0]!r}")
            for lab in (u, v):
                if lab not in labels:
                    labels[lab] = len(labels)
            src.append(labels[u])
            dst.append(labels[v])
            probs.append(row)
    L = topics or 1
    p = np.asarray(probs, dtype=np.float64).reshape(len(probs), L)
    try:
        return Graph(len(labels), src, dst, p, list(labels))
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from None


def write_graph(graph: Graph, path: str | os.PathLike) -> None:
    """Write ``graph`` in the edge-list format read by :func:`load_graph`."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"#topics {graph.topics}\n")
        for e in range(graph.m):
            u = graph.labels[graph.sources[e]]
            v = graph.labels[graph.targets[e]]
            ps = "\t".join(repr(float(x)) for x in graph.probs[e])
            fh.write(f"{u}\t{v}\t{ps}\n")
