"""Shared fixtures and independent reference oracles.

The reference functions here deliberately avoid revmax internals: spread is
computed by enumerating arc outcomes with itertools and running the cascade
round by round, the way the diffusion model is usually stated.
"""

import itertools

import numpy as np
import pytest

from revmax import AdCampaign, Graph


def cascade(n, live_arcs, seeds):
    """Round-by-round cascade over the live arcs; returns the active set."""
    active = set(seeds)
    frontier = set(seeds)
    while frontier:
        nxt = set()
        for u, v in live_arcs:
            if u in frontier and v not in active:
                nxt.add(v)
        active |= nxt
        frontier = nxt
    return active


def brute_spread(n, arcs, seeds):
    """Expected spread by enumerating every live/blocked combination.

    ``arcs`` is a list of (u, v, p).
    """
    if not seeds:
        return 0.0
    total = 0.0
    for outcome in itertools.product((0, 1), repeat=len(arcs)):
        w = 1.0
        live = []
        for (u, v, p), bit in zip(arcs, outcome):
            w *= p if bit else 1 - p
            if bit:
                live.append((u, v))
        if w:
            total += w * len(cascade(n, live, seeds))
    return total


def random_graph(rng, n, m, topics=1, p_low=0.05, p_high=0.95):
    """Random simple digraph with m distinct arcs and random topic probabilities."""
    pairs = [(u, v) for u in range(n) for v in range(n) if u != v]
    pick = rng.choice(len(pairs), size=min(m, len(pairs)), replace=False)
    arcs = [pairs[k] for k in sorted(pick)]
    probs = rng.uniform(p_low, p_high, size=(len(arcs), topics))
    return Graph(n, [a for a, _ in arcs], [b for _, b in arcs], probs)


def random_gamma(rng, topics):
    g = rng.dirichlet(np.ones(topics))
    g[-1] = 1.0 - g[:-1].sum()
    return tuple(np.clip(g, 0, None))


def arc_list(graph, campaign):
    p = graph.arc_probabilities(campaign)
    return [(int(u), int(v), float(q)) for (u, v), q in zip(graph.arcs(), p)]


@pytest.fixture
def chain():
    """a -> b (0.5), b -> c (0.5), one topic."""
    g = Graph(3, [0, 1], [1, 2], [[0.5], [0.5]], labels=["a", "b", "c"])
    return g, AdCampaign(0, (1.0,), 1.0, 10.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance summary -------------------------------------------------------

ACCEPTANCE_LINES = {}


def record_criterion(number, ok, detail):
    ACCEPTANCE_LINES[number] = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
