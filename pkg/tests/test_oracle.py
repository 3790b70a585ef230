import numpy as np
import pytest

from conftest import arc_list, brute_spread, random_gamma, random_graph
from revmax import AdCampaign, EnumerationBudgetError, Graph, ValidationError
from revmax.oracle import (ExactSpreadOracle, MonteCarloSpreadOracle, exact_spread, exact_spread_table,
                           make_oracle, mc_spread, sample_possible_world, singleton_spreads)


def const_graph(p):
    return Graph(3, [0, 1], [1, 2], [[p], [p]])


CAMP = AdCampaign(0, (1.0,), 1.0, 1.0)


def test_possible_world_extremes():
    assert sample_possible_world(const_graph(1.0), CAMP, 1).live.all()
    assert not sample_possible_world(const_graph(0.0), CAMP, 1).live.any()


def test_possible_world_live_fraction():
    g = Graph(2, [0], [1], [[0.5]])
    rng = np.random.default_rng(0)
    frac = np.mean([sample_possible_world(g, CAMP, rng).live[0] for _ in range(10_000)])
    assert abs(frac - 0.5) <= 0.02


def test_possible_world_reachable():
    w = sample_possible_world(const_graph(1.0), CAMP, 0)
    assert w.reachable([0]) == {0, 1, 2}


def test_mc_deterministic_and_empty():
    g = Graph(2, [0], [1], [[1.0]])
    for runs in (1, 7, 1000):
        assert mc_spread(g, CAMP, [0], runs, 3).value == 2.0
    assert mc_spread(g, CAMP, [], 10, 3).value == 0.0


def test_chain_values(chain):
    g, camp = chain
    assert exact_spread(g, camp, [0]).value == pytest.approx(1.75, abs=1e-12)
    assert exact_spread(g, camp, [0, 2]).value == pytest.approx(2.5, abs=1e-12)
    assert abs(mc_spread(g, camp, [0], 200_000, 11).value - 1.75) <= 0.01


def test_exact_full_seed_set_is_n(rng):
    g = random_graph(rng, 6, 10)
    assert exact_spread(g, CAMP, range(6)).value == pytest.approx(6.0)


def test_exact_matches_brute_force(rng):
    for _ in range(30):
        L = int(rng.integers(1, 3))
        g = random_graph(rng, 5, int(rng.integers(1, 10)), topics=L)
        camp = AdCampaign(0, random_gamma(rng, L), 1.0, 1.0)
        seeds = sorted(rng.choice(5, size=int(rng.integers(1, 4)), replace=False).tolist())
        want = brute_spread(5, arc_list(g, camp), seeds)
        assert exact_spread(g, camp, seeds).value == pytest.approx(want, abs=1e-10)


def test_exact_budget_refusal():
    n = 30
    g = Graph(n, list(range(n - 1)), list(range(1, n)), np.full((n - 1, 1), 0.5))
    with pytest.raises(EnumerationBudgetError, match="mc_spread"):
        exact_spread(g, CAMP, [0])
    # certain arcs need no enumeration
    g1 = Graph(n, list(range(n - 1)), list(range(1, n)), np.ones((n - 1, 1)))
    assert exact_spread(g1, CAMP, [0]).value == n


def test_subset_table_matches_per_query(rng):
    g = random_graph(rng, 5, 8)
    table = exact_spread_table(g, CAMP)
    for mask in range(32):
        seeds = [v for v in range(5) if mask >> v & 1]
        assert table[mask] == pytest.approx(exact_spread(g, CAMP, seeds).value, abs=1e-12)


def test_mc_within_normal_bound(rng):
    # |mc - exact| <= 3 * n / sqrt(R) / 2 in at least 99% of trials
    misses = trials = 0
    for _ in range(20):
        g = random_graph(rng, 5, 8)
        seeds = [int(rng.integers(5))]
        exact = exact_spread(g, CAMP, seeds).value
        for k in range(10):
            runs = 2000
            est = mc_spread(g, CAMP, seeds, runs, rng).value
            trials += 1
            misses += abs(est - exact) > 3 * 5 / np.sqrt(runs) / 2
    assert misses <= 0.01 * trials


def test_mc_reproducible_prefix(chain):
    g, camp = chain
    a = mc_spread(g, camp, [0], 5000, 42).value
    b = mc_spread(g, camp, [0], 5000, 42).value
    assert a == b


def test_singleton_spreads_methods(chain):
    g, camp = chain
    np.testing.assert_allclose(singleton_spreads(g, camp, "exact"), [1.75, 1.5, 1.0])
    np.testing.assert_array_equal(singleton_spreads(g, camp, "out-degree-proxy"), [2.0, 2.0, 1.0])
    mc = singleton_spreads(g, camp, "monte-carlo", 100_000, 1)
    np.testing.assert_allclose(mc, [1.75, 1.5, 1.0], atol=0.02)
    with pytest.raises(ValidationError):
        singleton_spreads(g, camp, "nope")


def test_oracles(chain):
    g, camp = chain
    ex = make_oracle(g, [camp])
    assert isinstance(ex, ExactSpreadOracle) and ex(0, [0]) == pytest.approx(1.75)
    mc = make_oracle(g, [camp], "monte-carlo", runs=50_000, seed=1)
    assert isinstance(mc, MonteCarloSpreadOracle) and abs(mc(0, [0]) - 1.75) < 0.03
    # common random numbers keep the estimate monotone
    assert mc(0, [0, 1]) >= mc(0, [0])
    with pytest.raises(ValidationError):
        make_oracle(g, [camp], "bogus")


def test_seed_validation(chain):
    g, camp = chain
    with pytest.raises(ValidationError):
        exact_spread(g, camp, [5])
