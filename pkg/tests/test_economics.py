import numpy as np
import pytest

from conftest import random_graph
from revmax import AdCampaign, Allocation, Graph, IncentiveModel, IncentiveTable, Instance, ValidationError
from revmax.economics import (allocation_is_feasible, build_incentives, downward_closure_check, incentive_costs,
                              incentives_from_spreads, is_feasible, payment)
from revmax.oracle import ExactSpreadOracle


@pytest.mark.parametrize("kind, alpha, sigma, want", [
    ("linear", 0.2, 5.0, 1.0),
    ("superlinear", 0.1, 4.0, 1.6),
    ("sublinear", 0.7, 1.0, 0.0),
    ("sublinear", 1.0, np.e, 1.0),
])
def test_incentive_formulas(kind, alpha, sigma, want):
    assert incentive_costs(kind, alpha, np.array([sigma]))[0] == pytest.approx(want)


def test_constant_incentive_is_alpha_times_mean():
    np.testing.assert_allclose(incentive_costs("constant", 0.5, np.array([1.0, 2.0, 3.0])), [1.0, 1.0, 1.0])


def test_incentive_errors():
    with pytest.raises(ValidationError):
        incentive_costs("sublinear", 1.0, np.array([0.5]))
    with pytest.raises(ValidationError):
        incentive_costs("cubic", 1.0, np.array([1.0]))
    with pytest.raises(ValidationError):
        IncentiveTable(np.array([[-1.0]]), "given")


def test_incentive_model_estimator(chain):
    g, camp = chain
    camps = [camp, AdCampaign(1, (1.0,), 2.0, 5.0)]
    model = IncentiveModel("linear", 0.2, "exact")
    table = model.fit_transform(g, camps)
    np.testing.assert_allclose(table.costs, [[0.35, 0.3, 0.2]] * 2)
    assert model.get_params()["alpha"] == 0.2
    proxy = build_incentives(g, camps, "linear", spread_source="out-degree-proxy", alpha=1.0)
    np.testing.assert_array_equal(proxy.costs[0], [2.0, 2.0, 1.0])
    with pytest.raises(ValidationError):
        IncentiveModel(alpha=0).fit(g, camps)


def test_unaffordable_ads():
    t = incentives_from_spreads([[2.0, 3.0], [2.0, 3.0]], "linear", 1.0)
    camps = [AdCampaign(0, (1.0,), 1.0, 1.0), AdCampaign(1, (1.0,), 1.0, 5.0)]
    assert t.unaffordable_ads(camps) == [0]


def star_instance(budget=7.0, cpe=1.0, costs=None):
    g = Graph(4, [0, 0], [1, 2], [[1.0], [1.0]])
    camps = [AdCampaign(0, (1.0,), cpe, budget), AdCampaign(1, (1.0,), cpe, budget)]
    costs = np.array(costs if costs is not None else [[4.0, 1.0, 1.0, 1.0]] * 2)
    return Instance(g, camps, IncentiveTable(costs, "given"))


def test_payment_examples():
    inst = star_instance()
    est = ExactSpreadOracle(inst.graph, inst.campaigns)
    a = Allocation.from_estimator([[0], []], inst.campaigns, inst.incentives, est)
    assert payment(a, 1, est) == 0
    assert payment(a, 0, est) == 7.0
    inst2 = star_instance(cpe=2.0, costs=[[0.0] * 4] * 2)
    a2 = Allocation.from_estimator([[0], []], inst2.campaigns, inst2.incentives, est)
    assert payment(a2, 0) == 6.0


def test_is_feasible_examples():
    inst = star_instance()
    est = ExactSpreadOracle(inst.graph, inst.campaigns)
    a = Allocation.from_estimator([[0], []], inst.campaigns, inst.incentives, est)
    assert not is_feasible(a, (0, 1), est)          # node owned by ad 0
    empty = Allocation.empty(inst.campaigns, inst.incentives)
    assert is_feasible(empty, (0, 0), est)         # rho exactly equals B
    assert not is_feasible(a, (3, 0), est)         # would exceed B
    assert is_feasible(empty, (3, 1), est)


def test_allocation_accounting():
    inst = star_instance()
    est = ExactSpreadOracle(inst.graph, inst.campaigns)
    a = Allocation.from_estimator([[0], [3]], inst.campaigns, inst.incentives, est)
    assert a.revenues == (3.0, 1.0) and a.incentive_totals == (4.0, 1.0)
    assert a.total_revenue == 4.0 and a.payments == (7.0, 2.0)
    assert a.is_disjoint() and a.within_budgets() and allocation_is_feasible(a, est)
    assert a.assigned() == {0: 0, 3: 1}
    assert a.to_dict()["total_incentive"] == 5.0
    bad = Allocation.from_estimator([[0], [0]], inst.campaigns, inst.incentives, est)
    assert not bad.is_disjoint() and not allocation_is_feasible(bad, est)


def test_instance_shape_check():
    inst = star_instance()
    with pytest.raises(ValidationError):
        Instance(inst.graph, inst.campaigns[:1], inst.incentives)


def test_downward_closure_examples(rng):
    inst = star_instance(budget=20.0)
    est = ExactSpreadOracle(inst.graph, inst.campaigns)
    assert downward_closure_check(Allocation.empty(inst.campaigns, inst.incentives), est)
    a = Allocation.from_estimator([[0, 3], [1]], inst.campaigns, inst.incentives, est)
    assert downward_closure_check(a, est)
