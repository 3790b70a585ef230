"""Revenue maximisation for social advertising with seed incentives."""

from .allocators import (
    AllocatorConfig, CAGreedy, CSGreedy, PageRankBaseline, RunTrace, TICARM, TICSRM,
    ca_greedy, cs_greedy, make_allocator, pagerank, pagerank_baseline, ti_carm, ti_csrm,
)
from .economics import (
    Allocation, IncentiveModel, IncentiveTable, Instance, allocation_is_feasible, build_incentives,
    downward_closure_check, incentives_from_spreads, is_feasible, payment,
)
from .exceptions import (
    DimensionError, EnumerationBudgetError, ParseError, RevMaxError, UnsupportedConfigurationError,
    ValidationError,
)
from .graph import AdCampaign, Graph, edge_probability, load_graph, weighted_cascade_probabilities, write_graph
from .oracle import exact_spread, make_oracle, mc_spread, sample_possible_world, singleton_spreads
from .rr import RRSample, estimate_spread, sample_rr_set, sample_size_L

__version__ = "0.1.0"
