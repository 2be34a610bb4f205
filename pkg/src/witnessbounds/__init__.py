"""Bounds on average causal effects from witness/admissible-set pairs under relaxed faithfulness."""

from .engine import Engine, expected_interval, sample_bounds
from .errors import (
    DataError, GenerationError, InfeasibleError, PolytopeDegeneracyError, SolverError, WitnessBoundsError,
)
from .lp import lp_interval, lp_stratum_interval
from .params import IntervalBound, RelaxationParams
from .relaxation import (
    AlephSample, aleph_loglik, aleph_mh, backdoor_ace, grid_search, reference_set, trunc_normal_logpdf,
)
from .symbolic import back_substitution, backsub_interval, balke_pearl_siv, theorem_box
from .tables import BinaryDataset, ContingencyTable, DirichletSpec, dirichlet_sample, empirical_counts
from .witness import (
    SearchConfig, SummaryMode, WitnessResult, falsification_test, rule1_decision, rule1_scores, summarize,
    wpp_score, wpp_search,
)

__all__ = [
    "AlephSample", "BinaryDataset", "ContingencyTable", "DataError", "DirichletSpec", "Engine",
    "GenerationError", "InfeasibleError", "IntervalBound", "PolytopeDegeneracyError", "RelaxationParams",
    "SearchConfig", "SolverError", "SummaryMode", "WitnessBoundsError", "WitnessResult", "aleph_loglik",
    "aleph_mh", "back_substitution", "backdoor_ace", "backsub_interval", "balke_pearl_siv", "dirichlet_sample",
    "empirical_counts", "expected_interval", "falsification_test", "grid_search", "lp_interval",
    "lp_stratum_interval", "reference_set", "rule1_decision", "rule1_scores", "sample_bounds", "summarize",
    "theorem_box", "trunc_normal_logpdf", "wpp_score", "wpp_search",
]

__version__ = "0.1.0"
