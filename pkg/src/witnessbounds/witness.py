"""Witness/admissible-set search, the falsification test and result summaries."""

from __future__ import annotations

import itertools
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .engine import Engine, expected_interval, sample_bounds
from .errors import DataError, InfeasibleError
from .params import IntervalBound, RelaxationParams
from .tables import (
    DEFAULT_ESS, BinaryDataset, ContingencyTable, DirichletSpec, bdeu_log_marginal, dirichlet_sample,
    empirical_counts, family_counts,
)

MAX_POOL = 12
REJECTION_THRESHOLD = 0.95


@dataclass(frozen=True)
class Rule1Scores:
    """Log marginal likelihoods of Y's table under the four competing parent sets.

    M1: parents {W} + Z, M2: Z, M3: Z + {X}, M4: {W, X} + Z.
    """

    M1: float
    M2: float
    M3: float
    M4: float

    def to_dict(self) -> dict:
        return {"M1": self.M1, "M2": self.M2, "M3": self.M3, "M4": self.M4}


def rule1_scores(dataset: BinaryDataset, w_col: str, z_cols, x_col: str, y_col: str,
                 ess: float = DEFAULT_ESS) -> Rule1Scores:
    z_cols = list(z_cols)
    if x_col in z_cols or w_col in z_cols or y_col in z_cols:
        raise DataError("Z must not contain W, X or Y")
    if len({w_col, x_col, y_col}) != 3:
        raise DataError("W, X and Y must be distinct columns")
    if dataset.n == 0:
        raise DataError("empty dataset")

    def score(parents):
        return bdeu_log_marginal(family_counts(dataset, y_col, parents), ess)

    return Rule1Scores(
        M1=score([w_col, *z_cols]),
        M2=score(z_cols),
        M3=score([*z_cols, x_col]),
        M4=score([w_col, x_col, *z_cols]),
    )


def rule1_decision(s: Rule1Scores) -> bool:
    return s.M1 > s.M2 and s.M3 > s.M4


def wpp_score(s: Rule1Scores) -> float:
    return (s.M1 - s.M2) + (s.M3 - s.M4)


@dataclass
class FalsificationResult:
    accepted: bool
    rejection_rate: float
    lower: np.ndarray  # accepted draws only
    upper: np.ndarray
    expected: IntervalBound | None
    expected_method: str
    engine_failures: int
    n_samples: int

    @property
    def samples(self) -> list[IntervalBound]:
        return [IntervalBound(float(a), float(b)) for a, b in zip(self.lower, self.upper)]


def falsification_test(counts: ContingencyTable, aleph: RelaxationParams, n_samples: int,
                       rng: np.random.Generator, *, threshold: float = REJECTION_THRESHOLD,
                       engine: Engine | str = Engine.BACKSUB, prior: DirichletSpec | None = None,
                       max_iters: int = 4) -> FalsificationResult:
    """Propose from the unconstrained Dirichlet posterior and reject draws the engine finds infeasible.

    The pair is rejected when the rejection rate strictly exceeds ``threshold``.
    Engine failures are neither accepted nor counted as rejections.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    prior = prior or DirichletSpec.bdeu(DEFAULT_ESS, counts.n_strata)
    draws = dirichlet_sample(counts, prior, rng, size=n_samples)
    bounds = sample_bounds(draws.values, draws.weights, aleph, Engine.LP if Engine(engine) is Engine.LP
                           else Engine.BACKSUB, max_iters)
    n_rej = int((bounds.status == 1).sum())
    n_fail = int((bounds.status == 2).sum())
    rate = n_rej / n_samples
    ok = bounds.feasible
    expected, method = None, "none"
    if ok.any():
        expected, method = expected_interval(draws.values, draws.weights, bounds, aleph, engine)
    return FalsificationResult(
        accepted=bool(rate <= threshold and ok.any()),
        rejection_rate=rate,
        lower=bounds.lower[ok],
        upper=bounds.upper[ok],
        expected=expected,
        expected_method=method,
        engine_failures=n_fail,
        n_samples=n_samples,
    )


@dataclass
class WitnessResult:
    witness: str
    z_cols: tuple[str, ...]
    scores: Rule1Scores
    score: float
    rejection_rate: float
    lower: np.ndarray
    upper: np.ndarray
    expected: IntervalBound
    expected_method: str = "backsub"
    engine_failures: int = 0

    def quantiles(self, q=(0.025, 0.975)) -> dict:
        return {
            "lower": [float(v) for v in np.quantile(self.lower, q)],
            "upper": [float(v) for v in np.quantile(self.upper, q)],
            "levels": list(q),
        }

    def to_dict(self) -> dict:
        return {
            "witness": self.witness,
            "set": list(self.z_cols),
            "score": self.score,
            "rule1": self.scores.to_dict(),
            "rejection_rate": self.rejection_rate,
            "expected_lower": self.expected.lower,
            "expected_upper": self.expected.upper,
            "expected_method": self.expected_method,
            "n_accepted": int(len(self.lower)),
            "engine_failures": self.engine_failures,
            "quantiles": self.quantiles(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


@dataclass
class SearchConfig:
    max_set_size: int = 3
    forbidden_witnesses: tuple[str, ...] = ()
    forbidden_members: tuple[str, ...] = ()
    n_samples: int = 1000
    engine: Engine = Engine.BACKSUB
    ess: float = DEFAULT_ESS
    threshold: float = REJECTION_THRESHOLD
    max_pool: int = MAX_POOL
    max_iters: int = 4
    prior_cell: float | None = None  # per-cell Dirichlet concentration; None = BDeu split
    workers: int = 1
    seed: int = 0
    extra: dict = field(default_factory=dict)

    def prior(self, n_strata: int) -> DirichletSpec:
        if self.prior_cell is None:
            return DirichletSpec.bdeu(self.ess, n_strata)
        return DirichletSpec(self.prior_cell, self.prior_cell * 8)


def candidate_pairs(pool, config: SearchConfig) -> list[tuple[str, tuple[str, ...]]]:
    """All (W, Z) with Z drawn from the pool minus W, in a fixed order."""
    pool = list(pool)
    out = []
    for w in pool:
        if w in config.forbidden_witnesses:
            continue
        members = [c for c in pool if c != w and c not in config.forbidden_members]
        for k in range(min(config.max_set_size, len(members)) + 1):
            for z in itertools.combinations(members, k):
                out.append((w, z))
    return out


@dataclass(frozen=True)
class Candidate:
    """A pair that passed the independence screen, with its position in the full enumeration."""

    index: int
    witness: str
    z_cols: tuple[str, ...]
    scores: Rule1Scores


def _screen(args):
    dataset, w, z, x_col, y_col, ess, idx = args
    scores = rule1_scores(dataset, w, z, x_col, y_col, ess)
    return Candidate(idx, w, tuple(z), scores) if rule1_decision(scores) else None


def _falsify(args):
    dataset, cand, x_col, y_col, aleph, config = args
    counts = empirical_counts(dataset, y_col, x_col, cand.witness, cand.z_cols)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, cand.index]))
    fr = falsification_test(counts, aleph, config.n_samples, rng, threshold=config.threshold,
                            engine=config.engine, prior=config.prior(counts.n_strata),
                            max_iters=config.max_iters)
    if not fr.accepted:
        return None
    return WitnessResult(cand.witness, cand.z_cols, cand.scores, wpp_score(cand.scores), fr.rejection_rate,
                         fr.lower, fr.upper, fr.expected, fr.expected_method, fr.engine_failures)


def _run(fn, jobs, workers: int) -> list:
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, jobs))
    return [fn(j) for j in jobs]


def _check_pool(dataset: BinaryDataset, pool, x_col: str, y_col: str, config: SearchConfig) -> list[str]:
    pool = list(pool)
    if x_col in pool or y_col in pool:
        raise DataError("the covariate pool must exclude X and Y")
    if len(pool) > config.max_pool:
        raise DataError(f"pool of {len(pool)} covariates exceeds the cap of {config.max_pool}")
    for c in pool + [x_col, y_col]:
        dataset.index(c)
    return pool


def rule1_candidates(dataset: BinaryDataset, pool, x_col: str, y_col: str,
                     config: SearchConfig | None = None) -> list[Candidate]:
    """Pairs passing the BDeu independence screen, in enumeration order."""
    config = config or SearchConfig()
    pool = _check_pool(dataset, pool, x_col, y_col, config)
    jobs = [(dataset, w, z, x_col, y_col, config.ess, i) for i, (w, z) in enumerate(candidate_pairs(pool, config))]
    return [c for c in _run(_screen, jobs, config.workers) if c is not None]


def falsify_candidates(dataset: BinaryDataset, candidates: list[Candidate], x_col: str, y_col: str,
                       aleph: RelaxationParams, config: SearchConfig | None = None) -> list[WitnessResult]:
    """Run the falsification test on screened pairs; survivors sorted by descending score."""
    config = config or SearchConfig()
    jobs = [(dataset, c, x_col, y_col, aleph, config) for c in candidates]
    results = [r for r in _run(_falsify, jobs, config.workers) if r is not None]
    results.sort(key=lambda r: (-r.score, r.witness, r.z_cols))
    return results


def wpp_search(dataset: BinaryDataset, pool, x_col: str, y_col: str, aleph: RelaxationParams,
               config: SearchConfig | None = None) -> list[WitnessResult]:
    """Exhaustive search over witness/admissible-set pairs.

    Pairs passing both the independence screen and the falsification test are
    returned by descending score; ties break on witness name then set.  Each
    pair draws from its own random stream, so results do not depend on the
    number of workers.
    """
    config = config or SearchConfig()
    candidates = rule1_candidates(dataset, pool, x_col, y_col, config)
    return falsify_candidates(dataset, candidates, x_col, y_col, aleph, config)


class SummaryMode(str, Enum):
    UNION = "union"
    MIN_MAX = "min-max-expected"
    QUANTILE = "quantile"
    BEST = "best-score"


def summarize(results: list[WitnessResult], mode: SummaryMode | str = SummaryMode.MIN_MAX,
              alpha: float = 0.05) -> IntervalBound:
    """Collapse the accepted pairs into one interval.

    ``union`` and ``min-max-expected`` both span the extreme expected bounds;
    ``quantile`` takes the ``alpha/2`` quantile of all lower-bound draws and the
    ``1 - alpha/2`` quantile of all upper-bound draws (marginal quantiles, not a
    joint credible region); ``best-score`` reports the top pair alone.
    """
    if not results:
        raise InfeasibleError("no witness/admissible-set pair survived")
    mode = SummaryMode(mode)
    if mode is SummaryMode.BEST:
        best = max(results, key=lambda r: r.score)
        return best.expected
    if mode is SummaryMode.QUANTILE:
        lows = np.concatenate([r.lower for r in results])
        ups = np.concatenate([r.upper for r in results])
        return IntervalBound(float(np.quantile(lows, alpha / 2)), float(np.quantile(ups, 1 - alpha / 2)))
    return IntervalBound(min(r.expected.lower for r in results), max(r.expected.upper for r in results))
