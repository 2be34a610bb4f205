"""Simulation harness: random causal models with known ACE, naive and faithfulness estimators, error metrics.

Models are binary DAGs over observed covariates ``Z1..Z8``, treatment ``X``,
outcome ``Y`` and hidden ``L1..L4``.  ``Z5..Z8`` are children of all four
hidden variables, so adjusting for every covariate opens collider paths
between ``X`` and ``Y``.
"""

from __future__ import annotations

import itertools
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import networkx as nx
import numpy as np

from .engine import Engine
from .errors import GenerationError, WitnessBoundsError
from .params import IntervalBound, RelaxationParams
from .relaxation import backdoor_ace
from .tables import DEFAULT_ESS, BinaryDataset, empirical_counts
from .witness import SearchConfig, falsify_candidates, falsification_test, rule1_candidates

log = logging.getLogger(__name__)

FRONT = ("Z1", "Z2", "Z3", "Z4")
BACK = ("Z5", "Z6", "Z7", "Z8")
LATENT = ("L1", "L2", "L3", "L4")
COVARIATES = FRONT + BACK
ORDER = FRONT + LATENT + BACK + ("X", "Y")
P_LOW, P_HIGH = 0.025, 0.975
TAIL = 0.1


@dataclass(frozen=True)
class ModelConfig:
    solvable: bool = True
    hard: bool = True
    weight_scale: float = 20.0
    edge_prob: float = 0.5
    min_bias: float = 0.1
    max_attempts: int = 10_000


@dataclass
class PopulationTable:
    """Exact joint distribution over named binary variables (axis ``i`` is ``names[i]``)."""

    names: tuple[str, ...]
    probs: np.ndarray

    def marginal(self, cols: Sequence[str]) -> np.ndarray:
        cols = list(cols)
        idx = [self.names.index(c) for c in cols]
        drop = tuple(i for i in range(len(self.names)) if i not in idx)
        m = self.probs.sum(axis=drop) if drop else self.probs
        kept = [i for i in range(len(self.names)) if i in idx]
        return np.transpose(m, [kept.index(i) for i in idx])

    def backdoor_ace(self, z_cols, x_col: str = "X", y_col: str = "Y") -> float:
        z_cols = list(z_cols)
        pyxz = self.marginal(z_cols + [y_col, x_col]).reshape(-1, 2, 2)
        return backdoor_ace(pyxz, z_cols)


def structure_graph(parents: dict[str, tuple[str, ...]]) -> nx.DiGraph:
    g = nx.DiGraph()
    g.add_nodes_from(parents)
    g.add_edges_from((p, v) for v, ps in parents.items() for p in ps)
    return g


@dataclass
class SyntheticModel:
    parents: dict[str, tuple[str, ...]]
    cpts: dict[str, np.ndarray]  # P(v = 1 | parent configuration), binary order, first parent most significant
    solvable: bool
    hard: bool
    names: tuple[str, ...] = ORDER
    latent: tuple[str, ...] = LATENT

    @property
    def observed(self) -> tuple[str, ...]:
        return tuple(n for n in self.names if n not in self.latent)

    def graph(self) -> nx.DiGraph:
        return structure_graph(self.parents)

    def _config_index(self, values: dict[str, np.ndarray], v: str) -> np.ndarray:
        idx = np.zeros_like(next(iter(values.values())), dtype=np.int64) if values else np.zeros(1, dtype=np.int64)
        for p in self.parents[v]:
            idx = idx * 2 + values[p]
        return idx

    def joint(self, intervention: dict[str, int] | None = None) -> np.ndarray:
        """Full joint over ``names`` by enumeration; intervened vertices get point-mass mechanisms."""
        intervention = intervention or {}
        n = len(self.names)
        grid = (np.arange(2 ** n)[:, None] >> np.arange(n - 1, -1, -1)) & 1
        values = {v: grid[:, i] for i, v in enumerate(self.names)}
        prob = np.ones(2 ** n)
        for v in self.names:
            if v in intervention:
                prob *= values[v] == intervention[v]
                continue
            p1 = self.cpts[v][self._config_index(values, v)]
            prob *= np.where(values[v] == 1, p1, 1.0 - p1)
        return prob.reshape((2,) * n)

    def population(self) -> PopulationTable:
        drop = tuple(i for i, v in enumerate(self.names) if v in self.latent)
        return PopulationTable(self.observed, self.joint().sum(axis=drop))

    def sample(self, n: int, rng: np.random.Generator,
               intervention: dict[str, int] | None = None) -> BinaryDataset:
        """Ancestral sampling; only observed columns are emitted."""
        intervention = intervention or {}
        values: dict[str, np.ndarray] = {}
        for v in self.names:
            if v in intervention:
                values[v] = np.full(n, intervention[v], dtype=np.int64)
                continue
            p1 = self.cpts[v][self._config_index(values, v)] if self.parents[v] else np.full(n, self.cpts[v][0])
            values[v] = (rng.random(n) < p1).astype(np.int64)
        cols = self.observed
        return BinaryDataset(list(cols), np.stack([values[c] for c in cols], axis=1))


def exact_ace(model: SyntheticModel, x_col: str = "X", y_col: str = "Y") -> float:
    """``P(Y=1 | do(X=1)) - P(Y=1 | do(X=0))`` by truncated factorization."""
    yi = model.names.index(y_col)

    def py1(x):
        j = model.joint({x_col: x})
        return float(np.take(j, 1, axis=yi).sum())

    return py1(1) - py1(0)


# ---------------------------------------------------------------------------
# generation
# ---------------------------------------------------------------------------

def squash(p: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Resample extreme probabilities into [0.950, 0.975] or [0.025, 0.050]."""
    p = np.array(p, dtype=float)
    hi, lo = p > P_HIGH, p < P_LOW
    p[hi] = rng.uniform(0.950, P_HIGH, hi.sum())
    p[lo] = rng.uniform(P_LOW, 0.050, lo.sum())
    return p


def logistic_cpt(k: int, rng: np.random.Generator, scale: float = 20.0) -> np.ndarray:
    """P(v=1 | parents) from a logistic model with all pairwise parent interactions.

    Weights (intercept included) are Normal(0, (scale / k)^2).  A root's
    probability is drawn uniformly on (0, 1) instead.
    """
    if k == 0:
        return squash(rng.uniform(0.0, 1.0, 1), rng)
    configs = np.array(list(itertools.product((0, 1), repeat=k)), dtype=float).reshape(2 ** k, k)
    pairs = list(itertools.combinations(range(k), 2))
    feats = np.hstack([np.ones((2 ** k, 1)), configs,
                       np.array([[c[i] * c[j] for i, j in pairs] for c in configs]).reshape(2 ** k, len(pairs))])
    w = rng.normal(0.0, scale / k, feats.shape[1])
    return squash(1.0 / (1.0 + np.exp(-(feats @ w))), rng)


def random_structure(cfg: ModelConfig, rng: np.random.Generator) -> dict[str, tuple[str, ...]]:
    order = FRONT + ("X", "Y")
    parents: dict[str, list[str]] = {v: [] for v in ORDER}
    for i, j in itertools.combinations(range(len(order)), 2):
        a, b = order[i], order[j]
        if (a, b) == ("X", "Y") or rng.random() < cfg.edge_prob:
            parents[b].append(a)
    for z in BACK:
        parents[z] = list(LATENT)
    parents["X"].append("L1")
    parents["Y"].append("L2")
    for l in ("L3", "L4"):
        if cfg.solvable:
            parents["X" if rng.random() < 0.5 else "Y"].append(l)
    if not cfg.solvable:
        for l in LATENT:
            for t in ("X", "Y"):
                if l not in parents[t]:
                    parents[t].append(l)
    rank = {v: i for i, v in enumerate(ORDER)}
    return {v: tuple(sorted(ps, key=rank.__getitem__)) for v, ps in parents.items()}


def rule1_pairs_population(graph: nx.DiGraph, pool=COVARIATES, x_col: str = "X", y_col: str = "Y",
                           max_set_size: int = 3, first_only: bool = False) -> list[tuple[str, tuple[str, ...]]]:
    """Pairs whose independence premises hold by d-separation in ``graph``."""
    found = []
    for w in pool:
        rest = [c for c in pool if c != w]
        for k in range(max_set_size + 1):
            for z in itertools.combinations(rest, k):
                zs = set(z)
                if nx.is_d_separator(graph, {w}, {y_col}, zs):
                    continue
                if nx.is_d_separator(graph, {w}, {y_col}, zs | {x_col}):
                    found.append((w, z))
                    if first_only:
                        return found
    return found


def naive_estimators(pv: PopulationTable, x_col: str = "X", y_col: str = "Y",
                     covariates: Sequence[str] | None = None) -> tuple[float, float]:
    """(adjust for every covariate, adjust for nothing)."""
    covariates = [c for c in pv.names if c not in (x_col, y_col)] if covariates is None else list(covariates)
    return pv.backdoor_ace(covariates, x_col, y_col), pv.backdoor_ace([], x_col, y_col)


def generate_model(cfg: ModelConfig, rng: np.random.Generator) -> SyntheticModel:
    """Draw a model; solvable models are redrawn until a witness pair exists, hard ones until NE1 is biased."""
    for _ in range(cfg.max_attempts):
        parents = random_structure(cfg, rng)
        cpts = {v: logistic_cpt(len(parents[v]), rng, cfg.weight_scale) for v in ORDER}
        model = SyntheticModel(parents, cpts, cfg.solvable, cfg.hard)
        if cfg.hard:
            ne1, _ = naive_estimators(model.population())
            if abs(ne1 - exact_ace(model)) < cfg.min_bias:
                continue
        if cfg.solvable and not rule1_pairs_population(model.graph(), first_only=True):
            continue
        return model
    raise GenerationError(f"no model met the conditions within {cfg.max_attempts} attempts")


# ---------------------------------------------------------------------------
# estimators and errors
# ---------------------------------------------------------------------------

def faithfulness_estimator(pv: PopulationTable, admissible_sets, x_col: str = "X", y_col: str = "Y") -> float:
    sets = [list(z) for z in admissible_sets]
    if not sets:
        raise ValueError("at least one admissible set is required")
    return float(np.mean([pv.backdoor_ace(z, x_col, y_col) for z in sets]))


def interval_error(truth: float, estimate) -> tuple[float, bool]:
    """Distance from ``truth`` to the closest point of a point or interval estimate, and whether it exceeds 0.1."""
    if isinstance(estimate, IntervalBound):
        lo, hi = estimate.lower, estimate.upper
    elif np.ndim(estimate) == 0:
        lo = hi = float(estimate)
    else:
        lo, hi = (float(v) for v in estimate)
    err = max(lo - truth, truth - hi, 0.0)
    return float(err), bool(err > TAIL)


# ---------------------------------------------------------------------------
# study driver
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StudyConfig:
    solvable: bool = True
    hard: bool = True
    n_datasets: int = 100
    n_points: int = 5000
    k_eps: tuple[float, ...] = (0.05, 0.10, 0.15, 0.20, 0.25, 0.30)
    betas: tuple[tuple[float, float], ...] = ((1.0, 1.0), (0.9, 1.1))
    mc_samples: int = 1000
    seed: int = 0
    max_set_size: int = 3
    ess: float = DEFAULT_ESS
    workers: int = 1
    refine: bool = True  # LP refinement of the reported pair on the posterior-mean table

    @property
    def case(self) -> str:
        return f"{'Hard' if self.hard else 'Easy'}, {'Solvable' if self.solvable else 'Not Solvable'}"


@dataclass
class DatasetOutcome:
    index: int
    truth: float
    ne1: float
    ne2: float
    # keyed by (k_eps, beta_low, beta_high)
    found: dict = field(default_factory=dict)
    wpp: dict = field(default_factory=dict)  # IntervalBound of the best-score pair
    faith: dict = field(default_factory=dict)  # faithfulness point estimate


def _run_dataset(args) -> DatasetOutcome:
    cfg, i = args
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, i]))
    model = generate_model(ModelConfig(solvable=cfg.solvable, hard=cfg.hard), rng)
    data = model.sample(cfg.n_points, rng)
    pv = model.population()
    truth = exact_ace(model)
    ne1, ne2 = naive_estimators(pv)
    out = DatasetOutcome(i, truth, ne1, ne2)

    search = SearchConfig(max_set_size=cfg.max_set_size, n_samples=cfg.mc_samples, engine=Engine.BACKSUB,
                          ess=cfg.ess, seed=int(rng.integers(2 ** 31)))
    cands = rule1_candidates(data, COVARIATES, "X", "Y", search)
    by_index = {c.index: c for c in cands}
    for k in cfg.k_eps:
        for bl, bh in cfg.betas:
            key = (k, bl, bh)
            aleph = RelaxationParams(k, k, k, bl, bh)
            results = falsify_candidates(data, cands, "X", "Y", aleph, search)
            out.found[key] = bool(results)
            if not results:
                continue
            best = results[0]
            interval = best.expected
            if cfg.refine:
                cand = next(c for c in by_index.values() if c.witness == best.witness and c.z_cols == best.z_cols)
                counts = empirical_counts(data, "Y", "X", cand.witness, cand.z_cols)
                rng_c = np.random.default_rng(np.random.SeedSequence([search.seed, cand.index]))
                fr = falsification_test(counts, aleph, cfg.mc_samples, rng_c, engine=Engine.AUTO,
                                        prior=search.prior(counts.n_strata))
                if fr.expected is not None:
                    interval = fr.expected
            out.wpp[key] = interval
            out.faith[key] = faithfulness_estimator(pv, [r.z_cols for r in results])
    return out


def _safe_run(args):
    try:
        return _run_dataset(args)
    except WitnessBoundsError as exc:
        return f"dataset {args[1]}: {type(exc).__name__}: {exc}"


@dataclass
class StudyRow:
    k_eps: float
    beta_low: float
    beta_high: float
    found_rate: float
    faith: tuple[float, float]
    wpp: tuple[float, float]
    median_width: float


@dataclass
class StudyReport:
    config: dict
    n_completed: int
    failures: list[str]
    ne1: tuple[float, float]
    ne2: tuple[float, float]
    rows: list[StudyRow]

    def row(self, k_eps: float, beta_low: float = 1.0) -> StudyRow:
        return next(r for r in self.rows if np.isclose(r.k_eps, k_eps) and np.isclose(r.beta_low, beta_low))

    def to_dict(self) -> dict:
        return {"config": self.config, "n_completed": self.n_completed, "failures": self.failures,
                "ne1": list(self.ne1), "ne2": list(self.ne2), "rows": [asdict(r) for r in self.rows]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_text(self) -> str:
        def pair(p):
            return f"({p[0]:.2f}, {p[1]:.2f})"

        betas = sorted({(r.beta_low, r.beta_high) for r in self.rows}, key=lambda b: -b[0])
        head = f"{self.config.get('case', '')}: NE1 = {pair(self.ne1)}, NE2 = {pair(self.ne2)}"
        cols = ["k_eps", "Found", "Faith.1"]
        for j, _ in enumerate(betas, 1):
            cols += [f"WPP{j}", f"Width{j}"]
        lines = [head, "  ".join(f"{c:>12}" for c in cols)]
        for k in sorted({r.k_eps for r in self.rows}):
            first = self.row(k, betas[0][0])
            cells = [f"{k:.2f}", f"{first.found_rate:.2f}", pair(first.faith)]
            for bl, _ in betas:
                r = self.row(k, bl)
                cells += [pair(r.wpp), f"{r.median_width:.2f}"]
            lines.append("  ".join(f"{c:>12}" for c in cells))
        return "\n".join(lines)


def _summary(errors: list[tuple[float, bool]]) -> tuple[float, float]:
    if not errors:
        return (float("nan"), float("nan"))
    e = np.array([x for x, _ in errors])
    return float(e.mean()), float(np.mean([t for _, t in errors]))


def run_study(cfg: StudyConfig) -> StudyReport:
    jobs = [(cfg, i) for i in range(cfg.n_datasets)]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            done = list(ex.map(_safe_run, jobs))
    else:
        done = [_safe_run(j) for j in jobs]
    outcomes = [d for d in done if isinstance(d, DatasetOutcome)]
    failures = [d for d in done if isinstance(d, str)]
    for f in failures:
        log.warning(f)

    ne1 = _summary([interval_error(o.truth, o.ne1) for o in outcomes])
    ne2 = _summary([interval_error(o.truth, o.ne2) for o in outcomes])
    rows = []
    for k in cfg.k_eps:
        for bl, bh in cfg.betas:
            key = (k, bl, bh)
            hits = [o for o in outcomes if o.found.get(key)]
            widths = [o.wpp[key].width for o in hits]
            rows.append(StudyRow(
                k_eps=k, beta_low=bl, beta_high=bh,
                found_rate=len(hits) / len(outcomes) if outcomes else float("nan"),
                faith=_summary([interval_error(o.truth, o.faith[key]) for o in hits]),
                wpp=_summary([interval_error(o.truth, o.wpp[key]) for o in hits]),
                median_width=float(np.median(widths)) if widths else float("nan"),
            ))
    config = {**asdict(cfg), "case": cfg.case}
    return StudyReport(config, len(outcomes), failures, ne1, ne2, rows)
