"""Choosing the relaxation parameters: grid search on interval width and an MH posterior.

The posterior treats the back-door ACEs of other admissible sets as noisy
draws around a point inside the target pair's bounds; widely scattered ACEs
push the sampler towards larger relaxations.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.special import log_ndtr
from scipy.stats import truncnorm

from .engine import Engine
from .errors import DataError, InfeasibleError, PolytopeDegeneracyError, SolverError
from .lp import lp_interval
from .params import IntervalBound, RelaxationParams
from .symbolic import backsub_interval
from .tables import DEFAULT_ESS, BinaryDataset, ContingencyTable, DirichletSpec, empirical_counts, posterior_mean_table

VAR_FLOOR = 1e-8
DEFAULT_K_GRID = (0.05, 0.10, 0.15, 0.20, 0.25, 0.30)
DEFAULT_C_GRID = (0.9, 1.0)


@dataclass(frozen=True)
class AlephSample:
    eps_w: float
    eps_xy: float
    beta: float

    def __post_init__(self):
        for name in ("eps_w", "eps_xy", "beta"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")

    def to_params(self) -> RelaxationParams:
        return RelaxationParams(self.eps_w, self.eps_xy, self.eps_xy, self.beta, 1.0 / self.beta)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.eps_w, self.eps_xy, self.beta)


# ---------------------------------------------------------------------------
# back-door estimates
# ---------------------------------------------------------------------------

def backdoor_ace(pyxz: np.ndarray, z_cols: Sequence[str] = ()) -> float:
    """Back-door ACE ``sum_z [P(Y=1|X=1,z) - P(Y=1|X=0,z)] P(z)`` from ``P(Y, X, Z)`` as ``[z, y, x]``.

    ``z_cols`` only serves to name an offending stratum in errors.
    """
    pyxz = np.asarray(pyxz, dtype=float)
    if pyxz.ndim == 2:
        pyxz = pyxz[None]
    pz = pyxz.sum(axis=(1, 2))
    px = pyxz.sum(axis=1)
    ace = 0.0
    for z in np.flatnonzero(pz > 0):
        if (px[z] <= 0).any():
            bits = format(int(z), f"0{max(len(z_cols), 1)}b") if pyxz.shape[0] > 1 else ""
            label = ", ".join(f"{c}={b}" for c, b in zip(z_cols, bits)) or f"stratum {z}"
            raise DataError(f"P(Y | X, Z) undefined: P(X=x, {label}) = 0")
        ace += pz[z] * (pyxz[z, 1, 1] / px[z, 1] - pyxz[z, 1, 0] / px[z, 0])
    return float(ace)


def table_backdoor_ace(table: ContingencyTable) -> float:
    """Back-door ACE adjusting for Z in a stratified (y, x, w) probability table; W is marginalized."""
    if table.weights is None:
        raise ValueError("table_backdoor_ace needs a probability table")
    pyx = table.values.sum(axis=-1) * np.asarray(table.weights)[:, None, None]
    return backdoor_ace(pyx, table.z_cols)


def posterior_mean_marginal(dataset: BinaryDataset, y_col: str, x_col: str, z_cols,
                            ess: float = DEFAULT_ESS) -> np.ndarray:
    """Posterior-mean ``P(Y, X, Z)`` (as ``[z, y, x]``) under a BDeu prior on the full table.

    Marginalizing the full-table posterior mean spreads ``ess`` uniformly over
    the marginal's cells, so the full table never needs to be built.
    """
    from .tables import stratum_index

    z_cols = list(z_cols)
    zdata = np.stack([dataset.column(c) for c in z_cols], axis=1) if z_cols else np.zeros((dataset.n, 0))
    s = stratum_index(zdata)
    y = dataset.column(y_col).astype(np.int64)
    x = dataset.column(x_col).astype(np.int64)
    n_strata = 2 ** len(z_cols)
    counts = np.bincount((s * 2 + y) * 2 + x, minlength=n_strata * 4).reshape(n_strata, 2, 2).astype(float)
    alpha = ess / counts.size
    return (counts + alpha) / (dataset.n + ess)


def backdoor_ace_from_data(dataset: BinaryDataset, z_cols, x_col: str, y_col: str,
                           ess: float = DEFAULT_ESS) -> float:
    return backdoor_ace(posterior_mean_marginal(dataset, y_col, x_col, z_cols, ess), list(z_cols))


# ---------------------------------------------------------------------------
# grid search
# ---------------------------------------------------------------------------

def pair_mean_table(dataset: BinaryDataset, y_col: str, x_col: str, w_col: str, z_cols,
                    ess: float = DEFAULT_ESS) -> ContingencyTable:
    counts = empirical_counts(dataset, y_col, x_col, w_col, z_cols)
    return posterior_mean_table(counts, DirichletSpec.bdeu(ess, counts.n_strata))


def table_interval(table: ContingencyTable, aleph: RelaxationParams,
                   engine: Engine | str = Engine.BACKSUB) -> IntervalBound:
    if Engine(engine) is Engine.LP:
        return lp_interval(table.values, table.weights, aleph)
    if Engine(engine) is Engine.AUTO:
        try:
            return lp_interval(table.values, table.weights, aleph)
        except (InfeasibleError, SolverError, PolytopeDegeneracyError):
            pass
    return backsub_interval(table.values, table.weights, aleph)


@dataclass(frozen=True)
class GridPoint:
    k_eps: float
    c: float
    interval: IntervalBound | None

    @property
    def width(self) -> float:
        return np.inf if self.interval is None else self.interval.width


def grid_search(table: ContingencyTable, target_length: float, k_grid: Sequence[float] = DEFAULT_K_GRID,
                c_grid: Sequence[float] = DEFAULT_C_GRID, engine: Engine | str = Engine.AUTO) -> list[GridPoint]:
    """Evaluate ``eps = k`` and ``beta in [c, 1/c]`` over the grid, closest width to ``target_length`` first.

    Infeasible grid points carry ``interval=None`` and sort last.
    """
    if not k_grid or not c_grid:
        raise ValueError("grid must be nonempty")
    points = []
    for k in k_grid:
        for c in c_grid:
            try:
                iv = table_interval(table, RelaxationParams.uniform(k, c), engine)
            except InfeasibleError:
                iv = None
            points.append(GridPoint(float(k), float(c), iv))
    return sorted(points, key=lambda p: (abs(p.width - target_length), p.k_eps, -p.c))


# ---------------------------------------------------------------------------
# reference sets and likelihood
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReferenceEntry:
    z_cols: frozenset
    ace: float


def reference_set(pairs, target_z, allow_empty: bool = False) -> list[ReferenceEntry]:
    """Filter admissible sets: drop the empty set (unless allowed), strict supersets, and the target."""
    target = frozenset(target_z)
    entries: dict[frozenset, float] = {}
    for item in pairs:
        z, ace = (item[1], item[2]) if len(item) == 3 else item
        entries.setdefault(frozenset(z), float(ace))
    if not allow_empty:
        entries.pop(frozenset(), None)
    members = set(entries) | {target}
    kept = {z: a for z, a in entries.items() if not any(other < z for other in members)}
    kept.pop(target, None)
    return [ReferenceEntry(z, a) for z, a in sorted(kept.items(), key=lambda t: sorted(t[0]))]


def trunc_normal_logpdf(x, m: float, v: float):
    """Log density of N(m, v) truncated to [-1, 1]; -inf outside the support."""
    if v <= 0:
        raise ValueError("variance must be positive")
    sd = np.sqrt(v)
    a, b = (-1.0 - m) / sd, (1.0 - m) / sd
    if a > 0:  # work in the lower tail, where log_ndtr is accurate
        a, b = -b, -a
    log_mass = log_ndtr(b) + np.log1p(-np.exp(log_ndtr(a) - log_ndtr(b)))
    x = np.asarray(x, dtype=float)
    z = (x - m) / sd
    out = -0.5 * z * z - 0.5 * np.log(2 * np.pi * v) - log_mass
    out = np.where((x < -1.0) | (x > 1.0), -np.inf, out)
    return out if out.ndim else float(out)


def bounds_variance(lb: float, ub: float) -> float:
    return max(((ub - lb) / 6.0) ** 2, VAR_FLOOR)


def aleph_loglik(m: float, bounds: IntervalBound, aces: Sequence[float]) -> float:
    if len(aces) == 0:
        return 0.0
    v = bounds_variance(bounds.lower, bounds.upper)
    return float(np.sum(trunc_normal_logpdf(np.asarray(aces, dtype=float), m, v)))


# ---------------------------------------------------------------------------
# Metropolis-Hastings over (eps_w, eps_xy, beta, m)
# ---------------------------------------------------------------------------

def uniform_prior(_: AlephSample) -> float:
    return 0.0


def trunc_gaussian_prior(means=(0.2, 0.2, 0.95), variances=(0.1, 0.1, 0.05)) -> Callable[[AlephSample], float]:
    """Product of independent Gaussians truncated to [0, 1]."""
    sds = np.sqrt(np.asarray(variances, dtype=float))
    mus = np.asarray(means, dtype=float)
    const = float(np.sum(truncnorm.logpdf(mus, (0.0 - mus) / sds, (1.0 - mus) / sds, loc=mus, scale=sds)))

    def logp(s: AlephSample) -> float:
        z = (np.array(s.as_tuple()) - mus) / sds
        return const - 0.5 * float(z @ z)

    return logp


def _reflect(x: float) -> float:
    """Fold a random-walk proposal back into [0, 1]."""
    x = np.mod(x, 2.0)
    return float(2.0 - x if x > 1.0 else x)


def _fold(i: int, n: int) -> int:
    """Fold a lattice index into ``0..n``.

    Each end point is mirrored onto itself (-1 -> 0, n + 1 -> n), which keeps
    the folded walk symmetric; reflecting through the end points would not.
    """
    i = i % (2 * (n + 1))
    return 2 * n + 1 - i if i > n else i


@dataclass
class ChainState:
    aleph: AlephSample
    m: float
    bounds: IntervalBound
    loglik: float


@dataclass
class AlephChain:
    samples: list[AlephSample]
    m: np.ndarray
    loglik: np.ndarray
    acceptance: dict

    def means(self) -> dict:
        arr = np.array([s.as_tuple() for s in self.samples])
        return {"eps_w": float(arr[:, 0].mean()), "eps_xy": float(arr[:, 1].mean()),
                "beta": float(arr[:, 2].mean()), "m": float(self.m.mean())}

    def to_csv(self, path) -> None:
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "eps_w", "eps_xy", "beta", "m", "loglik"])
            for i, (s, m, ll) in enumerate(zip(self.samples, self.m, self.loglik)):
                w.writerow([i, s.eps_w, s.eps_xy, s.beta, m, ll])


def aleph_mh(target, aces: Sequence[float], iters: int, rng: np.random.Generator, *,
             prior: Callable[[AlephSample], float] = uniform_prior, engine: Engine | str = Engine.BACKSUB,
             step: float = 0.05, resolution: float = 0.005, burn_in: int | None = None,
             init: AlephSample | None = None) -> AlephChain:
    """Component-wise MH over the relaxation parameters and the location ``m``.

    ``target`` is the target pair's posterior-mean table (or any callable
    mapping an AlephSample to its IntervalBound, None when infeasible) and
    ``aces`` the reference back-door estimates.  Each sweep updates eps_w, eps_xy and beta
    by reflected Gaussian random walks (recomputing the target bounds), then
    draws a new ``m`` from its uniform prior on the current bounds and accepts
    it on the likelihood ratio.  A proposal whose bounds are infeasible or
    exclude the current ``m`` is rejected.

    Relaxation values live on a lattice of spacing ``resolution`` (increments
    are rounded and the walk is folded at the ends, which keeps the proposal
    symmetric) so that bounds can be cached; ``resolution=0`` disables the lattice.
    """
    if iters < 1:
        raise ValueError("iters must be at least 1")
    if resolution < 0 or (resolution > 0 and abs(1 / resolution - round(1 / resolution)) > 1e-9):
        raise ValueError("resolution must divide 1")

    def snap(v: float) -> float:
        return round(v / resolution) * resolution if resolution > 0 else v

    n_cells = round(1 / resolution) if resolution > 0 else 0

    def walk(v: float) -> float:
        if resolution == 0:
            return _reflect(v + step * rng.standard_normal())
        i = round(v / resolution) + round(step * rng.standard_normal() / resolution)
        return _fold(i, n_cells) * resolution

    aces = list(aces)
    burn_in = iters // 5 if burn_in is None else burn_in
    cache: dict[tuple, IntervalBound | None] = {}

    def evaluate(s: AlephSample):
        if callable(target):
            return target(s)
        try:
            return table_interval(target, s.to_params(), engine)
        except (InfeasibleError, SolverError, PolytopeDegeneracyError):
            return None

    def bounds_of(s: AlephSample):
        key = s.as_tuple()
        if key not in cache:
            cache[key] = evaluate(s)
        return cache[key]

    def log_target(s: AlephSample, m: float, b: IntervalBound) -> tuple[float, float]:
        ll = aleph_loglik(m, b, aces)
        width = max(b.width, np.sqrt(VAR_FLOOR))
        return prior(s) - np.log(width) + ll, ll

    cur = init or AlephSample(0.5, 0.5, 0.5)
    cur = AlephSample(*(snap(v) for v in cur.as_tuple()))
    b = bounds_of(cur)
    if b is None:
        cur = AlephSample(1.0, 1.0, 1.0)
        b = bounds_of(cur)
        if b is None:
            raise InfeasibleError("target pair is infeasible even under vacuous relaxation")
    m = float(rng.uniform(b.lower, b.upper))
    lt, ll = log_target(cur, m, b)

    names = ("eps_w", "eps_xy", "beta", "m")
    accepted = dict.fromkeys(names, 0)
    samples, ms, lls = [], [], []
    for it in range(iters):
        for k in range(3):
            vals = list(cur.as_tuple())
            vals[k] = min(max(walk(vals[k]), 0.0), 1.0)
            if k == 2 and vals[2] <= 0.0:
                continue
            prop = AlephSample(*vals)
            pb = bounds_of(prop)
            if pb is None or not (pb.lower <= m <= pb.upper):
                continue
            plt, pll = log_target(prop, m, pb)
            if np.log(rng.uniform()) < plt - lt:
                cur, b, lt, ll = prop, pb, plt, pll
                accepted[names[k]] += 1
        # independence proposal for m from its uniform prior on the current bounds
        pm = float(rng.uniform(b.lower, b.upper))
        pll = aleph_loglik(pm, b, aces)
        if np.log(rng.uniform()) < pll - ll:
            lt += pll - ll
            m, ll = pm, pll
            accepted["m"] += 1
        if it >= burn_in:
            samples.append(cur)
            ms.append(m)
            lls.append(ll)
    rates = {k: v / iters for k, v in accepted.items()}
    return AlephChain(samples, np.array(ms), np.array(lls), rates)
