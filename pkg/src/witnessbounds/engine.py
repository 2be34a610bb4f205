"""Dispatch between the LP and back-substitution bounding engines.

Inputs are stratified probability tables with a leading sample axis:
``tables[s, z, y, x, w]`` and ``weights[s, z]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import InfeasibleError, PolytopeDegeneracyError, SolverError
from .lp import lp_stratum_interval
from .params import IntervalBound, RelaxationParams
from .symbolic import stratum_backsub_interval


class Engine(str, Enum):
    LP = "lp"
    BACKSUB = "backsub"
    AUTO = "auto"


@dataclass
class SampleBounds:
    """Per-draw stratified ACE bounds; ``status`` is 0 ok, 1 infeasible, 2 engine failure."""

    lower: np.ndarray
    upper: np.ndarray
    status: np.ndarray

    @property
    def feasible(self) -> np.ndarray:
        return self.status == 0


def backsub_samples(tables, weights, aleph: RelaxationParams, max_iters: int = 4) -> SampleBounds:
    lo, up, ok = stratum_backsub_interval(tables, aleph, max_iters)
    feas = ok.all(axis=-1)
    lower = (weights * lo).sum(axis=-1)
    upper = (weights * up).sum(axis=-1)
    return SampleBounds(lower, upper, np.where(feas, 0, 1))


def lp_table_interval(tables, weights, aleph: RelaxationParams) -> IntervalBound:
    """LP bound for one stratified table; raises InfeasibleError if any stratum is."""
    lower = upper = 0.0
    for t, p in zip(tables, weights):
        iv = lp_stratum_interval(t, aleph)
        lower += p * iv.lower
        upper += p * iv.upper
    return IntervalBound(float(lower), float(upper))


def lp_samples(tables, weights, aleph: RelaxationParams) -> SampleBounds:
    n = tables.shape[0]
    lower = np.full(n, np.nan)
    upper = np.full(n, np.nan)
    status = np.zeros(n, dtype=int)
    for s in range(n):
        try:
            iv = lp_table_interval(tables[s], weights[s], aleph)
        except InfeasibleError:
            status[s] = 1
            continue
        except (SolverError, PolytopeDegeneracyError):
            status[s] = 2
            continue
        lower[s], upper[s] = iv.lower, iv.upper
    return SampleBounds(lower, upper, status)


def sample_bounds(tables, weights, aleph: RelaxationParams, engine: Engine | str = Engine.BACKSUB,
                  max_iters: int = 4) -> SampleBounds:
    engine = Engine(engine)
    tables = np.asarray(tables, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if engine is Engine.LP:
        return lp_samples(tables, weights, aleph)
    return backsub_samples(tables, weights, aleph, max_iters)


def expected_interval(tables, weights, bounds: SampleBounds, aleph: RelaxationParams,
                      engine: Engine | str = Engine.BACKSUB) -> tuple[IntervalBound, str]:
    """Point summary of accepted draws and the method that produced it.

    ``auto`` solves the LP on the mean of the accepted tables and falls back to
    the averaged back-substitution bounds when that mean is outside the LP's
    feasible region.
    """
    engine = Engine(engine)
    ok = bounds.feasible
    if not ok.any():
        raise InfeasibleError("no accepted samples")
    averaged = IntervalBound(float(bounds.lower[ok].mean()), float(bounds.upper[ok].mean()))
    if engine is not Engine.AUTO:
        return averaged, engine.value
    mean_tables = np.asarray(tables)[ok].mean(axis=0)
    mean_weights = np.asarray(weights)[ok].mean(axis=0)
    try:
        return lp_table_interval(mean_tables, mean_weights, aleph), "lp-mean"
    except (InfeasibleError, SolverError, PolytopeDegeneracyError):
        return averaged, "backsub"
