"""Linear programs bounding the ACE within one stratum.

Decision variables, in order: ``eta[x, w]`` (4), ``omega[x, w]`` (4) and
``kappa[y, x, w]`` (8), using ``ETA_INDEX`` / ``ZETA_INDEX`` ordering.  The
polytope rows constrain ``(kappa, omega)``; the beta range ties ``kappa`` to the
observed table and ``eta`` to ``omega``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .errors import InfeasibleError, SolverError
from .params import IntervalBound, RelaxationParams
from .polytope import DIM, ETA_INDEX, ZETA_INDEX, HRep, dual_conversion, eta_polygon_vertices, joint_vertices
from .symbolic import _split, derived_constants

__all__ = [
    "IntervalBound", "LpProblem", "RelaxationParams", "build_lp", "solve_interval",
    "stratified_interval", "stratum_hrep", "lp_stratum_interval",
]

N_ETA = len(ETA_INDEX)
N_KAPPA = len(ZETA_INDEX)
N_VARS = 2 * N_ETA + N_KAPPA
ETA_SL = slice(0, N_ETA)
OMEGA_SL = slice(N_ETA, 2 * N_ETA)
KAPPA_SL = slice(2 * N_ETA, N_VARS)
SNAP_WIDTH = 1e-6
ROW_SLACK = 1e-9


def var_names() -> list[str]:
    return ([f"eta_{x}{w}" for x, w in ETA_INDEX] + [f"omega_{x}{w}" for x, w in ETA_INDEX]
            + [f"kappa_{y}{x}_{w}" for y, x, w in ZETA_INDEX])


@dataclass
class LpProblem:
    A_ub: np.ndarray
    b_ub: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray
    bounds: np.ndarray  # (N_VARS, 2)
    objective: np.ndarray

    def to_lp_text(self, sense: str = "maximize") -> str:
        """Render in CPLEX LP text format."""
        names = var_names()

        def expr(row):
            parts = []
            for c, n in zip(row, names):
                if c != 0:
                    parts.append(f"{'-' if c < 0 else '+'} {abs(c):.17g} {n}")
            return " ".join(parts) if parts else "0 " + names[0]

        lines = ["Maximize" if sense.startswith("max") else "Minimize", f" obj: {expr(self.objective)}",
                 "Subject To"]
        for i, (row, b) in enumerate(zip(self.A_ub, self.b_ub)):
            lines.append(f" c{i}: {expr(row)} <= {b:.17g}")
        for i, (row, b) in enumerate(zip(self.A_eq, self.b_eq)):
            lines.append(f" e{i}: {expr(row)} = {b:.17g}")
        lines.append("Bounds")
        for n, (lo, hi) in zip(names, self.bounds):
            lines.append(f" {lo:.17g} <= {n} <= {hi:.17g}")
        lines.append("End")
        return "\n".join(lines) + "\n"


def _snap(lo, hi):
    """Collapse intervals too thin for the vertex/facet conversion to resolve."""
    thin = (hi - lo) < SNAP_WIDTH
    mid = 0.5 * (lo + hi)
    return np.where(thin, mid, lo), np.where(thin, mid, hi)


def stratum_hrep(joint, aleph: RelaxationParams) -> HRep:
    """Halfspace description of the feasible ``(zeta*, eta*)`` set for one stratum.

    Box widths and ``eps_w`` below ``SNAP_WIDTH`` are treated as zero.
    """
    dc = derived_constants(joint, aleph)
    if np.ndim(dc.Lbar) != 0:
        raise ValueError("stratum_hrep takes a single stratum table")
    ly, uy = _snap(dc.LYU, dc.UYU)
    lx, ux = _snap(dc.LXU[1], dc.UXU[1])
    eps_w = aleph.eps_w if aleph.eps_w >= SNAP_WIDTH else 0.0
    polys = tuple(eta_polygon_vertices(ly[x, 0], uy[x, 0], ly[x, 1], uy[x, 1], eps_w) for x in (0, 1))
    boxes = [(lx[w], ux[w]) for w in (0, 1)]
    return dual_conversion(joint_vertices(polys, boxes))


def build_lp(h: HRep, joint, pw, aleph: RelaxationParams) -> LpProblem:
    if h.A.shape[1] != DIM:
        raise ValueError(f"HRep has dimension {h.A.shape[1]}, expected {DIM}")
    zc, _ = _split(joint)
    pw = np.asarray(pw, dtype=float)

    rows = np.zeros((h.A.shape[0], N_VARS))
    rows[:, KAPPA_SL] = h.A[:, :N_KAPPA]
    rows[:, OMEGA_SL] = h.A[:, N_KAPPA:]
    b = list(h.b)

    # beta_low * omega <= eta <= beta_high * omega
    link = np.zeros((2 * N_ETA, N_VARS))
    for k in range(N_ETA):
        link[k, ETA_SL.start + k] = -1.0
        link[k, OMEGA_SL.start + k] = aleph.beta_low
        link[N_ETA + k, ETA_SL.start + k] = 1.0
        link[N_ETA + k, OMEGA_SL.start + k] = -aleph.beta_high
    A_ub = np.vstack([rows, link])
    b_ub = np.concatenate([b, np.zeros(2 * N_ETA)])

    A_eq = np.zeros((2, N_VARS))
    for k, (y, x, w) in enumerate(ZETA_INDEX):
        A_eq[w, KAPPA_SL.start + k] = 1.0
    b_eq = np.ones(2)

    bounds = np.tile([0.0, 1.0], (N_VARS, 1))
    for k, (y, x, w) in enumerate(ZETA_INDEX):
        if pw[w] > 0:
            z = zc[y, x, w]
            bounds[KAPPA_SL.start + k] = (min(z / aleph.beta_high, 1.0), min(z / aleph.beta_low, 1.0))

    obj = np.zeros(N_VARS)
    for k, (x, w) in enumerate(ETA_INDEX):
        obj[ETA_SL.start + k] = pw[w] * (1.0 if x == 1 else -1.0)
    return LpProblem(A_ub, b_ub, A_eq, b_eq, bounds, obj)


def _optimize(lp: LpProblem, c: np.ndarray) -> float:
    kw = dict(A_ub=lp.A_ub, b_ub=lp.b_ub, A_eq=lp.A_eq, b_eq=lp.b_eq, bounds=lp.bounds, method="highs")
    res = linprog(c, **kw)
    if res.status in (2, 4):
        # presolve can misjudge the highly degenerate problems produced by zero-width boxes
        res = linprog(c, options={"presolve": False}, **kw)
    if res.status in (2, 4):
        # badly scaled facets from thin boxes: accept points within ROW_SLACK of feasibility
        kw["b_ub"] = lp.b_ub + ROW_SLACK
        res = linprog(c, **kw)
    if res.status == 2:
        raise InfeasibleError("LP is infeasible")
    if res.status != 0:
        raise SolverError(f"LP solver failed: {res.message}")
    return float(res.fun)


def solve_interval(lp: LpProblem) -> IntervalBound:
    lower = _optimize(lp, lp.objective)
    upper = -_optimize(lp, -lp.objective)
    return IntervalBound(max(lower, -1.0), min(upper, 1.0))


def lp_stratum_interval(joint, aleph: RelaxationParams) -> IntervalBound:
    """Build the polytope and LP for one stratum table and solve it."""
    _, pw = _split(joint)
    h = stratum_hrep(joint, aleph)
    return solve_interval(build_lp(h, joint, pw, aleph))


def stratified_interval(per_z, pz) -> IntervalBound:
    pz = np.asarray(pz, dtype=float)
    if len(per_z) != len(pz):
        raise ValueError("one bound per stratum required")
    if abs(pz.sum() - 1.0) > 1e-9:
        raise ValueError("stratum weights must sum to 1")
    if any(b is None for b in per_z):
        raise InfeasibleError("a stratum is infeasible")
    lower = float(sum(b.lower * p for b, p in zip(per_z, pz)))
    upper = float(sum(b.upper * p for b, p in zip(per_z, pz)))
    return IntervalBound(lower, upper)


def lp_interval(tables, weights, aleph: RelaxationParams) -> IntervalBound:
    """LP ACE interval for a stratified probability table, weighted by ``P(Z)``."""
    tables = np.asarray(tables, dtype=float)
    return stratified_interval([lp_stratum_interval(t, aleph) for t in tables], weights)
