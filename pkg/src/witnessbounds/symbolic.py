"""Closed-form bounds on the latent-averaged treatment probabilities.

Everything here works on a single stratum table ``joint[..., y, x, w]`` holding
``P(Y=y, X=x, W=w | z)``; any leading axes are treated as a batch (typically
posterior draws) and all operations are vectorized over them.

The unknowns are ``omega[x, w]``: the ``P(U)``-weighted average of
``P(Y=1 | X=x, W=w, U)``.  The observable side enters through ``kappa``, the
``P(U)``-weighted joint ``P(Y, X | W, U)``, which is only known to lie in an
interval determined by the beta range.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleError
from .params import IntervalBound, RelaxationParams

INFEAS_TOL = 1e-10


@dataclass
class DerivedConstants:
    """Interval constants built from the observed table and the relaxation.

    Arrays are indexed ``[..., x, w]`` (``LYU``, ``UYU``, ``LXU``, ``UXU``) or
    ``[...]`` (``Lbar``, ``Ubar``).  ``vacuous[..., x, w]`` flags cells whose
    conditioning event has zero probability; those fall back to ``[0, 1]``.
    """

    LYU: np.ndarray
    UYU: np.ndarray
    LXU: np.ndarray
    UXU: np.ndarray
    Lbar: np.ndarray
    Ubar: np.ndarray
    vacuous: np.ndarray


@dataclass
class KappaIntervals:
    lo: np.ndarray  # [..., y, x, w]
    hi: np.ndarray

    def chi(self) -> tuple[np.ndarray, np.ndarray]:
        """Interval for ``kappa_{0x.w} + kappa_{1x.w}``, indexed ``[..., x, w]``."""
        return self.lo.sum(axis=-3), self.hi.sum(axis=-3)


@dataclass
class BoxBounds:
    """Per-cell bounds on ``omega[x, w]`` plus bounds on ``omega[x,1] - omega[x,0]``."""

    lo: np.ndarray  # [..., x, w]
    up: np.ndarray
    dlo: np.ndarray = field(default=None)  # [..., x]
    dup: np.ndarray = field(default=None)
    iterations: int = 0
    trace: list = field(default_factory=list)

    def feasible(self, tol: float = INFEAS_TOL) -> np.ndarray:
        ok = (self.lo <= self.up + tol).all(axis=(-2, -1))
        if self.dlo is not None:
            ok &= (self.dlo <= self.dup + tol).all(axis=-1)
        return ok

    def trace_json(self) -> str:
        return json.dumps(self.trace, indent=1)


def _split(joint):
    joint = np.asarray(joint, dtype=float)
    if joint.shape[-3:] != (2, 2, 2):
        raise ValueError(f"stratum table must end in (2, 2, 2), got {joint.shape}")
    pw = joint.sum(axis=(-3, -2))
    safe = np.where(pw > 0, pw, 1.0)
    zc = joint / safe[..., None, None, :]
    return zc, pw


def derived_constants(joint, aleph: RelaxationParams) -> DerivedConstants:
    zc, pw = _split(joint)
    pxw = zc.sum(axis=-3)  # P(X=x | w), [..., x, w]
    has_xw = pxw > 0
    py = np.where(has_xw, zc[..., 1, :, :] / np.where(has_xw, pxw, 1.0), 0.5)
    LYU = np.where(has_xw, np.maximum(py - aleph.eps_y, 0.0), 0.0)
    UYU = np.where(has_xw, np.minimum(py + aleph.eps_y, 1.0), 1.0)

    has_w = pw > 0
    px1 = pxw[..., 1, :]
    lw = np.where(has_w, np.maximum(px1 - aleph.eps_x, 0.0), 0.0)
    uw = np.where(has_w, np.minimum(px1 + aleph.eps_x, 1.0), 1.0)
    LXU = np.stack([1.0 - uw, lw], axis=-2)
    UXU = np.stack([1.0 - lw, uw], axis=-2)

    vac = ~has_xw
    return DerivedConstants(
        LYU=LYU, UYU=UYU, LXU=LXU, UXU=UXU,
        Lbar=LYU.min(axis=(-2, -1)), Ubar=UYU.max(axis=(-2, -1)),
        vacuous=vac,
    )


def kappa_intervals(joint, aleph: RelaxationParams) -> KappaIntervals:
    zc, pw = _split(joint)
    lo = np.clip(zc / aleph.beta_high, 0.0, 1.0)
    hi = np.minimum(zc / aleph.beta_low, 1.0)
    missing = (pw <= 0)[..., None, None, :]
    lo = np.where(missing, 0.0, lo)
    hi = np.where(missing, 1.0, hi)
    return KappaIntervals(lo, hi)


class _Lin:
    """Affine form in the kappa cells, evaluated at interval extremes."""

    __slots__ = ("terms", "const")

    def __init__(self, terms=None, const=0.0):
        self.terms = dict(terms or {})
        self.const = const

    @classmethod
    def k(cls, y, x, w):
        return cls({(y, x, w): 1.0})

    @classmethod
    def chi(cls, x, w):
        return cls({(0, x, w): 1.0, (1, x, w): 1.0})

    def __add__(self, other):
        if not isinstance(other, _Lin):
            return _Lin(self.terms, self.const + other)
        terms = dict(self.terms)
        for key, c in other.terms.items():
            terms[key] = terms[key] + c if key in terms else c
        return _Lin(terms, self.const + other.const)

    __radd__ = __add__

    def __neg__(self):
        return _Lin({k: -c for k, c in self.terms.items()}, -self.const)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, s):
        return _Lin({k: c * s for k, c in self.terms.items()}, self.const * s)

    __rmul__ = __mul__

    def _eval(self, kap: KappaIntervals, upper: bool):
        out = self.const
        for (y, x, w), c in self.terms.items():
            lo, hi = kap.lo[..., y, x, w], kap.hi[..., y, x, w]
            pos = c >= 0
            pick = np.where(pos, hi, lo) if upper else np.where(pos, lo, hi)
            out = out + c * pick
        return out

    def hi(self, kap):
        return self._eval(kap, True)

    def lo(self, kap):
        return self._eval(kap, False)


def _div(num, den, fallback):
    """``num / den`` where ``den > 0``; ``fallback`` (an infinity) otherwise."""
    return np.where(den > 0, num / np.where(den > 0, den, 1.0), fallback)


def _cell(arr, x, w):
    return arr[..., x, w]


def theorem_box(joint, aleph: RelaxationParams, *, trace: bool = False) -> BoxBounds:
    """Initial per-cell bounds from the single-cell inequalities, clipped to [0, 1]."""
    dc = derived_constants(joint, aleph)
    kap = kappa_intervals(joint, aleph)
    eps = aleph.eps_w
    K, C = _Lin.k, _Lin.chi
    batch = np.shape(dc.Lbar)
    lo = np.zeros(batch + (2, 2))
    up = np.ones(batch + (2, 2))
    steps = []
    for x in (0, 1):
        xp = 1 - x
        for w in (0, 1):
            wp = 1 - w
            L, U = _cell(dc.LXU, x, w), _cell(dc.UXU, x, w)
            Lp, Up = _cell(dc.LXU, x, wp), _cell(dc.UXU, x, wp)
            Lb, Ub = dc.Lbar, dc.Ubar
            uppers = {
                "yu_upper": (K(1, x, w) + C(xp, w) * _cell(dc.UYU, x, w)).hi(kap),
                "xu_ratio_y1": _div(K(1, x, w).hi(kap), L, np.inf),
                "xu_ratio_y0": np.where(U > 0, 1.0 - _div(K(0, x, w).lo(kap), U, 0.0), np.inf),
                "w_shift_y1": _div((K(1, x, wp) + eps * C(x, wp)).hi(kap), Lp, np.inf),
                "w_shift_y0": np.where(Up > 0, 1.0 - _div((K(0, x, wp) - eps * C(x, wp)).lo(kap), Up, 0.0), np.inf),
                "pair_a": (K(1, xp, wp) + K(1, x, wp) + K(1, x, w) - K(1, xp, w)
                           + C(xp, w) * (Ub + Lb + 2 * eps) - Lb).hi(kap),
                "pair_b": (K(1, xp, w) + K(1, x, w) + K(1, x, wp) - K(1, xp, wp)
                           + C(xp, w) * (2 * eps) + C(xp, wp) * (Ub + Lb) - Lb).hi(kap),
            }
            lowers = {
                "yu_lower": (K(1, x, w) + C(xp, w) * _cell(dc.LYU, x, w)).lo(kap),
                "xu_ratio_y1": _div(K(1, x, w).lo(kap), U, -np.inf),
                "xu_ratio_y0": np.where(L > 0, 1.0 - _div(K(0, x, w).hi(kap), L, 0.0), -np.inf),
                "w_shift_y1": _div((K(1, x, wp) - eps * C(x, wp)).lo(kap), Up, -np.inf),
                "w_shift_y0": np.where(Lp > 0, 1.0 - _div((K(0, x, wp) + eps * C(x, wp)).hi(kap), Lp, 0.0), -np.inf),
                "pair_a": (-K(1, xp, wp) + K(1, x, wp) + K(1, xp, w) + K(1, x, w)
                           + C(xp, wp) * (Ub + Lb) - C(xp, w) * (2 * eps) - Ub).lo(kap),
                "pair_b": (-K(1, xp, w) + K(1, x, w) + K(1, xp, wp) + K(1, x, wp)
                           - C(xp, w) * (2 * eps - Ub - Lb) - Ub).lo(kap),
            }
            u_names, u_vals = zip(*uppers.items())
            l_names, l_vals = zip(*lowers.items())
            u_stack = np.stack(np.broadcast_arrays(*u_vals), axis=-1)
            l_stack = np.stack(np.broadcast_arrays(*l_vals), axis=-1)
            up[..., x, w] = np.clip(u_stack.min(axis=-1), 0.0, 1.0)
            lo[..., x, w] = np.clip(l_stack.max(axis=-1), 0.0, 1.0)
            if trace:
                steps.append({
                    "cell": [x, w],
                    "upper_binding": _binding(u_names, u_stack, np.argmin),
                    "lower_binding": _binding(l_names, l_stack, np.argmax),
                })
    box = BoxBounds(lo, up)
    if trace:
        box.trace.append({"stage": "initial", "cells": steps})
    return box


def _binding(names, stack, argf):
    idx = argf(stack.reshape(-1, stack.shape[-1]), axis=-1)
    return [names[i] for i in idx.tolist()] if idx.size > 1 else names[int(idx[0])]


def _diff_ref(dlo, dup, x, w):
    """Bounds on ``omega[x, w] - omega[x, 1-w]`` from the stored ``w=1 minus w=0`` difference."""
    if w == 1:
        return dlo[..., x], dup[..., x]
    return -dup[..., x], -dlo[..., x]


def _set_diff(dlo, dup, x, w, new_lo, new_up):
    if w == 1:
        dlo[..., x] = np.maximum(dlo[..., x], new_lo)
        dup[..., x] = np.minimum(dup[..., x], new_up)
    else:
        dlo[..., x] = np.maximum(dlo[..., x], -new_up)
        dup[..., x] = np.minimum(dup[..., x], -new_lo)


def back_substitution(joint, aleph: RelaxationParams, max_iters: int = 4, *,
                      trace: bool = False) -> BoxBounds:
    """Refine the initial box using the two- and three-cell inequalities.

    Each pass tightens cell bounds through the same-treatment cross-instrument
    relations, refreshes bounds on ``omega[x,1] - omega[x,0]``, then feeds those
    differences into the three-cell relations.  Updates only ever shrink
    intervals; iteration stops early once nothing changes.
    """
    box = theorem_box(joint, aleph, trace=trace)
    dc = derived_constants(joint, aleph)
    kap = kappa_intervals(joint, aleph)
    eps = aleph.eps_w
    K, C = _Lin.k, _Lin.chi
    lo, up = box.lo, box.up
    batch = lo.shape[:-2]
    dlo = np.full(batch + (2,), -eps)
    dup = np.full(batch + (2,), eps)
    for x in (0, 1):
        dlo[..., x] = np.maximum(dlo[..., x], lo[..., x, 1] - up[..., x, 0])
        dup[..., x] = np.minimum(dup[..., x], up[..., x, 1] - lo[..., x, 0])

    # Constants of the cross-instrument relations: omega[x,w] - b * omega[x,w'] vs c.
    cross = {}
    for x in (0, 1):
        xp = 1 - x
        for w in (0, 1):
            bu, bl = dc.UXU[..., xp, w], dc.LXU[..., xp, w]
            cross[x, w] = (
                ((K(1, x, w) + eps * C(xp, w)).hi(kap), bu),          # <=
                ((K(1, x, w) - eps * C(xp, w)).lo(kap), bl),          # >=
                ((1.0 - K(0, x, w) - eps * C(xp, w)).lo(kap) - bu, bu),  # >=
                ((1.0 - K(0, x, w) + eps * C(xp, w)).hi(kap) - bl, bl),  # <=
            )

    # Constants of the three-cell relations, indexed by target cell.
    three = {}
    Lb, Ub = dc.Lbar, dc.Ubar
    for x in (0, 1):
        xp = 1 - x
        for w in (0, 1):
            wp = 1 - w
            c1 = (K(1, xp, w) + K(1, x, w) - K(1, xp, wp) + K(1, x, wp)
                  - C(x, wp) * (Ub + Lb + 2 * eps) + Lb).lo(kap)
            c2 = (K(1, xp, wp) + K(1, x, wp) - K(1, xp, w) + K(1, x, w)
                  - C(x, wp) * (2 * eps) - C(x, w) * (Ub + Lb) + Lb).lo(kap)
            c3 = (-K(1, xp, w) + K(1, x, w) + K(1, xp, wp) + K(1, x, wp)
                  - C(x, w) * (Ub + Lb) + C(x, wp) * (2 * eps) + Ub).hi(kap)
            c4 = (-K(1, xp, wp) + K(1, x, wp) + K(1, xp, w) + K(1, x, w)
                  + C(x, wp) * (2 * eps - Ub - Lb) + Ub).hi(kap)
            three[x, w] = (c1, c2, c3, c4)

    it = 0
    for it in range(1, max_iters + 1):
        before = (lo.copy(), up.copy(), dlo.copy(), dup.copy())
        for (x, w), ((ca, bu), (cb, bl), (cc, _), (cd, _)) in cross.items():
            wp = 1 - w
            lo_p, up_p = lo[..., x, wp], up[..., x, wp]
            up[..., x, w] = np.minimum(up[..., x, w], np.minimum(ca + bu * up_p, cd + bl * up_p))
            lo[..., x, w] = np.maximum(lo[..., x, w], np.maximum(cb + bl * lo_p, cc + bu * lo_p))
            d_up = np.minimum(ca + (bu - 1.0) * lo_p, cd + (bl - 1.0) * lo_p)
            d_lo = np.maximum(cb + (bl - 1.0) * up_p, cc + (bu - 1.0) * up_p)
            d_up = np.minimum(d_up, up[..., x, w] - lo_p)
            d_lo = np.maximum(d_lo, lo[..., x, w] - up_p)
            _set_diff(dlo, dup, x, w, d_lo, d_up)
        for (x, w), (c1, c2, c3, c4) in three.items():
            xp = 1 - x
            # omega[x', w] - omega[x', w'] interval
            dl, du = _diff_ref(dlo, dup, xp, w)
            lo[..., x, w] = np.maximum(lo[..., x, w], np.maximum(c1 - du, c2 + dl))
            up[..., x, w] = np.minimum(up[..., x, w], np.minimum(c3 + du, c4 - dl))
        np.clip(lo, 0.0, 1.0, out=lo)
        np.clip(up, 0.0, 1.0, out=up)
        if trace:
            box.trace.append({"stage": f"iteration {it}", "lo": lo.tolist(), "up": up.tolist(),
                              "diff_lo": dlo.tolist(), "diff_up": dup.tolist()})
        after = (lo, up, dlo, dup)
        if all(np.array_equal(a, b) for a, b in zip(before, after)):
            break
    box.dlo, box.dup, box.iterations = dlo, dup, it
    return box


def box_to_ace(box: BoxBounds, pw, aleph: RelaxationParams) -> tuple[np.ndarray, np.ndarray]:
    """ACE interval implied by ``omega`` bounds, scaled into ``eta`` by the beta range."""
    pw = np.asarray(pw, dtype=float)
    bl, bh = aleph.beta_low, aleph.beta_high
    eta_lo = bl * box.lo
    eta_up = np.minimum(1.0, bh * box.up)
    lower = (pw * (eta_lo[..., 1, :] - eta_up[..., 0, :])).sum(axis=-1)
    upper = (pw * (eta_up[..., 1, :] - eta_lo[..., 0, :])).sum(axis=-1)
    return np.clip(lower, -1.0, 1.0), np.clip(upper, -1.0, 1.0)


def stratum_backsub_interval(joint, aleph: RelaxationParams, max_iters: int = 4):
    """Back-substitution ACE interval for one stratum (batched).

    Returns ``(lower, upper, feasible)``.
    """
    _, pw = _split(joint)
    box = back_substitution(joint, aleph, max_iters)
    lower, upper = box_to_ace(box, pw, aleph)
    return lower, upper, box.feasible()


def backsub_interval(tables, weights, aleph: RelaxationParams, max_iters: int = 4) -> IntervalBound:
    """Back-substitution ACE interval for a stratified table, weighted by ``P(Z)``."""
    tables = np.asarray(tables, dtype=float)
    weights = np.asarray(weights, dtype=float)
    lower, upper, ok = stratum_backsub_interval(tables, aleph, max_iters)
    if not ok.all():
        raise InfeasibleError("relaxed constraints are infeasible for this table")
    return IntervalBound(float(weights @ lower), float(weights @ upper))


def _bp_eta_bounds(zc):
    """Standard instrumental-variable bounds on ``P(Y=1 | do(X=x))`` for x = 0, 1."""
    z = lambda y, x, w: zc[..., y, x, w]  # noqa: E731
    up0 = np.minimum.reduce([
        1 - z(0, 0, 0),
        1 - z(0, 0, 1),
        z(0, 1, 0) + z(1, 0, 0) + z(1, 0, 1) + z(1, 1, 1),
        z(1, 0, 0) + z(1, 1, 0) + z(0, 1, 1) + z(1, 0, 1),
    ])
    lo0 = np.maximum.reduce([
        z(1, 0, 1),
        z(1, 0, 0),
        z(1, 0, 0) + z(1, 1, 0) - z(0, 0, 1) - z(1, 1, 1),
        -z(0, 0, 0) - z(1, 1, 0) + z(1, 0, 1) + z(1, 1, 1),
    ])
    up1 = np.minimum.reduce([
        1 - z(0, 1, 1),
        1 - z(0, 1, 0),
        z(1, 0, 0) + z(1, 1, 0) + z(0, 0, 1) + z(1, 1, 1),
        z(0, 0, 0) + z(1, 1, 0) + z(1, 0, 1) + z(1, 1, 1),
    ])
    lo1 = np.maximum.reduce([
        z(1, 1, 1),
        z(1, 1, 0),
        -z(0, 1, 0) - z(1, 0, 0) + z(1, 0, 1) + z(1, 1, 1),
        z(1, 0, 0) + z(1, 1, 0) - z(0, 1, 1) - z(1, 0, 1),
    ])
    return (lo0, up0), (lo1, up1)


def balke_pearl_siv(joint) -> IntervalBound:
    """Closed-form ACE interval under the standard instrumental-variable model."""
    zc, pw = _split(joint)
    if np.ndim(zc) != 3:
        raise ValueError("balke_pearl_siv takes a single stratum table")
    if (pw <= 0).any():
        raise ValueError("every instrument level needs positive probability")
    (lo0, up0), (lo1, up1) = _bp_eta_bounds(zc)
    return IntervalBound(float(max(lo1 - up0, -1.0)), float(min(up1 - lo0, 1.0)))
