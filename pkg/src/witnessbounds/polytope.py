"""Vertex enumeration and vertex-to-halfspace conversion for the latent polytopes.

The joint space has 12 coordinates: the eight ``zeta*`` entries ordered as
``ZETA_INDEX`` (y, x, w), followed by the four ``eta*`` entries ordered as
``ETA_INDEX`` (x, w).  Convex combinations of the vertices correspond to
averaging the latent-conditional quantities over an arbitrary ``P(U)``.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import InfeasibleError, PolytopeDegeneracyError

ZETA_INDEX = [(y, x, w) for w in (0, 1) for x in (0, 1) for y in (0, 1)]
ETA_INDEX = [(x, w) for x in (0, 1) for w in (0, 1)]
DIM = len(ZETA_INDEX) + len(ETA_INDEX)

DEDUP_TOL = 1e-12
FEAS_TOL = 1e-9
BASIS_REL_TOL = 1e-3


@dataclass
class VRep:
    points: np.ndarray

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def to_json(self) -> str:
        return json.dumps({"kind": "vrep", "points": self.points.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "VRep":
        return cls(np.array(json.loads(text)["points"], dtype=float))


@dataclass
class HRep:
    """Polytope ``{v : A v <= b}``; ``n_eq`` counts rows that came from equalities (in +/- pairs)."""

    A: np.ndarray
    b: np.ndarray
    n_eq: int = 0

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    def contains(self, v, tol: float = FEAS_TOL) -> bool:
        v = np.asarray(v, dtype=float)
        return bool(np.all(self.A @ v <= self.b + tol))

    def to_json(self) -> str:
        return json.dumps({"kind": "hrep", "A": self.A.tolist(), "b": self.b.tolist(), "n_eq": self.n_eq})

    @classmethod
    def from_json(cls, text: str) -> "HRep":
        d = json.loads(text)
        return cls(np.array(d["A"], dtype=float), np.array(d["b"], dtype=float), int(d.get("n_eq", 0)))


def dedup(points: np.ndarray, tol: float = DEDUP_TOL) -> np.ndarray:
    """Drop points within ``tol`` (max-norm) of an earlier point, keeping first occurrences."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if len(points) <= 1:
        return points
    dist = np.abs(points[:, None, :] - points[None, :, :]).max(axis=-1)
    close = np.triu(dist <= tol, k=1)
    return points[~close.any(axis=0)]


# ---------------------------------------------------------------------------
# the 2-d eta* polygon for one value of x
# ---------------------------------------------------------------------------

def eta_polygon_vertices(L0: float, U0: float, L1: float, U1: float, eps_w: float,
                         tol: float = DEDUP_TOL) -> VRep:
    """Vertices of ``{(a, b) in [L0, U0] x [L1, U1] : |a - b| <= eps_w}``.

    ``a`` is the w=0 coordinate and ``b`` the w=1 coordinate.  Raises
    ``InfeasibleError`` when the two boxes are further apart than ``eps_w``.
    """
    if not (L0 <= U0 + tol and L1 <= U1 + tol):
        raise ValueError("empty box")
    if not 0.0 <= eps_w <= 1.0:
        raise ValueError("eps_w must lie in [0, 1]")
    if L1 - U0 > eps_w + tol or L0 - U1 > eps_w + tol:
        raise InfeasibleError("eta boxes are separated by more than eps_w")

    # Walk the box boundary counter-clockwise and clip it against the band
    # b - a <= eps_w and a - b <= eps_w (Sutherland-Hodgman on a convex region).
    poly = [(L0, L1), (U0, L1), (U0, U1), (L0, U1)]
    for sign in (1.0, -1.0):
        out = []
        n = len(poly)
        for i in range(n):
            p, q = poly[i], poly[(i + 1) % n]
            fp = sign * (p[1] - p[0]) - eps_w
            fq = sign * (q[1] - q[0]) - eps_w
            if fp <= tol:
                out.append(p)
            if (fp < -tol and fq > tol) or (fp > tol and fq < -tol):
                t = fp / (fp - fq)
                out.append((p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
        poly = out
        if not poly:
            raise InfeasibleError("eta polygon is empty")
    pts = dedup(np.array(poly))
    return VRep(_drop_collinear(pts, tol))


def _drop_collinear(pts: np.ndarray, tol: float) -> np.ndarray:
    if len(pts) <= 2:
        return pts
    keep = []
    n = len(pts)
    for i in range(n):
        a, b, c = pts[i - 1], pts[i], pts[(i + 1) % n]
        cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0])
        if abs(cross) > tol:
            keep.append(b)
    if not keep:
        # Degenerate (segment or point): keep the extreme points along the segment.
        order = np.lexsort((pts[:, 1], pts[:, 0]))
        return dedup(pts[[order[0], order[-1]]])
    return np.array(keep)


# ---------------------------------------------------------------------------
# map (delta*, eta*) extreme points into the joint (zeta*, eta*) space
# ---------------------------------------------------------------------------

def joint_vertices(eta_vreps: tuple[VRep, VRep], delta_boxes) -> VRep:
    """Vertices of the 12-d (zeta*, eta*) polytope.

    ``eta_vreps[x]`` holds the polygon for ``(eta*_{x0}, eta*_{x1})``;
    ``delta_boxes[w] = (lo, hi)`` bounds ``delta*_w = P(X=1 | W=w, U)``.
    """
    e0, e1 = eta_vreps
    if len(e0) == 0 or len(e1) == 0:
        raise InfeasibleError("empty eta polygon")
    d_corners = [sorted({float(lo), float(hi)}) for lo, hi in delta_boxes]
    rows = []
    for a, b, d0, d1 in itertools.product(e0.points, e1.points, d_corners[0], d_corners[1]):
        eta = {(0, 0): a[0], (0, 1): a[1], (1, 0): b[0], (1, 1): b[1]}
        delta = {0: d0, 1: d1}
        row = np.empty(DIM)
        for k, (y, x, w) in enumerate(ZETA_INDEX):
            dx = delta[w] if x == 1 else 1.0 - delta[w]
            row[k] = eta[x, w] * dx if y == 1 else (1.0 - eta[x, w]) * dx
        for k, xw in enumerate(ETA_INDEX):
            row[len(ZETA_INDEX) + k] = eta[xw]
        rows.append(row)
    return VRep(dedup(np.array(rows)))


# ---------------------------------------------------------------------------
# V -> H by double description on the polar
# ---------------------------------------------------------------------------

# Sign tolerances tried in order.  Too tight and nearly-coincident vertices
# break the adjacency test, silently dropping facets; too loose and a facet
# may fail the residual check, in which case the next one is tried.
DD_TOLS = (1e-8, 1e-9, 1e-10)

def _initial_basis(M: np.ndarray, tol: float) -> list[int]:
    """Greedy choice of linearly independent rows, in input order.

    A row is accepted only if its component orthogonal to the rows already
    chosen is a sizeable fraction of its norm; near-dependent picks make the
    starting ray matrix ill-conditioned.  If that leaves the basis short, fall
    back to pivoted QR.
    """
    chosen: list[int] = []
    basis = np.zeros((0, M.shape[1]))
    for i in range(M.shape[0]):
        row = M[i]
        resid = row - basis.T @ (basis @ row) if len(basis) else row.copy()
        nrm = np.linalg.norm(resid)
        if nrm > BASIS_REL_TOL * max(1.0, np.linalg.norm(row)):
            chosen.append(i)
            basis = np.vstack([basis, resid / nrm])
            if len(chosen) == M.shape[1]:
                return chosen
    _, Rq, piv = scipy.linalg.qr(M.T, pivoting=True, mode="economic")
    d = np.abs(np.diag(Rq))
    rank = int(np.sum(d > tol * max(1.0, d[0] if len(d) else 1.0)))
    return sorted(piv[:rank].tolist())


def extreme_rays(M: np.ndarray, tol: float = 1e-10, full_dim: bool = False) -> np.ndarray:
    """Extreme rays of the pointed cone ``{y : M y >= 0}`` (double description).

    With ``full_dim`` the cone is known to be full-dimensional, so fewer than
    ``n`` rays at any stage signals numerical breakdown.
    """
    m, n = M.shape
    init = _initial_basis(M, tol)
    if len(init) < n:
        raise PolytopeDegeneracyError("cone is not pointed (constraint matrix rank deficient)")
    R = np.linalg.inv(M[init]).T  # rows are rays
    R /= np.abs(R).max(axis=1, keepdims=True)
    order = init + [i for i in range(m) if i not in set(init)]
    processed = [order[0]]
    Z = np.abs(R @ M[init[0]]) <= tol
    Z = Z[:, None]
    for idx in order[1:]:
        a = M[idx]
        s = R @ a
        scale = max(1.0, np.abs(a).max())
        pos = s > tol * scale
        neg = s < -tol * scale
        zero = ~(pos | neg)
        ip, ineg = np.flatnonzero(pos), np.flatnonzero(neg)
        new_R = np.zeros((0, n))
        new_Z = np.zeros((0, Z.shape[1] + 1), dtype=bool)
        if len(ip) and len(ineg):
            # float32 products are exact for these counts and go through BLAS
            Zf = Z.astype(np.float32)
            cnt = Zf[ip] @ Zf[ineg].T
            pi, ni = np.nonzero(cnt >= n - 2)
            if len(pi):
                cm = Z[ip[pi]] & Z[ineg[ni]]
                hits = cm.astype(np.float32) @ Zf.T
                adjacent = (hits == cnt[pi, ni][:, None]).sum(axis=1) == 2
                p, q = ip[pi[adjacent]], ineg[ni[adjacent]]
                new_R = s[p][:, None] * R[q] - s[q][:, None] * R[p]
                new_R /= np.abs(new_R).max(axis=1, keepdims=True)
                new_Z = np.hstack([cm[adjacent], np.ones((len(p), 1), dtype=bool)])
        keep = pos | zero
        R_keep = R[keep]
        Z_keep = np.hstack([Z[keep], zero[keep][:, None]])
        R = np.vstack([R_keep, new_R])
        Z = np.vstack([Z_keep, new_Z])
        if full_dim and len(R) < n:
            raise PolytopeDegeneracyError("ray set collapsed during double description")
        processed.append(idx)
    return R


def affine_hull(points: np.ndarray, tol: float = 1e-9):
    """Return (centroid, basis of the affine hull directions, normals of the implicit equalities)."""
    c = points.mean(axis=0)
    X = points - c
    if len(points) == 1:
        return c, np.zeros((points.shape[1], 0)), np.eye(points.shape[1])
    _, svals, Vt = np.linalg.svd(X, full_matrices=True)
    rank = int(np.sum(svals > tol * max(1.0, svals[0] if len(svals) else 1.0)))
    return c, Vt[:rank].T, Vt[rank:].T


def dual_conversion(v: VRep, tol: float = FEAS_TOL, check: bool = True) -> HRep:
    """Halfspace description of ``conv(v.points)``.

    Implicit equalities of the affine hull are emitted as paired inequalities
    first (``n_eq`` rows).  Raises ``PolytopeDegeneracyError`` if the facet
    residual check fails.
    """
    pts = dedup(v.points)
    if len(pts) == 0:
        raise ValueError("dual_conversion needs at least one point")
    c, B, N = affine_hull(pts)
    rows_A: list[np.ndarray] = []
    rows_b: list[float] = []
    for nvec in N.T:
        nvec = nvec / np.abs(nvec).max()
        off = float(nvec @ c)
        rows_A += [nvec, -nvec]
        rows_b += [off, -off]
    n_eq = len(rows_A)
    r = B.shape[1]
    if r == 0:
        h = HRep(np.array(rows_A).reshape(-1, pts.shape[1]), np.array(rows_b), n_eq)
        if check:
            _check_hrep(h, pts, r, tol)
        return h
    # Whitening keeps thin directions (small eps_w) from swamping the tolerances.
    B = B / np.linalg.norm((pts - c) @ B, axis=0)
    P = (pts - c) @ B
    M = np.hstack([np.ones((len(P), 1)), -P])
    M = np.vstack([M, np.eye(r + 1)[0]])
    err: PolytopeDegeneracyError | None = None
    for dd_tol in DD_TOLS:
        try:
            rays = extreme_rays(M, tol=dd_tol, full_dim=True)
        except PolytopeDegeneracyError as e:
            err = e
            continue
        t = rays[:, 0]
        good = t > 1e-12
        facets = rays[good, 1:] / t[good][:, None]
        A_f, b_f = list(rows_A), list(rows_b)
        for a in facets:
            Av = B @ a
            bv = 1.0 + float(Av @ c)
            s = np.abs(Av).max()
            A_f.append(Av / s)
            b_f.append(bv / s)
        h = HRep(np.array(A_f).reshape(-1, pts.shape[1]), np.array(b_f), n_eq)
        if not check:
            return h
        try:
            _check_hrep(h, pts, r, tol)
            return h
        except PolytopeDegeneracyError as e:
            err = e
    raise err


def _check_hrep(h: HRep, pts: np.ndarray, r: int, tol: float) -> None:
    slack = h.b[:, None] - h.A @ pts.T
    if slack.min() < -max(tol, 1e-7):
        raise PolytopeDegeneracyError(f"vertex violates H-representation by {-slack.min():.3g}")
    for i in range(h.n_eq, len(h.b)):
        tight = np.flatnonzero(np.abs(slack[i]) <= 1e-7)
        if len(tight) < r:
            raise PolytopeDegeneracyError(f"facet {i} tight at only {len(tight)} vertices (< {r})")
    if r > 0:
        n_facets = len(h.b) - h.n_eq
        if n_facets < r + 1:
            raise PolytopeDegeneracyError(f"{n_facets} facets cannot bound a {r}-dimensional polytope")


def hrep_vertices(h: HRep, tol: float = 1e-9) -> np.ndarray:
    """Vertices of a bounded H-polytope by double description (used for round trips)."""
    d = h.dim
    M = np.hstack([h.b[:, None], -h.A])
    M = np.vstack([M, np.eye(d + 1)[0]])
    rays = extreme_rays(M, tol=1e-10)
    t = rays[:, 0]
    good = t > 1e-12
    return dedup(rays[good, 1:] / t[good][:, None], tol=1e-8)
