"""Independent reference computations used by the tests.

Nothing here calls the package's bounding engines: ground truth comes from
explicit latent-variable models and from an LP over convex combinations of
vertices (no halfspace conversion involved).
"""

import numpy as np
from scipy.optimize import linprog

from witnessbounds.params import RelaxationParams
from witnessbounds.polytope import ETA_INDEX, ZETA_INDEX, eta_polygon_vertices, joint_vertices
from witnessbounds.symbolic import derived_constants
from witnessbounds.tables import BinaryDataset


def latent_model(rng, n_states=4, spread=0.1, direct=True):
    """Random model W -> X -> Y with a finite latent U confounding X and Y.

    Returns ``(joint[y, x, w], true_ace, tightest_aleph)``.  With
    ``direct=False`` Y does not depend on W given (X, U), i.e. a standard IV model.
    """
    pw1 = rng.uniform(0.2, 0.8)
    w_marg = np.array([1 - pw1, pw1])
    pu = rng.dirichlet(np.ones(n_states) * 5)
    u_given_w = np.stack([rng.dirichlet(pu * 40) for _ in range(2)])  # [w, u]
    px = np.clip(rng.uniform(0.2, 0.8, 2)[:, None] + rng.uniform(-spread, spread, (2, n_states)), 0.01, 0.99)
    base = rng.uniform(0.2, 0.8, (2, 1, 1)) + rng.uniform(-spread, spread, (2, 1, n_states))
    shift = rng.uniform(-spread / 2, spread / 2, (2, 2, n_states)) if direct else np.zeros((2, 2, n_states))
    py = np.clip(base + shift, 0.01, 0.99)  # [x, w, u]

    joint = np.zeros((2, 2, 2))
    for y in (0, 1):
        for x in (0, 1):
            for w in (0, 1):
                fx = px[w] if x else 1 - px[w]
                fy = py[x, w] if y else 1 - py[x, w]
                joint[y, x, w] = w_marg[w] * np.sum(u_given_w[w] * fx * fy)
    # do(X=x): Y's mechanism averaged over P(W, U)
    ace = sum(w_marg[w] * np.sum(u_given_w[w] * (py[1, w] - py[0, w])) for w in (0, 1))

    pu_marg = w_marg @ u_given_w
    zc = joint / joint.sum(axis=(0, 1))
    py_obs = zc[1] / zc.sum(axis=0)
    px_obs = zc[:, 1, :].sum(axis=0)
    eps_w = np.abs(py[:, 1] - py[:, 0]).max()
    eps_y = np.abs(py - py_obs[:, :, None]).max()
    eps_x = np.abs(px - px_obs[:, None]).max()
    ratio = u_given_w / pu_marg
    aleph = RelaxationParams(min(eps_w, 1.0), min(eps_x, 1.0), min(eps_y, 1.0),
                             min(ratio.min(), 1.0), max(ratio.max(), 1.0))
    return joint, float(ace), aleph


def chain_joint(rng, pw=None, px=None, py=None):
    """``P(y, x, w)`` for W -> X -> Y with no confounding; conditionals uniform(0, 1) unless given."""
    pw = rng.uniform() if pw is None else pw
    px = rng.uniform(size=2) if px is None else np.asarray(px, dtype=float)
    py = rng.uniform(size=2) if py is None else np.asarray(py, dtype=float)
    j = np.zeros((2, 2, 2))
    for y in (0, 1):
        for x in (0, 1):
            for w in (0, 1):
                j[y, x, w] = (pw if w else 1 - pw) * (px[w] if x else 1 - px[w]) * (py[x] if y else 1 - py[x])
    return j


def chain_backdoor(joint):
    """``P(Y=1 | X=1) - P(Y=1 | X=0)`` from ``joint[y, x, w]``."""
    pyx = joint.sum(axis=2)
    return pyx[1, 1] / pyx[:, 1].sum() - pyx[1, 0] / pyx[:, 0].sum()


def vrep_interval(joint, aleph):
    """ACE bounds from an LP over convex weights on the joint vertices.

    Returns ``(lower, upper)``, or ``(None, None)`` when infeasible.
    """
    dc = derived_constants(joint, aleph)
    polys = tuple(eta_polygon_vertices(dc.LYU[x, 0], dc.UYU[x, 0], dc.LYU[x, 1], dc.UYU[x, 1], aleph.eps_w)
                  for x in (0, 1))
    V = joint_vertices(polys, [(dc.LXU[1, w], dc.UXU[1, w]) for w in (0, 1)]).points
    pw = joint.sum(axis=(0, 1))
    zc = joint / pw
    n = len(V)
    nv = n + 12  # lambda, kappa (8), eta (4)
    A_eq, b_eq, A_ub, b_ub = [], [], [], []
    for k in range(8):
        r = np.zeros(nv)
        r[:n] = V[:, k]
        r[n + k] = -1
        A_eq.append(r)
        b_eq.append(0)
    r = np.zeros(nv)
    r[:n] = 1
    A_eq.append(r)
    b_eq.append(1)
    for w in (0, 1):
        r = np.zeros(nv)
        for k, (_, _, ww) in enumerate(ZETA_INDEX):
            if ww == w:
                r[n + k] = 1
        A_eq.append(r)
        b_eq.append(1)
    for k in range(4):
        r = np.zeros(nv)
        r[:n] = aleph.beta_low * V[:, 8 + k]
        r[n + 8 + k] = -1
        A_ub.append(r)
        b_ub.append(0)
        r = np.zeros(nv)
        r[:n] = -aleph.beta_high * V[:, 8 + k]
        r[n + 8 + k] = 1
        A_ub.append(r)
        b_ub.append(0)
    bounds = ([(0, None)] * n
              + [(min(zc[y, x, w] / aleph.beta_high, 1), min(zc[y, x, w] / aleph.beta_low, 1))
                 for y, x, w in ZETA_INDEX]
              + [(0, 1)] * 4)
    c = np.zeros(nv)
    for k, (x, w) in enumerate(ETA_INDEX):
        c[n + 8 + k] = pw[w] * (1 if x else -1)
    out = []
    for s in (1, -1):
        res = linprog(s * c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs")
        if res.status != 0:
            return None, None
        out.append(s * res.fun)
    return tuple(out)


def widen(aleph, rng, scale=0.1):
    """A random relaxation at least as loose as ``aleph``."""
    e = rng.uniform(0, scale, 3)
    return RelaxationParams(min(aleph.eps_w + e[0], 1), min(aleph.eps_x + e[1], 1), min(aleph.eps_y + e[2], 1),
                            aleph.beta_low * rng.uniform(0.95, 1), aleph.beta_high * rng.uniform(1, 1.05))


def stratified_chain(rng, n_strata=2):
    """Per-stratum chain tables and ``P(Z)``; W is a valid witness and Z admissible in every stratum."""
    tables = np.stack([chain_joint(rng) for _ in range(n_strata)])
    pz = rng.dirichlet(np.ones(n_strata) * 2)
    truth = float(sum(p * chain_backdoor(t) for p, t in zip(pz, tables)))
    return tables, pz, truth


def bern(rng, p):
    return (rng.uniform(size=np.shape(p)) < p).astype(np.int8)


def chain_data(rng, n, n_noise=2, strength=0.35):
    """Samples of W -> X -> Y plus independent noise columns N1, N2, ..."""
    w = bern(rng, np.full(n, 0.5))
    x = bern(rng, 0.5 + strength * (2 * w - 1))
    y = bern(rng, 0.5 + strength * (2 * x - 1))
    noise = [bern(rng, np.full(n, 0.5)) for _ in range(n_noise)]
    cols = ["W", "X", "Y"] + [f"N{i + 1}" for i in range(n_noise)]
    return BinaryDataset(cols, np.stack([w, x, y, *noise], axis=1))


def confounded_data(rng, n):
    """W drives both X and Y directly, so W is not independent of Y given X."""
    w = bern(rng, np.full(n, 0.5))
    x = bern(rng, np.where(w == 1, 0.8, 0.2))
    y = bern(rng, np.where(w == 1, 0.9, 0.1))
    return BinaryDataset(["W", "X", "Y"], np.stack([w, x, y], axis=1))


def observed_confounder_data(rng, n):
    """W -> X <- U -> Y and X -> Y, with U recorded: W is a witness once U is adjusted for."""
    w = bern(rng, np.full(n, 0.5))
    u = bern(rng, np.full(n, 0.5))
    x = bern(rng, 0.1 + 0.4 * w + 0.4 * u)
    y = bern(rng, 0.15 + 0.3 * x + 0.45 * u)
    return BinaryDataset(["W", "U", "X", "Y"], np.stack([w, u, x, y], axis=1))
