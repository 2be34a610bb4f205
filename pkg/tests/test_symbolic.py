import numpy as np
import pytest
from oracles import chain_backdoor, chain_joint, latent_model

from witnessbounds.errors import InfeasibleError
from witnessbounds.lp import lp_stratum_interval
from witnessbounds.params import RelaxationParams
from witnessbounds.symbolic import (
    BoxBounds, back_substitution, backsub_interval, balke_pearl_siv, box_to_ace, derived_constants,
    kappa_intervals, theorem_box,
)


def table_from_conditionals(py_xw, px_w, pw1=0.5):
    """Joint [y, x, w] from P(Y=1|x,w) (indexed [x, w]), P(X=1|w) and P(W=1)."""
    py_xw, px_w = np.asarray(py_xw, float), np.asarray(px_w, float)
    j = np.zeros((2, 2, 2))
    for y in (0, 1):
        for x in (0, 1):
            for w in (0, 1):
                fx = px_w[w] if x else 1 - px_w[w]
                fy = py_xw[x, w] if y else 1 - py_xw[x, w]
                j[y, x, w] = (pw1 if w else 1 - pw1) * fx * fy
    return j


def test_constants_formula():
    j = table_from_conditionals(np.full((2, 2), 0.5), [0.3, 0.6])
    dc = derived_constants(j, RelaxationParams(0.1, 0.1, 0.2))
    np.testing.assert_allclose(dc.LYU, 0.3)
    np.testing.assert_allclose(dc.UYU, 0.7)
    assert dc.Lbar == pytest.approx(0.3) and dc.Ubar == pytest.approx(0.7)


def test_constants_vacuous_outcome():
    j = table_from_conditionals([[0.2, 0.4], [0.7, 0.9]], [0.3, 0.6])
    dc = derived_constants(j, RelaxationParams(0.1, 0.1, 1.0))
    np.testing.assert_allclose(dc.LYU, 0)
    np.testing.assert_allclose(dc.UYU, 1)


def test_constants_treatment_complement():
    j = table_from_conditionals(np.full((2, 2), 0.5), [0.5, 0.9])
    dc = derived_constants(j, RelaxationParams(0.1, 0.05, 0.1))
    assert dc.UXU[1, 1] == pytest.approx(0.95)
    assert dc.LXU[0, 1] == pytest.approx(0.05)


def test_kappa_identity_at_beta_one():
    rng = np.random.default_rng(0)
    j, _, _ = latent_model(rng)
    k = kappa_intervals(j, RelaxationParams())
    zc = j / j.sum(axis=(0, 1))
    np.testing.assert_allclose(k.lo, zc)
    np.testing.assert_allclose(k.hi, zc)


def test_kappa_clipped():
    j = np.full((2, 2, 2), 0.0)
    j[1, 1, :] = 0.25
    j[0, 0, :] = 0.25  # zeta = 0.5 in those cells
    k = kappa_intervals(j, RelaxationParams(0, 0, 0, 0.5, 2.0))
    assert k.hi[1, 1, 0] == 1.0
    assert k.lo[1, 1, 0] == pytest.approx(0.25)


def test_kappa_division():
    j = np.full((2, 2, 2), 0.67 / 3 / 2)
    j[1, 1, :] = 0.33 / 2
    k = kappa_intervals(j, RelaxationParams(0, 0, 0, 0.9, 1.1))
    assert k.lo[1, 1, 0] == pytest.approx(0.3, abs=1e-4)
    assert k.hi[1, 1, 0] == pytest.approx(0.3667, abs=1e-4)


def test_outcome_vacuous_lower_bound_is_observed_cell():
    rng = np.random.default_rng(1)
    for _ in range(20):
        j = rng.dirichlet(np.ones(8)).reshape(2, 2, 2)
        zc = j / j.sum(axis=(0, 1))
        box = theorem_box(j, RelaxationParams(rng.uniform(), rng.uniform(), 1.0))
        assert (box.lo >= zc[1] - 1e-12).all()


def test_standard_iv_upper_inequality():
    rng = np.random.default_rng(2)
    for _ in range(20):
        j = rng.dirichlet(np.ones(8)).reshape(2, 2, 2)
        zc = j / j.sum(axis=(0, 1))
        box = theorem_box(j, RelaxationParams(0.0, 1.0, 1.0))
        for x in (0, 1):
            for w in (0, 1):
                assert box.up[x, w] <= 1 - zc[0, x, 1 - w] + 1e-12


def test_chain_box_degenerates():
    rng = np.random.default_rng(3)
    for _ in range(10):
        j = chain_joint(rng)
        pyx = j.sum(axis=2)
        py = pyx[1] / pyx.sum(axis=0)
        box = back_substitution(j, RelaxationParams())
        np.testing.assert_allclose(box.lo, box.up, atol=1e-12)
        np.testing.assert_allclose(box.lo, np.repeat(py[:, None], 2, axis=1), atol=1e-12)


def test_faithful_point_equals_backdoor():
    rng = np.random.default_rng(4)
    j = chain_joint(rng)
    iv = backsub_interval(j[None], [1.0], RelaxationParams())
    assert iv.lower == pytest.approx(chain_backdoor(j), abs=1e-9)
    assert iv.width == pytest.approx(0, abs=1e-9)


def test_contains_lp_interval():
    rng = np.random.default_rng(5)
    for _ in range(20):
        j, _, tight = latent_model(rng)
        a = RelaxationParams(min(tight.eps_w + 0.1, 1), min(tight.eps_x + 0.1, 1), min(tight.eps_y + 0.1, 1),
                             tight.beta_low, tight.beta_high)
        lp = lp_stratum_interval(j, a)
        bs = backsub_interval(j[None], [1.0], a)
        assert bs.lower <= lp.lower + 1e-8 and lp.upper <= bs.upper + 1e-8


def test_updates_only_shrink():
    rng = np.random.default_rng(6)
    j, _, tight = latent_model(rng)
    a = RelaxationParams.uniform(0.2, 0.95)
    init = theorem_box(j, a)
    refined = back_substitution(j, a)
    assert (refined.lo >= init.lo - 1e-15).all() and (refined.up <= init.up + 1e-15).all()


def test_trace_is_json():
    rng = np.random.default_rng(7)
    j = chain_joint(rng)
    box = back_substitution(j, RelaxationParams.uniform(0.1), trace=True)
    assert box.trace and box.trace_json().startswith("[")


def test_batched_matches_single():
    rng = np.random.default_rng(8)
    tables = np.stack([latent_model(rng)[0] for _ in range(6)])
    a = RelaxationParams.uniform(0.2, 0.9)
    batch = back_substitution(tables, a)
    for i, t in enumerate(tables):
        one = back_substitution(t, a)
        np.testing.assert_allclose(batch.lo[i], one.lo)
        np.testing.assert_allclose(batch.up[i], one.up)


def test_infeasible_raises():
    j = np.zeros((2, 2, 2))
    j[1, 1, 1] = 0.5
    j[0, 1, 0] = 0.5
    with pytest.raises(InfeasibleError):
        backsub_interval(j[None], [1.0], RelaxationParams())


def test_box_to_ace_cases():
    pw = np.array([0.4, 0.6])
    a = RelaxationParams()
    point = BoxBounds(np.full((2, 2), 0.3), np.full((2, 2), 0.3))
    lo, up = box_to_ace(point, pw, a)
    assert lo == pytest.approx(0) and up == pytest.approx(0)
    vac = BoxBounds(np.zeros((2, 2)), np.ones((2, 2)))
    lo, up = box_to_ace(vac, pw, a)
    assert (lo, up) == (-1, 1)
    lo_b = np.array([[0.1, 0.2], [0.3, 0.4]])
    widths = np.array([[0.05, 0.1], [0.2, 0.15]])
    lo, up = box_to_ace(BoxBounds(lo_b, lo_b + widths), pw, a)
    assert up - lo == pytest.approx(np.sum(pw * (widths[0] + widths[1])))


def test_balke_pearl_width_cases():
    # W = X deterministically
    j = table_from_conditionals([[0.3, 0.3], [0.8, 0.8]], [0.0, 1.0])
    assert balke_pearl_siv(j).width == pytest.approx(0, abs=1e-12)
    # W independent of X
    j = table_from_conditionals([[0.3, 0.3], [0.8, 0.8]], [0.4, 0.4])
    assert balke_pearl_siv(j).width == pytest.approx(1, abs=1e-12)
    # chain with P(X=1|W=1) = 0.9, P(X=1|W=0) = 0.1
    j = table_from_conditionals([[0.3, 0.3], [0.8, 0.8]], [0.1, 0.9])
    assert balke_pearl_siv(j).width == pytest.approx(0.2, abs=1e-12)


def test_balke_pearl_rejects_missing_level():
    j = np.zeros((2, 2, 2))
    j[:, :, 0] = 0.25
    with pytest.raises(ValueError):
        balke_pearl_siv(j)
