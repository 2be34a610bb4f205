import itertools

import numpy as np
import pytest
from scipy.integrate import quad
from oracles import chain_data, chain_joint

from witnessbounds.errors import DataError, InfeasibleError
from witnessbounds.params import IntervalBound, RelaxationParams
from witnessbounds.relaxation import (
    DEFAULT_C_GRID, DEFAULT_K_GRID, AlephSample, aleph_loglik, aleph_mh, backdoor_ace, backdoor_ace_from_data,
    bounds_variance, grid_search, pair_mean_table, reference_set, table_backdoor_ace, trunc_gaussian_prior,
    trunc_normal_logpdf,
)
from witnessbounds.tables import ContingencyTable


def test_backdoor_without_z_is_naive_contrast():
    p = np.array([[0.2, 0.1], [0.3, 0.4]])  # [y, x]
    assert backdoor_ace(p) == pytest.approx(0.4 / 0.5 - 0.3 / 0.5)


def test_backdoor_constant_contrast():
    pz = [0.3, 0.7]
    strata = []
    for z, base in enumerate((0.2, 0.5)):
        px1 = 0.4 + 0.2 * z
        py1 = np.array([base, base + 0.25])  # P(Y=1 | x)
        pyx = np.array([[(1 - py1[0]) * (1 - px1), (1 - py1[1]) * px1], [py1[0] * (1 - px1), py1[1] * px1]])
        strata.append(pz[z] * pyx)
    assert backdoor_ace(np.stack(strata)) == pytest.approx(0.25)


def test_backdoor_conditional_independence():
    px = np.array([0.3, 0.7])
    py = 0.6
    p = np.array([[(1 - py) * (1 - px[0]), (1 - py) * px[0]], [py * (1 - px[0]), py * px[0]]])
    assert backdoor_ace(np.stack([0.5 * p, 0.5 * p])) == pytest.approx(0)


def test_backdoor_names_bad_stratum():
    p = np.zeros((2, 2, 2))
    p[0] = 0.125
    p[1, :, 1] = 0.25
    with pytest.raises(DataError, match="A=1"):
        backdoor_ace(p, ["A"])


def test_table_and_data_estimates_agree():
    rng = np.random.default_rng(0)
    d = chain_data(rng, 3000)
    t = pair_mean_table(d, "Y", "X", "W", ["N1"], ess=1e-6)
    a = table_backdoor_ace(t)
    b = backdoor_ace_from_data(d, ["N1"], "X", "Y", ess=1e-6)
    assert a == pytest.approx(b, abs=1e-6)
    assert a == pytest.approx(0.7, abs=0.05)


def test_reference_set_rules():
    pairs = [((), 0.1), (("A",), 0.2), (("A", "B"), 0.3)]
    got = reference_set(pairs, ["C"])
    assert [sorted(e.z_cols) for e in got] == [["A"]]
    got = reference_set([((), 0.1)], ["C"], allow_empty=True)
    assert [e.z_cols for e in got] == [frozenset()]
    assert reference_set([(("C",), 0.1)], ["C"]) == []


def test_reference_set_accepts_triples_and_dedups():
    got = reference_set([("W", ("A",), 0.2), ("V", ("A",), 0.9), ("W", ("B",), 0.4)], ["C"])
    assert [(sorted(e.z_cols), e.ace) for e in got] == [(["A"], 0.2), (["B"], 0.4)]


def test_reference_set_drops_supersets_of_target():
    got = reference_set([(("A", "B"), 0.2), (("C",), 0.3)], ["A"])
    assert [sorted(e.z_cols) for e in got] == [["C"]]


def test_truncnorm_difference():
    for v in (0.05, 0.3, 2.0):
        assert trunc_normal_logpdf(0.0, 0.0, v) - trunc_normal_logpdf(1.0, 0.0, v) == pytest.approx(1 / (2 * v))


def test_truncnorm_symmetric_and_support():
    assert trunc_normal_logpdf(0.4, 0.0, 0.2) == pytest.approx(trunc_normal_logpdf(-0.4, 0.0, 0.2))
    assert trunc_normal_logpdf(1.5, 0.0, 0.2) == -np.inf
    with pytest.raises(ValueError):
        trunc_normal_logpdf(0.0, 0.0, 0.0)


def test_truncnorm_flat_limit():
    assert trunc_normal_logpdf(0.3, 0.1, 1e8) == pytest.approx(-np.log(2), abs=1e-6)


def test_bounds_variance():
    assert bounds_variance(-0.2, 0.4) == pytest.approx(0.01)
    assert bounds_variance(0.1, 0.1) > 0


def test_loglik_properties():
    b = IntervalBound(-0.3, 0.3)
    ms = np.linspace(-0.3, 0.3, 61)
    lls = [aleph_loglik(m, b, [0.1, 0.1]) for m in ms]
    assert ms[int(np.argmax(lls))] == pytest.approx(0.1)
    assert aleph_loglik(0.0, b, [0.1] * 4) == pytest.approx(2 * aleph_loglik(0.0, b, [0.1] * 2))
    assert aleph_loglik(0.0, b, []) == 0.0


def test_aleph_sample_validation():
    s = AlephSample(0.1, 0.2, 0.8)
    p = s.to_params()
    assert (p.eps_w, p.eps_x, p.eps_y, p.beta_low) == (0.1, 0.2, 0.2, 0.8)
    assert p.beta_high == pytest.approx(1.25)
    with pytest.raises(ValueError):
        AlephSample(1.1, 0, 1)


def test_default_grid():
    assert DEFAULT_K_GRID == (0.05, 0.10, 0.15, 0.20, 0.25, 0.30)
    assert DEFAULT_C_GRID == (0.9, 1.0)


def test_grid_monotone_and_zero_target():
    rng = np.random.default_rng(1)
    t = ContingencyTable(chain_joint(rng, pw=0.5, px=[0.2, 0.8], py=[0.3, 0.6])[None], weights=np.ones(1))
    pts = grid_search(t, 0.0, engine="backsub")
    assert len(pts) == len(DEFAULT_K_GRID) * len(DEFAULT_C_GRID)
    by = {(p.k_eps, p.c): p.width for p in pts}
    for c in DEFAULT_C_GRID:
        ws = [by[(k, c)] for k in DEFAULT_K_GRID]
        assert all(a <= b + 1e-12 for a, b in zip(ws, ws[1:]))
    for k in DEFAULT_K_GRID:
        assert by[(k, 1.0)] <= by[(k, 0.9)] + 1e-12
    assert (pts[0].k_eps, pts[0].c) == (0.05, 1.0)


def test_grid_target_ordering():
    rng = np.random.default_rng(2)
    t = ContingencyTable(chain_joint(rng, pw=0.5, px=[0.2, 0.8], py=[0.3, 0.6])[None], weights=np.ones(1))
    pts = grid_search(t, 0.5, engine="backsub")
    gaps = [abs(p.width - 0.5) for p in pts]
    assert gaps == sorted(gaps)
    with pytest.raises(ValueError):
        grid_search(t, 0.5, k_grid=())


def toy_bounds(s):
    """Bounds that depend on all three parameters; infeasible in one corner."""
    if s.eps_w == 0 and s.eps_xy == 0:
        return None
    lo = -0.1 - 0.5 * s.eps_w
    hi = 0.1 + 0.4 * s.eps_xy + 0.3 * (1 - s.beta)
    return IntervalBound(lo, hi)


def test_mh_stationary_distribution():
    res = 0.25
    aces = [0.15, 0.25]
    prior = trunc_gaussian_prior((0.3, 0.3, 0.8), (0.2, 0.2, 0.2))
    grid = [v * res for v in range(5)]
    states = [AlephSample(a, b, c) for a, b, c in itertools.product(grid, grid, grid[1:])]
    weight = {}
    for s in states:
        b = toy_bounds(s)
        if b is None:
            continue
        mass, _ = quad(lambda m: np.exp(aleph_loglik(m, b, aces)), b.lower, b.upper)
        weight[s.as_tuple()] = np.exp(prior(s)) * mass / b.width
    total = sum(weight.values())

    chain = aleph_mh(toy_bounds, aces, 20000, np.random.default_rng(3), prior=prior, step=0.25,
                     resolution=res, burn_in=1000, init=AlephSample(0.5, 0.5, 0.5))
    for k in range(3):
        want = {}
        for key, w in weight.items():
            want[key[k]] = want.get(key[k], 0.0) + w / total
        vals = np.array([s.as_tuple()[k] for s in chain.samples])
        for v, p in want.items():
            assert np.mean(np.isclose(vals, v)) == pytest.approx(p, abs=0.03)
    assert all(toy_bounds(s).contains(m) for s, m in zip(chain.samples, chain.m))


def test_mh_identified_target_concentrates():
    rng = np.random.default_rng(4)
    t = ContingencyTable(chain_joint(rng, pw=0.5, px=[0.2, 0.8], py=[0.3, 0.6])[None], weights=np.ones(1))
    ace = table_backdoor_ace(t)
    chain = aleph_mh(t, [ace] * 5, 600, rng, burn_in=200)
    means = chain.means()
    assert means["eps_xy"] < 0.2 and means["beta"] > 0.85
    assert abs(means["m"] - ace) < 0.05


def test_mh_output_and_validation(tmp_path):
    chain = aleph_mh(toy_bounds, [0.1], 50, np.random.default_rng(5), burn_in=10)
    assert len(chain.samples) == len(chain.m) == 40
    assert set(chain.acceptance) == {"eps_w", "eps_xy", "beta", "m"}
    p = tmp_path / "c.csv"
    chain.to_csv(p)
    lines = p.read_text().splitlines()
    assert lines[0] == "iteration,eps_w,eps_xy,beta,m,loglik" and len(lines) == 41
    with pytest.raises(ValueError):
        aleph_mh(toy_bounds, [0.1], 0, np.random.default_rng(0))
    with pytest.raises(ValueError):
        aleph_mh(toy_bounds, [0.1], 10, np.random.default_rng(0), resolution=0.3)
    with pytest.raises(InfeasibleError):
        aleph_mh(lambda s: None, [0.1], 10, np.random.default_rng(0))
