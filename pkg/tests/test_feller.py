import csv
import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from csbp import feller as Fe
from csbp import flow as F
from csbp import mechanism as M
from csbp import stats as S
from csbp.errors import DomainError


def window_times(p, t_min, d, n_windows, rng):
    """T over n disjoint windows of length d cut from one comb."""
    cpp = Fe.sample_cpp(p, n_windows * d, rng, t_min=t_min)
    edges = np.linspace(0.0, cpp.x_max, n_windows + 1)
    return cpp.T(edges[:-1], edges[1:])


def test_beta_hat_examples():
    assert Fe.beta_hat(Fe.FellerParams(2.0, 0.0), 1.0) == pytest.approx(1.0)
    assert Fe.beta_hat(Fe.FellerParams(2.0, 1.0), 200.0) < 1e-80
    assert Fe.beta_hat(Fe.FellerParams(2.0, -1.0), 200.0) == pytest.approx(1.0)
    assert Fe.beta_hat(Fe.FellerParams(2.0, -1.0), math.inf) == 1.0
    assert math.isinf(Fe.beta_hat(Fe.FellerParams(1.0, 0.3), 0.0))


def test_params_validation():
    with pytest.raises(DomainError):
        Fe.FellerParams(0.0, 1.0)
    with pytest.raises(DomainError):
        Fe.FellerParams(1.0, math.nan)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.1, 5), st.floats(-3, 3), st.floats(1e-3, 20))
def test_beta_hat_inverse_roundtrip(sigma2, beta, t):
    p = Fe.FellerParams(sigma2, beta)
    b = Fe.beta_hat(p, t)
    if b > p.prolific_rate * (1 + 1e-9):
        assert float(Fe.beta_hat_inverse(p, b)) == pytest.approx(t, rel=1e-6)


@pytest.mark.parametrize("t", [0.1, 1.0, 5.0])
def test_beta_continuity(t):
    p0 = Fe.FellerParams(2.0, 0.0)
    for eps in (1e-8, -1e-8):
        p = Fe.FellerParams(2.0, eps)
        assert Fe.beta_hat(p, t) == pytest.approx(Fe.beta_hat(p0, t), rel=1e-6)
        assert Fe.v_inf(p, t) == pytest.approx(Fe.v_inf(p0, t), rel=1e-6)
        assert Fe.v(p, t, 1.3) == pytest.approx(Fe.v(p0, t, 1.3), rel=1e-6)
        assert Fe.mrca_cdf(p, t, 0.0, 0.7) == pytest.approx(Fe.mrca_cdf(p0, t, 0.0, 0.7), rel=1e-6)
        assert float(Fe.beta_hat_inverse(p, 0.4)) == pytest.approx(float(Fe.beta_hat_inverse(p0, 0.4)), rel=1e-6)


def test_closed_forms_match_mechanism_module():
    for beta in (-0.7, 0.0, 1.2):
        p = Fe.FellerParams(1.5, beta)
        for t in (0.2, 3.0):
            assert Fe.v(p, t, 2.0) == pytest.approx(M.v(p.mechanism(), t, 2.0), rel=1e-10)
            assert Fe.v_inf(p, t) == pytest.approx(M.v_inf(p.mechanism(), t), rel=1e-10)
            # beta_hat_t = v_t(inf) e^{-beta t}
            assert Fe.beta_hat(p, t) == pytest.approx(Fe.v_inf(p, t) * math.exp(-beta * t), rel=1e-12)
            assert Fe.v_hat(p, t, math.inf) == Fe.beta_hat(p, t)


def test_mrca_cdf_examples():
    p = Fe.FellerParams(2.0, 0.0)
    assert Fe.mrca_cdf(p, 1.0, 0.0, 1.0) == pytest.approx(math.exp(-1))
    assert Fe.mrca_cdf(p, 0.5, 2.0, 2.0) == 1.0
    assert Fe.mrca_cdf(p, 0.0, 0.0, 1.0) == 0.0
    q = Fe.FellerParams(2.0, -1.0)
    # P(T < inf) = exp(2 beta (y-x)/sigma2); no common ancestor is the complement
    assert Fe.p_common_ancestor(q, 0.0, 1.0) == pytest.approx(math.exp(-1))
    assert Fe.p_no_ancestor(q, 0.0, 1.0) == pytest.approx(1 - math.exp(-1))
    assert Fe.mrca_cdf(q, math.inf, 0.0, 1.0) == pytest.approx(math.exp(-1))
    # the finite-t cdf climbs to P(T < inf)
    assert Fe.mrca_cdf(q, 60.0, 0.0, 1.0) == pytest.approx(math.exp(-1))
    assert Fe.p_no_ancestor(q, 0.0, 200.0) == pytest.approx(1.0)
    assert Fe.p_no_ancestor(p, 0.0, 5.0) == 0.0
    with pytest.raises(DomainError):
        Fe.mrca_cdf(p, 1.0, 2.0, 1.0)


def test_inverse_flow_increments_have_exponent_v_hat():
    rng = np.random.default_rng(0)
    sigma2, beta, t, lam = 2.0, 0.5, 0.8, 1.3
    p = Fe.FellerParams(sigma2, beta)
    vals = []
    for _ in range(6000):
        path = F.sample_feller_inverse(sigma2, beta, t, 2.0, rng)
        vals.append(math.exp(-lam * (F.feller_inverse_at(path, 2.0) - F.feller_inverse_at(path, 1.0))))
    m, se = S.mean_and_se(vals)
    assert S.z_test(m, math.exp(-Fe.v_hat(p, t, lam)), se).passed


@pytest.mark.parametrize("beta,t,d", [(0.0, 1.0, 1.0), (0.7, 0.5, 0.3), (-1.0, 2.0, 0.8)])
def test_cpp_matches_mrca_cdf(beta, t, d):
    rng = np.random.default_rng(1)
    p = Fe.FellerParams(2.0, beta)
    n = 100000
    hits = window_times(p, t / 2, d, n, rng) <= t
    target = Fe.mrca_cdf(p, t, 0.0, d)
    se = math.sqrt(target * (1 - target) / n)
    assert S.z_test(hits.mean(), target, se).passed


def test_cpp_no_ancestor_mass():
    rng = np.random.default_rng(2)
    p = Fe.FellerParams(2.0, -1.0)
    n = 50000
    inf = np.isinf(window_times(p, 0.5, 1.0, n, rng))
    target = Fe.p_no_ancestor(p, 0.0, 1.0)
    assert S.z_test(inf.mean(), target, math.sqrt(target * (1 - target) / n)).passed


def test_critical_atom_count_above_depth():
    rng = np.random.default_rng(3)
    p = Fe.FellerParams(2.0, 0.0)
    t0, L = 0.5, 10.0
    counts = [np.sum(Fe.sample_cpp(p, L, rng, t_min=0.05).depths > t0) for _ in range(3000)]
    m, se = S.mean_and_se(counts)
    assert S.z_test(m, 2 * L / (2.0 * t0), se).passed


def test_supercritical_has_no_infinite_atoms():
    rng = np.random.default_rng(4)
    cpp = Fe.sample_cpp(Fe.FellerParams(1.0, 0.8), 200.0, rng, t_min=1e-3)
    assert len(cpp) > 0 and np.all(np.isfinite(cpp.depths))


def test_max_stability():
    rng = np.random.default_rng(5)
    p = Fe.FellerParams(2.0, 0.5)
    n = 20000
    xz = window_times(p, 0.01, 1.0, n, rng)
    xy = window_times(p, 0.01, 0.4, n, rng)
    yz = window_times(p, 0.01, 0.6, n, rng)
    assert S.ks_2sample(xz, np.maximum(xy, yz)).passed


def test_cpp_and_pair_sampler_agree():
    rng = np.random.default_rng(6)
    p = Fe.FellerParams(1.0, 0.3)
    a = window_times(p, 1e-3, 0.5, 20000, rng)
    b = Fe.sample_pair_mrca(p, np.full(20000, 0.5), rng)
    assert S.ks_2sample(a, b).passed
    cdf = lambda t: np.exp(-np.array([Fe.beta_hat(p, s) if s > 0 else np.inf for s in np.atleast_1d(t)]) * 0.5)
    assert S.ks_test(b, cdf).passed


def test_range_max_matches_brute_force():
    rng = np.random.default_rng(7)
    cpp = Fe.sample_cpp(Fe.FellerParams(2.0, -0.5), 30.0, rng, t_min=0.02)
    xs = rng.uniform(0, 29, 500)
    ys = xs + rng.exponential(0.3, 500).clip(max=1.0)
    brute = [max([d for q, d in cpp.atoms if x <= q <= y], default=0.0) for x, y in zip(xs, ys)]
    assert np.array_equal(cpp.T(xs, ys), np.array(brute))
    assert isinstance(cpp.T(1.0, 2.0), float)
    with pytest.raises(DomainError):
        cpp.T(2.0, 1.0)


def test_prolific_points():
    rng = np.random.default_rng(8)
    p = Fe.FellerParams(2.0, -1.0)
    counts = [Fe.prolific_points(p, 10.0, rng).size for _ in range(4000)]
    m, se = S.mean_and_se(counts)
    assert S.z_test(m, 10.0, se).passed
    first_a, first_b = [], []
    while len(first_a) < 2000:
        a = Fe.prolific_points(p, 20.0, rng)
        b = Fe.sample_cpp(p, 20.0, rng, t_min=1.0).infinite_positions()
        if a.size and b.size:
            first_a.append(a[0])
            first_b.append(b[0])
    assert S.ks_2sample(first_a, first_b).passed
    assert S.ks_test(first_a, stats.expon().cdf).passed
    with pytest.raises(DomainError):
        Fe.prolific_points(Fe.FellerParams(2.0, 0.0), 10.0, rng)


def test_binary_merging():
    rng = np.random.default_rng(9)
    p = Fe.FellerParams(2.0, 0.0)
    assert all(Fe.binary_merging_check(p, [0.0, 0.5, 1.0], rng) for _ in range(1000))
    times = []
    ok = [Fe.binary_merging_check(p, np.sort(rng.uniform(0, 5, 6)), rng, times) for _ in range(100000)]
    assert all(ok) and len(times) == 100000
    with pytest.raises(DomainError):
        Fe.binary_merging_check(p, [0.0, 0.0, 1.0], rng)
    with pytest.raises(DomainError):
        Fe.binary_merging_check(p, [0.0, 1.0], rng)


def test_csv_export():
    rng = np.random.default_rng(10)
    cpp = Fe.sample_cpp(Fe.FellerParams(2.0, -1.0), 5.0, rng, t_min=0.5)
    rows = list(csv.reader(io.StringIO(cpp.to_csv())))
    assert rows[0] == ["x", "depth"] and len(rows) == len(cpp) + 1
    back = np.array([float(r[1]) for r in rows[1:]])
    assert np.array_equal(back, cpp.depths)
    assert ("inf" in [r[1] for r in rows[1:]]) == bool(np.isinf(cpp.depths).any())
