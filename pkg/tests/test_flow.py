import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from csbp import flow as F
from csbp import mechanism as M
from csbp.errors import DomainError, RangeError


def bisect_inverse(path, y, tol=1e-12):
    """Oracle: smallest x with X(x) > y by bisection on the monotone path."""
    lo, hi = 0.0, min(path.horizon, path.kill)
    if F.evaluate(path, hi) <= y and not math.isinf(path.kill if path.kill <= path.horizon else 0.0):
        return None
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if F.evaluate(path, mid) > y:
            hi = mid
        else:
            lo = mid
        if hi - lo < tol:
            break
    return hi


@st.composite
def paths(draw):
    n = draw(st.integers(0, 8))
    locs = sorted(set(draw(st.lists(st.floats(0.01, 9.99), min_size=n, max_size=n))))
    sizes = draw(st.lists(st.floats(0.05, 3.0), min_size=len(locs), max_size=len(locs)))
    drift = draw(st.sampled_from([0.0, 0.5, 1.0]))
    if drift == 0.0 and not locs:
        locs, sizes = [5.0], [1.0]
    return F.SubordinatorPath(drift, np.array(locs), np.array(sizes), 10.0)


def test_evaluate_and_inverse_examples():
    p = F.SubordinatorPath(0.0, np.array([1.0, 2.0]), np.array([0.5, 1.5]), 3.0)
    assert F.evaluate(p, 0.5) == 0.0
    assert F.evaluate(p, 1.0) == 0.5
    assert F.evaluate(p, 2.5) == 2.0
    assert F.right_inverse(p, 0.0) == 1.0
    assert F.right_inverse(p, 0.49) == 1.0
    assert F.right_inverse(p, 0.5) == 2.0
    with pytest.raises(RangeError):
        F.right_inverse(p, 2.0)
    q = F.SubordinatorPath(1.0, np.array([1.0]), np.array([2.0]), 5.0)
    assert F.right_inverse(q, 0.5) == pytest.approx(0.5)
    assert F.right_inverse(q, 1.5) == 1.0
    assert F.right_inverse(q, 3.5) == pytest.approx(1.5)


def test_killed_path():
    p = F.SubordinatorPath(1.0, np.array([1.0, 3.0]), np.array([1.0, 1.0]), 5.0, kill=2.0)
    assert F.evaluate(p, 1.5) == 2.5
    assert F.evaluate(p, 2.0) == math.inf
    assert F.right_inverse(p, 1e6) == 2.0


@settings(max_examples=200, deadline=None)
@given(paths(), st.floats(0.0, 12.0))
def test_right_inverse_matches_bisection(path, y):
    oracle = bisect_inverse(path, y)
    if oracle is None or oracle >= path.horizon:
        with pytest.raises(RangeError):
            F.right_inverse(path, y)
        return
    assert F.right_inverse(path, y) == pytest.approx(oracle, abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(paths())
def test_right_inverse_vectorized(path):
    ys = np.linspace(0, 0.9 * path.end_value(), 17)
    vec = F.right_inverse(path, ys)
    assert np.allclose(vec, [F.right_inverse(path, y) for y in ys])
    assert np.all(np.diff(vec) >= 0)


def test_compose_and_concatenate():
    inner = F.SubordinatorPath(0.0, np.array([1.0, 2.0]), np.array([1.0, 2.0]), 3.0)
    outer = F.SubordinatorPath(0.0, np.array([0.5, 2.5]), np.array([4.0, 1.0]), 3.0)
    comp = F.compose(outer, inner)
    assert comp.locs.tolist() == [1.0, 2.0] and comp.sizes.tolist() == [4.0, 1.0]
    xs = np.linspace(0, 3, 31)
    assert np.allclose(F.evaluate(comp, xs), F.evaluate(outer, F.evaluate(inner, xs)))
    cat = F.concatenate(inner, outer)
    assert cat.horizon == 6.0 and cat.end_value() == 8.0
    rows = F.to_csv_rows(inner)
    assert rows[0] == (0.0, 0.0) and rows[-1] == (3.0, 3.0) and (2.0, 1.0) in rows


def test_invalid_paths():
    with pytest.raises(DomainError):
        F.SubordinatorPath(0.0, np.array([2.0, 1.0]), np.array([1.0, 1.0]), 3.0)
    with pytest.raises(DomainError):
        F.SubordinatorPath(-1.0, np.array([]), np.array([]), 3.0)
    with pytest.raises(DomainError):
        F.sample_feller_forward(0.0, 0.0, 1.0, 1.0, np.random.default_rng(0))


@pytest.mark.parametrize("mech,t,q", [
    (M.feller(2.0, 0.0), 1.0, 1.0),
    (M.feller(1.0, 0.7), 0.6, 2.5),
    (M.feller(2.0, -0.5), 1.5, 0.3),
    (M.neveu(), 0.5, 1.0),
    (M.neveu(beta=0.3), 1.2, 4.0),
])
def test_inverse_flow_at_exponential_level(mech, t, q):
    rng = np.random.default_rng(11)
    x = F.semigroup_exponential_sample(mech, t, q, rng, size=4000)
    rate = M.v(mech, t, q)
    assert stats.kstest(x, stats.expon(scale=1 / rate).cdf).pvalue > 1e-3


def test_feller_inverse_is_right_inverse_of_forward():
    # one-step coupling: both constructions give the same law of hat X_t(y)
    rng = np.random.default_rng(5)
    s2, b, t, y = 2.0, 0.4, 0.8, 1.7
    a = [F.right_inverse(F.sample_feller_forward(s2, b, t, 60.0, rng), y) for _ in range(3000)]
    c = [F.evaluate(F.sample_feller_inverse(s2, b, t, y, rng), y) for _ in range(3000)]
    assert stats.ks_2samp(a, c).pvalue > 1e-3


def test_feller_forward_laplace():
    rng = np.random.default_rng(3)
    mech = M.feller(2.0, 0.3)
    x, t, lam = 1.3, 0.7, 0.8
    vals = np.array([F.sample_feller_forward(2.0, 0.3, t, x, rng).end_value() for _ in range(20000)])
    est = np.exp(-lam * vals).mean()
    se = np.exp(-lam * vals).std() / math.sqrt(vals.size)
    assert abs(est - math.exp(-x * M.v(mech, t, lam))) < 4 * se


def test_positive_stable_laplace():
    rng = np.random.default_rng(1)
    for a in (0.3, 0.6, 0.9):
        s = F.sample_positive_stable(a, rng, 40000)
        for lam in (0.5, 1.0, 3.0):
            e = np.exp(-lam * s)
            assert abs(e.mean() - math.exp(-lam ** a)) < 4 * e.std() / 200 + 1e-4


def test_stable_path_laplace():
    rng = np.random.default_rng(2)
    a, scale, d, kill, x, lam = 0.5, 0.7, 0.3, 0.2, 2.0, 1.5
    vals = np.array([F.sample_stable_path(a, scale, x, rng, drift=d, kill=kill, eps=1e-4).end_value()
                     if True else 0 for _ in range(20000)])
    paths_killed = np.array([np.isinf(v) for v in vals])
    e = np.where(paths_killed, 0.0, np.exp(-lam * np.where(paths_killed, 0.0, vals)))
    target = math.exp(-x * (d * lam + scale * lam ** a + kill))
    assert abs(e.mean() - target) < 4 * e.std() / math.sqrt(e.size) + 1e-3


def test_neveu_forward_marginal():
    rng = np.random.default_rng(4)
    t, x, lam = 0.5, 1.0, 2.0
    direct = F.sample_neveu_marginal(t, x, rng, 20000)
    target = math.exp(-x * lam ** math.exp(-t))
    e = np.exp(-lam * direct)
    assert abs(e.mean() - target) < 4 * e.std() / math.sqrt(e.size)


def test_entrance_laws():
    rng = np.random.default_rng(9)
    mech = M.feller(2.0, 0.5)
    x = F.entrance_sample(mech, 1.0, 0, rng, 3000)
    assert stats.kstest(x, stats.expon(scale=1 / M.v_inf(mech, 1.0)).cdf).pvalue > 1e-3
    with pytest.raises(DomainError):
        F.entrance_sample(mech, 1.0, math.inf, rng)


def test_drift_closed_forms():
    # stable with unit density coefficient: b(z) = z^{2-a}/(a(a-1)(2-a)) - beta z
    for alpha, beta in ((1.5, 0.0), (1.3, 0.4), (1.8, -0.2)):
        c = math.gamma(2 - alpha) / (alpha * (alpha - 1))
        mech = M.stable(alpha, c, beta)
        for z in (0.3, 1.0, 2.7):
            exact = z ** (2 - alpha) / (alpha * (alpha - 1) * (2 - alpha)) - beta * z
            assert F.drift_b(mech, z) == pytest.approx(exact, rel=1e-6, abs=1e-9)
            assert F.drift_b_general(mech, z) == pytest.approx(exact, rel=1e-6, abs=1e-9)
    for beta in (0.0, 0.5):
        mech = M.neveu(beta=beta)
        for z in (0.2, 1.0, 3.0):
            exact = (1 - np.euler_gamma) * z - z * math.log(z) - beta * z
            assert F.drift_b(mech, z) == pytest.approx(exact, rel=1e-6, abs=1e-9)


def test_drift_routes_agree_tempered():
    dens = M.TabulatedDensity(lambda x: x ** -2.5 * math.exp(-x), name="tempered")
    mech = M.BranchingMechanism(0.5, 0.2, dens)
    for z in (0.4, 1.0, 2.5):
        assert F.drift_b_general(mech, z) == pytest.approx(F.drift_b_finite_mean(mech, z), rel=1e-6)


def test_jump_density_closed_forms():
    z = 1.7
    h = np.linspace(0.05, z, 9)
    assert np.allclose(F.jump_density(M.neveu(), z, h), z / h ** 2)
    mech = M.stable(1.5, math.gamma(0.5) / 0.75)
    assert np.allclose(F.jump_density(mech, z, h), (z - h) * h ** -2.5 + h ** -1.5 / 1.5)
    # generator jump part against direct quadrature on the closed-form kernel
    f = lambda x: math.exp(-0.8 * x)
    fp = lambda x: -0.8 * math.exp(-0.8 * x)
    fpp = lambda x: 0.64 * math.exp(-0.8 * x)
    direct = integrate.quad(lambda u: (f(z - u) - f(z) + u * fp(z)) * z / u ** 2, 0, z, epsabs=1e-13)[0]
    total = F.generator_apply(M.neveu(), f, fp, fpp, z)
    assert total - F.drift_b(M.neveu(), z) * fp(z) == pytest.approx(direct, rel=1e-6)


def test_feller_generator():
    mech = M.feller(2.0, 0.6)
    f, fp, fpp = math.sin, math.cos, lambda x: -math.sin(x)
    for z in (0.5, 2.0):
        assert F.generator_apply(mech, f, fp, fpp, z) == pytest.approx(z * fpp(z) + (1 - 0.6 * z) * fp(z))


@pytest.mark.parametrize("mech", [M.neveu(), M.stable(1.5, 1.0, 0.3), M.stable(0.6, 0.5, 0.0, 0.4)],
                         ids=["neveu", "stable15", "stable06"])
def test_generator_duality_with_cumulant(mech):
    # z ~ Exp(q) gives hat X_t(z) ~ Exp(v_t(q)); differentiate E exp(-lam hat X_t) at t = 0
    q, lam = 1.3, 0.7
    f = lambda x: math.exp(-lam * x)
    fp = lambda x: -lam * math.exp(-lam * x)
    fpp = lambda x: lam * lam * math.exp(-lam * x)
    g = lambda z: q * math.exp(-q * z) * F.generator_apply(mech, f, fp, fpp, z)
    lhs = integrate.quad(g, 0, 1, epsabs=1e-10, limit=100)[0] + integrate.quad(g, 1, np.inf, epsabs=1e-10, limit=100)[0]
    rhs = -M.psi_eval(mech, q) * lam / (q + lam) ** 2
    assert lhs == pytest.approx(rhs, rel=1e-5, abs=1e-8)
