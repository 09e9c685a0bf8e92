import math

import numpy as np
import pytest
from scipy import stats

from csbp import flow as F
from csbp import mechanism as M
from csbp import poissonbox as B
from csbp import stats as S
from csbp.errors import DomainError
from csbp.partition import INF, ConsecutivePartition, zero


def geometric_fit(counts, p, k_top=24):
    """Histogram over 1..k_top plus an overflow cell, against Geometric(p) on {1, 2, ...}."""
    counts = np.asarray(counts)
    hist = np.append(np.bincount(np.minimum(counts, k_top + 1), minlength=k_top + 2)[1:k_top + 1],
                     np.sum(counts > k_top))
    ks = np.arange(1, k_top + 1)
    probs = np.append(stats.geom(p).pmf(ks), stats.geom(p).sf(k_top))
    return S.chi_square(hist, probs)


def test_block_law_examples():
    law = B.block_size_law(B.power(1.0, 0.5), 1.0)
    assert law.prob(1) == pytest.approx(0.5)
    # 1 - (1-s)^{1/2} = s/2 + s^2/8 + s^3/16 + ...
    assert law.prob(2) == pytest.approx(1 / 8)
    assert law.prob(3) == pytest.approx(1 / 16)
    assert B.block_size_law(B.pure_drift(2.0), 1.0).prob(1) == pytest.approx(1.0)
    law = B.block_size_law(B.killed(B.pure_drift(1.0), 0.5), 1.0)
    assert law.p_inf == pytest.approx(0.5 / 1.5)


def test_neveu_block_law_product_formula():
    t = 0.7
    a = math.exp(-t)
    law = B.block_size_law(B.from_mechanism(M.neveu(), t), 2.0)
    prod = a
    for k in range(1, 12):
        if k > 1:
            prod *= (k - 1 - a)
        assert law.prob(k) == pytest.approx(prod / math.factorial(k), rel=1e-12)


def test_feller_block_law_is_geometric():
    mech = M.feller(2.0, 0.4)
    t, lam = 0.9, 1.7
    law = B.block_size_law(B.from_mechanism(mech, t), lam)
    p = lam / (lam + F.feller_beta_hat(2.0, 0.4, t))
    for k in (1, 2, 5, 30):
        assert law.prob(k) == pytest.approx((1 - p) * p ** (k - 1), rel=1e-12)


@pytest.mark.parametrize("phi,lam", [
    (B.power(1.3, 0.4), 0.8),
    (B.LaplaceExponent(drift=0.5, kill=0.2, powers=((1.0, 0.6),), rationals=((2.0, 1.5),)), 1.1),
    (B.compound_poisson([(0.5, 1.0), (3.0, 0.2)]), 2.0),
    (B.LaplaceExponent(density=lambda x: x ** -1.5 * math.exp(-x)), 1.0),
])
def test_block_law_generating_function(phi, lam):
    law = B.block_size_law(phi, lam, k_max=3000)
    assert law.pmf.sum() + law.tail + law.p_inf == pytest.approx(1.0, abs=1e-9)
    for s in (0.2, 0.5, 0.8):
        assert law.gf_truncated(s) == pytest.approx(B.block_gf(phi, lam, s), abs=1e-9)


def test_block_law_needs_structure():
    with pytest.raises(DomainError):
        B.block_size_law(B.opaque(lambda mu: mu ** 0.5), 1.0)


def test_exponent_invariants():
    for phi in (B.power(1.0, 0.3), B.from_mechanism(M.feller(1.0, -0.5), 1.0), B.killed(B.power(2, 0.5), 0.1),
                B.from_mechanism(M.stable(0.5, 1.0), 0.3)):
        assert phi.check()
    phi = B.from_mechanism(M.stable(0.5, 1.0), 0.3)
    for mu in (0.0, 0.5, 4.0):
        target = M.v_zero(M.stable(0.5, 1.0), 0.3) if mu == 0 else M.v(M.stable(0.5, 1.0), 0.3, mu)
        assert phi(mu) == pytest.approx(target, rel=1e-12)


def test_direct_examples():
    rng = np.random.default_rng(0)
    law = B.block_size_law(B.pure_drift(1.0), 1.0)
    assert B.sample_box_direct(law, 7, rng) == zero(7)
    law = B.block_size_law(B.killed(B.pure_drift(1.0), 0.5), 1.0)
    counts = []
    for _ in range(3000):
        sizes = law.sample(rng, 200)
        counts.append(int(np.argmax(np.isinf(sizes))) + 1)
    # total number of blocks is geometric with success probability kappa/phi(lam)
    assert geometric_fit(counts, 1 / 3).passed


def test_direct_histogram_chi_square():
    rng = np.random.default_rng(1)
    law = B.block_size_law(B.power(1.0, 0.6), 1.0)
    hist, _ = B.binned_histogram(law.sample(rng, 100000))
    assert S.chi_square(hist, B.binned_law(law)).passed


def test_pullback_pure_drift():
    rng = np.random.default_rng(2)
    sub = lambda h, r: F.SubordinatorPath(2.0, np.empty(0), np.empty(0), h)
    arrivals_rng = np.random.default_rng(2)
    part, jp = B.sample_box_pullback(sub, 1.0, 50, rng, chunk=5.0)
    assert part == zero(50)
    j = np.cumsum(arrivals_rng.exponential(1.0, 50))
    assert np.allclose(jp, j / 2)


def test_pullback_small_example_is_consistent():
    rng = np.random.default_rng(3)
    sub = lambda h, r: F.sample_feller_forward(2.0, 0.0, 1.0, h, r)
    part, jp = B.sample_box_pullback(sub, 1.0, 40, rng, chunk=10.0)
    assert part.ground_size == 40 and part.n_blocks == jp.size
    assert np.all(np.diff(jp) > 0)


def test_pullback_killed_ends_with_infinite_block():
    rng = np.random.default_rng(4)
    phi = B.killed(B.pure_drift(1.0), 0.5)
    sizes = [B.pullback_block_count(B.path_sampler(phi), 1.0, rng, chunk=5.0) for _ in range(3000)]
    assert geometric_fit(sizes, 1 / 3).passed


@pytest.mark.parametrize("name,phi,sub", [
    ("feller", B.from_mechanism(M.feller(2.0, 0.3), 0.8), lambda h, r: F.sample_feller_forward(2.0, 0.3, 0.8, h, r)),
    ("neveu", B.from_mechanism(M.neveu(), 0.3), None),
    ("compound", B.compound_poisson([(0.7, 1.0), (2.5, 0.4)]), None),
])
def test_pullback_matches_law(name, phi, sub):
    rng = np.random.default_rng(5)
    lam = 1.0
    sub = sub or B.path_sampler(phi, eps=1e-3)
    sizes, jp = B.pullback_block_sizes(sub, lam, 30000, rng, chunk=100.0)
    law = B.block_size_law(phi, lam)
    hist, _ = B.binned_histogram(sizes)
    assert S.chi_square(hist, B.binned_law(law)).passed
    # J' is a Poisson process of rate phi(lam)
    assert S.ks_test(np.diff(jp), stats.expon(scale=1 / phi(lam)).cdf).passed
    # #C_1 independent of J'_1: correlation across blocks of (size, preceding spacing)
    gaps = np.diff(np.concatenate(([0.0], jp)))
    capped = np.minimum(sizes, 50)
    r = np.corrcoef(capped, gaps)[0, 1]
    assert abs(r) < 3 / math.sqrt(sizes.size)


def test_pullback_generating_function():
    rng = np.random.default_rng(6)
    phi = B.from_mechanism(M.neveu(), 0.5)
    sizes, _ = B.pullback_block_sizes(B.path_sampler(phi), 1.0, 40000, rng, chunk=100.0)
    for s in (0.2, 0.5, 0.8):
        m, se = S.mean_and_se(s ** sizes)
        assert S.z_test(m, B.block_gf(phi, 1.0, s), se).passed


def test_binned_histogram_cells():
    hist, edges = B.binned_histogram([1, 2, 10, 11, 16, 17, INF])
    assert hist[0] == 1 and hist[9] == 1 and hist[10] == 2 and hist[11] == 1 and hist[-1] == 1
