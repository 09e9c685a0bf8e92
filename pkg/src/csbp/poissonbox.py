"""(lambda, phi)-Poisson boxes: the consecutive partition obtained by pulling a
rate-lambda Poisson process back through a subordinator with exponent phi.

Two constructions are provided: i.i.d. block sizes from the exact law, and the
pathwise pullback (path + arrivals + right-continuous inversion).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import special

from . import flow
from . import mechanism as M
from .errors import DomainError, RangeError
from .partition import INF, ConsecutivePartition, restrict


@dataclass(frozen=True, eq=False)
class LaplaceExponent:
    """phi(mu) = kill + drift*mu + sum c mu^a + sum K mu/(mu+B) + sum m (1-e^{-mu h}) + int (1-e^{-mu x}) l(x) dx.

    The rational terms are compound Poisson parts with rate K and Exp(B) jumps.
    ``phi_fn`` holds an opaque exponent with no known Levy measure.
    """

    drift: float = 0.0
    kill: float = 0.0
    powers: tuple = ()
    rationals: tuple = ()
    atoms: tuple = ()
    density: Optional[Callable] = None
    phi_fn: Optional[Callable] = None
    provenance: str = "explicit"

    def __post_init__(self):
        if self.drift < 0 or self.kill < 0:
            raise DomainError("drift and kill must be >= 0")
        for c, a in self.powers:
            if not (c > 0 and 0 < a < 1):
                raise DomainError("power terms need c > 0 and a in (0, 1)")
        for k, b in self.rationals:
            if not (k > 0 and b > 0):
                raise DomainError("rational terms need K > 0 and B > 0")
        for h, m in self.atoms:
            if not (h > 0 and m > 0):
                raise DomainError("atoms need positive size and mass")
        if self.phi_fn is not None and (self.powers or self.rationals or self.atoms or self.density or self.drift):
            raise DomainError("an opaque exponent cannot be combined with explicit parts")

    @property
    def structured(self) -> bool:
        return self.phi_fn is None

    def __call__(self, mu):
        mu = float(mu)
        if mu < 0:
            raise DomainError("phi is evaluated on mu >= 0")
        if self.phi_fn is not None:
            return float(self.phi_fn(mu))
        val = self.kill + self.drift * mu
        for c, a in self.powers:
            val += c * mu ** a
        for k, b in self.rationals:
            val += k * mu / (mu + b)
        for h, m in self.atoms:
            val -= m * math.expm1(-mu * h)
        if self.density is not None:
            val += _density_integral(self.density, lambda x: -math.expm1(-mu * x))
        return val

    def check(self, grid=None) -> bool:
        """phi(0) = kill and phi nondecreasing, concave on a grid."""
        grid = np.geomspace(1e-3, 1e3, 61) if grid is None else np.asarray(grid)
        if abs(self(0.0) - self.kill) > 1e-12 * max(1.0, self.kill):
            return False
        vals = np.array([self(g) for g in grid])
        if np.any(np.diff(vals) < -1e-12 * np.abs(vals[1:])):
            return False
        slopes = np.diff(vals) / np.diff(grid)
        return bool(np.all(np.diff(slopes) <= 1e-9 * np.abs(slopes[1:]) + 1e-12))


def _density_integral(dens, g):
    f = lambda x: g(x) * dens(x)
    return sum(M._integrate(f, lo, hi) for lo, hi in ((0.0, 1e-6), (1e-6, 1e-3), (1e-3, 1.0), (1.0, np.inf)))


def power(c: float, a: float, kill: float = 0.0, drift: float = 0.0) -> LaplaceExponent:
    return LaplaceExponent(drift=drift, kill=kill, powers=((c, a),), provenance=f"power c={c} a={a}")


def pure_drift(d: float) -> LaplaceExponent:
    return LaplaceExponent(drift=d, provenance=f"drift {d}")


def killed(base: LaplaceExponent, kappa: float) -> LaplaceExponent:
    if base.phi_fn is not None:
        raise DomainError("cannot add killing to an opaque exponent")
    return LaplaceExponent(base.drift, base.kill + kappa, base.powers, base.rationals, base.atoms, base.density,
                           provenance=f"{base.provenance} + kill {kappa}")


def compound_poisson(atoms) -> LaplaceExponent:
    return LaplaceExponent(atoms=tuple((float(h), float(m)) for h, m in atoms), provenance="compound Poisson")


def opaque(phi: Callable, kill: Optional[float] = None) -> LaplaceExponent:
    k = float(phi(0.0)) if kill is None else kill
    return LaplaceExponent(kill=k, phi_fn=phi, provenance="opaque")


def from_mechanism(mech: M.BranchingMechanism, t: float) -> LaplaceExponent:
    """mu -> v_t(mu) as a structured exponent where the family allows it."""
    if not t > 0:
        raise DomainError("t must be > 0")
    name = f"v_t, t={t}"
    if mech.is_feller:
        # v_t(mu) = K mu / (mu + B), K = v_t(inf), B = beta_hat_t
        k = flow.feller_jump_rate(mech.sigma2, mech.beta, t)
        b = flow.feller_beta_hat(mech.sigma2, mech.beta, t)
        return LaplaceExponent(rationals=((k, b),), provenance="Feller " + name)
    lv = mech.levy
    if isinstance(lv, M.Neveu) and mech.sigma2 == 0:
        a = math.exp(-t)
        return LaplaceExponent(powers=((math.exp(mech.beta * (1 - a)), a),), provenance="Neveu " + name)
    if isinstance(lv, M.Stable) and lv.alpha == 0.5 and mech.sigma2 == 0 and mech.beta == 0:
        # Psi = -c q^{1/2}: sqrt(v) = sqrt(mu) + c t / 2
        h = 0.5 * lv.c * t
        return LaplaceExponent(drift=1.0, kill=h * h, powers=((2 * h, 0.5),), provenance="stable-1/2 " + name)
    return opaque(lambda mu: M.v(mech, t, mu) if mu > 0 else M.v_zero(mech, t) if M.grey(mech).explosion else 0.0)


# ---------------------------------------------------------------------------
# Exact block-size law


def _component_terms(phi: LaplaceExponent, lam: float, ks: np.ndarray):
    """phi(lam) P(K = k) and phi(lam) P(k < K < inf) for each k in ks."""
    ks = np.asarray(ks, dtype=float)
    pm = np.zeros_like(ks)
    sf = np.zeros_like(ks)
    pm += phi.drift * lam * (ks == 1)
    # drift contributes only singletons; its survival beyond k >= 1 is 0
    sf += phi.drift * lam * (ks < 1)
    for c, a in phi.powers:
        base = c * lam ** a
        # Gamma(k+1-a)/Gamma(k+1) via poch, which keeps precision for huge k
        ratio = 1.0 / (special.poch(ks + 1 - a, a) * special.gamma(1 - a))
        pm += base * a * ratio / (ks - a)
        sf += base * ratio
    for k, b in phi.rationals:
        r = lam / (lam + b)
        pm += k * b / (lam + b) * r ** ks
        sf += k * r ** (ks + 1)
    for h, m in phi.atoms:
        mu = lam * h
        pm += m * np.exp(ks * math.log(mu) - mu - special.gammaln(ks + 1))
        sf += m * special.gammainc(ks + 1, mu)
    if phi.density is not None:
        for i, kk in enumerate(ks):
            kk = int(kk)
            pm[i] += _density_integral(phi.density, lambda x: math.exp(kk * math.log(lam * x) - lam * x
                                                                        - math.lgamma(kk + 1)))
            sf[i] += _density_integral(phi.density, lambda x: special.gammainc(kk + 1, lam * x))
    return pm, sf


@dataclass(frozen=True, eq=False)
class BlockSizeLaw:
    """Law of #C_1 on {1, 2, ...} u {inf}; pmf[k-1] = P(K = k) for k <= k_max."""

    pmf: np.ndarray
    p_inf: float
    tail: float
    sf: Optional[Callable] = None
    _cdf: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_cdf", np.cumsum(self.pmf))
        total = self._cdf[-1] + self.tail + self.p_inf
        if abs(total - 1.0) > 1e-9:
            raise RangeError(f"block-size law sums to {total!r}")

    @property
    def k_max(self) -> int:
        return self.pmf.size

    def prob(self, k) -> float:
        if k == INF:
            return self.p_inf
        if 1 <= k <= self.k_max:
            return float(self.pmf[k - 1])
        if self.sf is not None and k > self.k_max:
            return float(self.sf(k - 1) - self.sf(k))
        return 0.0

    def survival(self, k) -> float:
        """P(k < K < inf)."""
        if k < self.k_max:
            return float(self._cdf[-1] - (self._cdf[k - 1] if k >= 1 else 0.0) + self.tail)
        if self.sf is None:
            raise DomainError("no analytic tail beyond k_max")
        return float(self.sf(k))

    def gf_truncated(self, s: float) -> float:
        """sum_{k <= k_max} P(K = k) s^k; the neglected part is below tail * s^k_max."""
        ks = np.arange(1, self.k_max + 1)
        return float(np.sum(self.pmf * s ** ks))

    def sample(self, rng, size: int) -> np.ndarray:
        """i.i.d. sizes as floats (inf for the infinite block)."""
        u = rng.random(size)
        idx = np.searchsorted(self._cdf, u, side="right")
        out = (idx + 1).astype(float)
        beyond = idx >= self.k_max
        if np.any(beyond):
            for i in np.flatnonzero(beyond):
                out[i] = self._invert_tail(u[i])
        return out

    def _invert_tail(self, u: float) -> float:
        if u >= 1.0 - self.p_inf:
            return INF
        if self.sf is None:
            return float(self.k_max + 1)
        # smallest k > k_max with P(K <= k) >= u, i.e. sf(k) <= 1 - p_inf - u
        target = 1.0 - self.p_inf - u
        lo, hi = self.k_max, 2 * self.k_max
        while self.sf(hi) > target:
            lo, hi = hi, 2 * hi
            if hi > 1e18:
                return float(hi)
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if self.sf(mid) > target:
                lo = mid
            else:
                hi = mid
        return float(hi)


def block_size_law(phi: LaplaceExponent, lam: float, k_max: int = 2000) -> BlockSizeLaw:
    if not lam > 0:
        raise DomainError("lambda must be > 0")
    if not phi.structured:
        raise DomainError("block-size law needs a structured exponent (derivatives or Levy measure)")
    total = phi(lam)
    if not total > 0:
        raise DomainError("phi(lambda) must be > 0")
    ks = np.arange(1, k_max + 1)
    pm, _ = _component_terms(phi, lam, ks)
    pmf = pm / total
    p_inf = phi.kill / total

    def sf(k):
        return float(_component_terms(phi, lam, np.array([k]))[1][0] / total)

    tail = sf(k_max)
    mass = pmf.sum() + p_inf
    # the tail is analytic for every structured component
    if abs(mass + tail - 1.0) > 1e-9:
        raise RangeError(f"pmf plus tail misses unit mass by {mass + tail - 1.0:.3g}")
    return BlockSizeLaw(pmf, p_inf, tail, sf)


def block_gf(phi: LaplaceExponent, lam: float, s: float) -> float:
    """E[s^{#C_1}] = 1 - phi(lam (1 - s)) / phi(lam)."""
    return 1.0 - phi(lam * (1.0 - s)) / phi(lam)


# ---------------------------------------------------------------------------
# Direct construction


def sample_box_direct(law: BlockSizeLaw, n: int, rng) -> ConsecutivePartition:
    """Restriction to [n] of a box with i.i.d. block sizes."""
    sizes, acc = [], 0.0
    while acc < n:
        batch = law.sample(rng, max(8, int(n - acc)))
        for s in batch:
            sizes.append(s)
            acc += s
            if acc >= n:
                break
    return restrict(ConsecutivePartition(tuple(sizes)), n)


def direct_block_sizes(law: BlockSizeLaw, n_blocks: int, rng) -> np.ndarray:
    return law.sample(rng, n_blocks)


# ---------------------------------------------------------------------------
# Pullback construction


def path_sampler(phi: LaplaceExponent, eps: float = 1e-3):
    """Sampler (horizon, rng) -> SubordinatorPath for a structured exponent.

    Power terms use jumps above ``eps`` plus the mean of the smaller ones as drift.
    """
    if not phi.structured or phi.density is not None:
        raise DomainError("pathwise sampling needs drift, kill, power, rational or atomic parts only")

    def sample(horizon, rng):
        locs, sizes = [], []
        d = phi.drift
        for c, a in phi.powers:
            p = flow.sample_stable_path(a, c, horizon, rng, eps=eps)
            locs.append(p.locs)
            sizes.append(p.sizes)
            d += p.drift
        for k, b in phi.rationals:
            n = rng.poisson(k * horizon)
            locs.append(rng.uniform(0.0, horizon, n))
            sizes.append(rng.exponential(1.0 / b, n))
        for h, m in phi.atoms:
            n = rng.poisson(m * horizon)
            locs.append(rng.uniform(0.0, horizon, n))
            sizes.append(np.full(n, h))
        loc = np.concatenate(locs) if locs else np.empty(0)
        size = np.concatenate(sizes) if sizes else np.empty(0)
        order = np.argsort(loc, kind="stable")
        zeta = rng.exponential(1.0 / phi.kill) if phi.kill > 0 else math.inf
        return flow.SubordinatorPath(d, loc[order], size[order], float(horizon), kill=zeta)

    return sample


def _concat_until(sub_sampler, rng, chunk, level, max_chunks):
    """Glue independent path pieces until the path exceeds ``level`` or is killed."""
    path = sub_sampler(chunk, rng)
    for _ in range(max_chunks):
        if path.kill <= path.horizon or path.end_value() > level:
            return path
        path = flow.concatenate(path, sub_sampler(chunk, rng))
    raise RangeError("path horizon exhausted before the requested number of arrivals")


def sample_box_pullback(sub_sampler, lam: float, n: int, rng, chunk: float = 1.0, max_chunks: int = 10 ** 5):
    """Literal pullback: J_1 < ... < J_n from a rate-lam Poisson process, blocks
    = level sets of x -> X^{-1}(J_i).  Returns the partition of [n] and the
    distinct inverse values J' (the last entry is the kill location when the
    final block is infinite)."""
    if n < 1:
        raise DomainError("n must be >= 1")
    if not lam > 0:
        raise DomainError("lambda must be > 0")
    arrivals = np.cumsum(rng.exponential(1.0 / lam, n))
    path = _concat_until(sub_sampler, rng, chunk, arrivals[-1], max_chunks)
    xs = flow.right_inverse(path, arrivals)
    vals, counts = np.unique(xs, return_counts=True)
    return ConsecutivePartition(tuple(int(c) for c in counts)), vals


def pullback_stream(sub_sampler, lam: float, rng, chunk: float, max_chunks: int = 10 ** 6):
    """Yield (block sizes, J' values) chunk by chunk; a final inf block ends a killed path.

    Arrivals are never enumerated: a jump of size h receives Poisson(lam h)
    arrivals, and the drift part receives singleton arrivals at rate lam * drift,
    which is the same law as pulling back individual arrivals because counts in
    disjoint level intervals are independent Poisson.  Successive chunks are
    independent pieces glued end to end (stationary independent increments).
    """
    if not lam > 0:
        raise DomainError("lambda must be > 0")
    x_off = 0.0
    for _ in range(max_chunks):
        path = sub_sampler(chunk, rng)
        is_killed = path.kill <= path.horizon
        span = path.kill if is_killed else path.horizon
        keep = path.locs < span
        locs, hs = path.locs[keep], path.sizes[keep]
        cnt = rng.poisson(lam * hs)
        hit = cnt > 0
        m = rng.poisson(lam * path.drift * span) if path.drift > 0 else 0
        pos = rng.uniform(0.0, span, m)
        jp = np.concatenate((locs[hit], pos))
        sizes = np.concatenate((cnt[hit].astype(float), np.ones(m)))
        order = np.argsort(jp, kind="stable")
        jp, sizes = jp[order] + x_off, sizes[order]
        if is_killed:
            yield np.append(sizes, INF), np.append(jp, x_off + path.kill)
            return
        yield sizes, jp
        x_off += path.horizon
    raise RangeError("path horizon exhausted")


def pullback_block_sizes(sub_sampler, lam: float, n_blocks: int, rng, chunk: float = 1.0,
                         max_chunks: int = 10 ** 6):
    """First ``n_blocks`` complete blocks (fewer if the path is killed) and their J'."""
    sizes, jps = [], []
    total = 0
    for s, jp in pullback_stream(sub_sampler, lam, rng, chunk, max_chunks):
        sizes.append(s)
        jps.append(jp)
        total += s.size
        # one extra block guarantees the n-th is complete
        if total > n_blocks:
            break
    s = np.concatenate(sizes)
    jp = np.concatenate(jps)
    if np.isinf(s[-1]):
        return s[:n_blocks], jp[:n_blocks]
    if s.size <= n_blocks:
        raise RangeError("stream ended early")
    return s[:n_blocks], jp[:n_blocks]


def pullback_block_count(sub_sampler, lam: float, rng, chunk: float = 1.0, max_chunks: int = 10 ** 6) -> int:
    """Total number of blocks of a killed box (the inf block included).

    Same law as counting the blocks of pullback_stream, without placing the
    drift singletons.
    """
    if not lam > 0:
        raise DomainError("lambda must be > 0")
    count = 0
    for _ in range(max_chunks):
        path = sub_sampler(chunk, rng)
        is_killed = path.kill <= path.horizon
        span = path.kill if is_killed else path.horizon
        hs = path.sizes[path.locs < span]
        count += int(np.count_nonzero(rng.poisson(lam * hs)))
        if path.drift > 0:
            count += int(rng.poisson(lam * path.drift * span))
        if is_killed:
            return count + 1
    raise RangeError("path was not killed")  # pragma: no cover


def binned_histogram(sizes, edges=None) -> tuple:
    """Counts over bins 1..10 then dyadic (11-16, 17-32, ...), with inf in its own cell."""
    sizes = np.asarray(sizes, dtype=float)
    if edges is None:
        edges = default_bin_edges()
    fin = sizes[np.isfinite(sizes)]
    idx = np.searchsorted(edges, fin, side="right") - 1
    counts = np.bincount(idx, minlength=len(edges))
    return np.append(counts, np.sum(~np.isfinite(sizes))), edges


def default_bin_edges(top: float = 2.0 ** 62):
    edges = list(range(1, 11)) + [11]
    e = 16
    while e < top:
        edges.append(e + 1)
        e *= 2
    return np.array(edges, dtype=float)


def binned_law(law: BlockSizeLaw, edges=None) -> np.ndarray:
    """Exact bin probabilities matching binned_histogram."""
    if edges is None:
        edges = default_bin_edges()
    out = np.zeros(len(edges) + 1)
    for i, lo in enumerate(edges):
        hi = edges[i + 1] if i + 1 < len(edges) else None
        # P(lo <= K < hi) = S(lo - 1) - S(hi - 1)
        s_lo = law.survival(int(lo) - 1)
        s_hi = law.survival(int(hi) - 1) if hi is not None else 0.0
        out[i] = max(s_lo - s_hi, 0.0)
    out[-1] = law.p_inf
    return out
