"""Subordinator paths, right-continuous inversion, exact samplers for the Feller
and Neveu flows, and the generator of the inverse flow's one-point motion."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import mechanism as M
from .errors import DomainError, RangeError


@dataclass(frozen=True, eq=False)
class SubordinatorPath:
    """X(x) = drift * x + sum of jump sizes at locations <= x, for x <= horizon.

    ``kill`` is the location where the path jumps to +inf (inf if never).
    """

    drift: float
    locs: np.ndarray
    sizes: np.ndarray
    horizon: float
    kill: float = math.inf
    _cum: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        locs = np.asarray(self.locs, dtype=float).reshape(-1)
        sizes = np.asarray(self.sizes, dtype=float).reshape(-1)
        if locs.shape != sizes.shape:
            raise DomainError("locs and sizes must have the same length")
        if self.drift < 0:
            raise DomainError("drift must be >= 0")
        if locs.size:
            if np.any(np.diff(locs) <= 0):
                raise DomainError("jump locations must be strictly increasing")
            if locs[0] < 0 or locs[-1] > self.horizon:
                raise DomainError("jump locations must lie in [0, horizon]")
            if np.any(sizes <= 0):
                raise DomainError("jump sizes must be positive")
        object.__setattr__(self, "locs", locs)
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "_cum", np.cumsum(sizes))

    @property
    def n_jumps(self) -> int:
        return self.locs.size

    def __call__(self, x):
        return evaluate(self, x)

    def end_value(self) -> float:
        return float(evaluate(self, self.horizon))


def evaluate(path: SubordinatorPath, x):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or np.any(x > path.horizon):
        raise RangeError("evaluation outside [0, horizon]")
    idx = np.searchsorted(path.locs, x, side="right")
    jumps = np.where(idx > 0, path._cum[np.maximum(idx - 1, 0)] if path._cum.size else 0.0, 0.0)
    out = path.drift * x + jumps
    out = np.where(x >= path.kill, np.inf, out)
    return out if out.ndim else float(out)


def right_inverse(path: SubordinatorPath, y):
    """inf{x >= 0 : X(x) > y}."""
    y = np.asarray(y, dtype=float)
    if np.any(y < 0):
        raise RangeError("right inverse is defined for y >= 0")
    locs, cum, d = path.locs, path._cum, path.drift
    kill = path.kill if path.kill <= path.horizon else math.inf
    if np.isfinite(kill):
        keep = locs < kill
        locs, cum = locs[keep], cum[keep]
    n = locs.size
    ext_locs = np.append(locs, kill)
    ext_cum = np.concatenate(([0.0], cum))
    # first jump whose right value exceeds y (index n means none)
    i = np.searchsorted(d * locs + cum, y, side="right")
    nxt = ext_locs[i]
    if d > 0:
        out = np.minimum((y - ext_cum[i]) / d, nxt)
    else:
        out = nxt
    if np.any(out > path.horizon) or np.any((i == n) & ~np.isfinite(kill) & (out >= path.horizon)):
        raise RangeError("level beyond the range of the path")
    return out if out.ndim else float(out)


def compose(outer: SubordinatorPath, inner: SubordinatorPath) -> SubordinatorPath:
    """outer o inner for a pure-jump inner path."""
    if inner.drift != 0 or np.isfinite(inner.kill):
        raise DomainError("compose needs a pure-jump, unkilled inner path")
    levels = np.concatenate(([0.0], inner._cum))
    if levels[-1] > outer.horizon:
        raise RangeError("inner path exceeds the outer horizon")
    vals = np.asarray(evaluate(outer, levels))
    sizes = np.diff(vals)
    keep = sizes > 0
    return SubordinatorPath(0.0, inner.locs[keep], sizes[keep], inner.horizon)


def concatenate(first: SubordinatorPath, second: SubordinatorPath) -> SubordinatorPath:
    """Path following ``first`` on [0, h1] and then the increments of ``second``.

    For paths with independent stationary increments this extends the horizon
    without changing the law.
    """
    if first.drift != second.drift:
        raise DomainError("concatenated paths must share their drift")
    if np.isfinite(first.kill):
        return first
    h1 = first.horizon
    locs2 = second.locs + h1
    sizes2 = second.sizes
    if second.locs.size and second.locs[0] == 0.0:
        if first.locs.size and first.locs[-1] == h1:
            raise DomainError("both paths jump at the junction")
    return SubordinatorPath(first.drift, np.concatenate((first.locs, locs2)), np.concatenate((first.sizes, sizes2)),
                            h1 + second.horizon, kill=h1 + second.kill)


def to_csv_rows(path: SubordinatorPath):
    """(location, cumulative value) rows: each jump contributes its left and right values."""
    rows = [(0.0, 0.0)]
    for a, s, h in zip(path.locs, path._cum, path.sizes):
        if a >= path.kill:
            break
        rows.append((float(a), float(path.drift * a + s - h)))
        rows.append((float(a), float(path.drift * a + s)))
    rows.append((float(path.horizon), float(path.end_value()) if np.isinf(path.kill) else math.inf))
    return rows


# ---------------------------------------------------------------------------
# Feller family


def _x_over_expm1(x: float) -> float:
    return 1.0 - x / 2.0 if abs(x) < 1e-8 else x / math.expm1(x)


def feller_beta_hat(sigma2: float, beta: float, t: float) -> float:
    """2 beta / (sigma2 (e^{beta t} - 1)), continuous through beta = 0."""
    return 2.0 / (t * sigma2) * _x_over_expm1(beta * t)


def feller_jump_rate(sigma2: float, beta: float, t: float) -> float:
    """v_t(inf) = beta_hat_t e^{beta t}."""
    return 2.0 / (t * sigma2) * _x_over_expm1(-beta * t)


def sample_feller_forward(sigma2, beta, t, horizon, rng) -> SubordinatorPath:
    """X_{-t,0} on [0, horizon]: compound Poisson, rate v_t(inf), Exp(beta_hat_t) jumps."""
    if not sigma2 > 0:
        raise DomainError("Feller flow needs sigma2 > 0")
    if not t > 0:
        raise DomainError("t must be > 0")
    rate = feller_jump_rate(sigma2, beta, t)
    bh = feller_beta_hat(sigma2, beta, t)
    n = rng.poisson(rate * horizon) if horizon > 0 else 0
    locs = np.sort(rng.uniform(0.0, horizon, n))
    sizes = rng.exponential(1.0 / bh, n)
    return SubordinatorPath(0.0, locs, sizes, float(horizon))


def sample_feller_inverse(sigma2, beta, t, y_max, rng) -> SubordinatorPath:
    """hat X_t on [0, y_max]: initial atom Exp(v_t(inf)), then jumps at rate beta_hat_t
    with Exp(v_t(inf)) sizes, so increments have exponent lam beta_hat / (lam + v_t(inf))."""
    if not sigma2 > 0:
        raise DomainError("Feller flow needs sigma2 > 0")
    if not t > 0:
        raise DomainError("t must be > 0")
    rate = feller_jump_rate(sigma2, beta, t)
    bh = feller_beta_hat(sigma2, beta, t)
    m = rng.poisson(bh * y_max) if y_max > 0 else 0
    locs = np.concatenate(([0.0], np.sort(rng.uniform(0.0, y_max, m))))
    sizes = rng.exponential(1.0 / rate, m + 1)
    return SubordinatorPath(0.0, locs, sizes, float(y_max))


# ---------------------------------------------------------------------------
# Stable subordinators and the Neveu flow


def sample_positive_stable(a: float, rng, size=None):
    """Kanter's representation: E exp(-lam S) = exp(-lam^a), a in (0, 1]."""
    if not 0 < a <= 1:
        raise DomainError("stable index must lie in (0, 1]")
    if a == 1:
        return np.ones(size) if size is not None else 1.0
    u = rng.uniform(0.0, math.pi, size)
    w = rng.exponential(1.0, size)
    log_s = (np.log(np.sin(a * u)) - np.log(np.sin(u)) / a
             + (1 - a) / a * (np.log(np.sin((1 - a) * u)) - np.log(w)))
    return np.exp(log_s)


def sample_neveu_marginal(t: float, x: float, rng, size=None):
    """X_t(x) for the Neveu flow: Laplace transform exp(-x lam^{e^{-t}})."""
    if not t > 0:
        raise DomainError("t must be > 0")
    a = math.exp(-t)
    return x ** (1.0 / a) * sample_positive_stable(a, rng, size)


def stable_small_jump_drift(a, scale, eps):
    """Mean of the jumps below eps for the Levy measure of scale * lam^a."""
    return scale * a / math.gamma(1 - a) * eps ** (1 - a) / (1 - a)


def sample_stable_path(a, scale, horizon, rng, drift=0.0, kill=0.0, eps=1e-3) -> SubordinatorPath:
    """Path with exponent drift*lam + scale*lam^a + kill.

    Jumps above ``eps`` are exact; the jumps below ``eps`` are replaced by their
    mean rate, so the exponent is matched up to O(lam^2 eps^{2-a}).
    """
    if not 0 < a < 1:
        raise DomainError("stable index must lie in (0, 1)")
    big_rate = scale * eps ** (-a) / math.gamma(1 - a)
    n = rng.poisson(big_rate * horizon) if horizon > 0 else 0
    locs = np.sort(rng.uniform(0.0, horizon, n))
    sizes = eps * rng.uniform(size=n) ** (-1.0 / a)
    zeta = rng.exponential(1.0 / kill) if kill > 0 else math.inf
    d = drift + stable_small_jump_drift(a, scale, eps)
    return SubordinatorPath(d, locs, sizes, float(horizon), kill=zeta)


def sample_neveu_forward(t, horizon, rng, eps=1e-3) -> SubordinatorPath:
    """X_{-t,0} for Psi(q) = q log q; see sample_stable_path for the small-jump treatment."""
    return sample_stable_path(math.exp(-t), 1.0, horizon, rng, eps=eps)


# ---------------------------------------------------------------------------
# Inverse-flow samplers


def _neveu_scale(mech, t):
    # v_t(lam) = exp(beta(1-a)) lam^a with a = e^{-t}
    a = math.exp(-t)
    return a, math.exp(mech.beta * (1 - a))


def semigroup_exponential_sample(mech: M.BranchingMechanism, t: float, q: float, rng, size=None):
    """hat X_t(e_q) with e_q ~ Exp(q); the result is Exp(v_t(q))."""
    if not q > 0:
        raise DomainError("q must be > 0")
    if t < 0:
        raise DomainError("t must be >= 0")
    e = rng.exponential(1.0 / q, size)
    if t == 0:
        return e
    if mech.is_feller:
        s2, b = mech.sigma2, mech.beta
        bh = feller_beta_hat(s2, b, t)
        rate = feller_jump_rate(s2, b, t)
        m = rng.poisson(bh * e)
        # hat X_t(y) is the sum of the first M_y + 1 exponential jump sizes
        return rng.gamma(m + 1.0, 1.0 / rate)
    if isinstance(mech.levy, M.Neveu) and mech.sigma2 == 0:
        a, kappa = _neveu_scale(mech, t)
        s = sample_positive_stable(a, rng, size)
        # X(x) = (kappa x)^{1/a} S, so its first passage above y is (y/S)^a / kappa
        return (e / s) ** a / kappa
    raise DomainError("pathwise inverse flow is available for Feller and Neveu (sigma2 = 0) only")


def inverse_at_level(sub_sampler, y: float, rng, chunk: float = 1.0, max_chunks: int = 10 ** 6) -> float:
    """X^{-1}(y) = inf{x : X(x) > y} for a freshly sampled forward path.

    ``sub_sampler(horizon, rng)`` returns a path on [0, horizon]; independent
    pieces are glued until the path passes y (stationary increments).
    """
    path = sub_sampler(chunk, rng)
    for _ in range(max_chunks):
        if path.kill <= path.horizon or path.end_value() > y:
            return float(right_inverse(path, y))
        path = concatenate(path, sub_sampler(chunk, rng))
    raise RangeError("path horizon exhausted before reaching the level")


def feller_inverse_at(path: SubordinatorPath, y):
    """Value of a sampled inverse-flow path at level y."""
    return evaluate(path, y)


def entrance_sample(mech: M.BranchingMechanism, t: float, boundary, rng, size=None):
    """hat X_t started at the boundary 0 (rate v_t(inf)) or inf (rate v_t(0))."""
    if not t > 0:
        raise DomainError("t must be > 0")
    g = M.grey(mech)
    if boundary == 0:
        if not g.extinction:
            raise DomainError("boundary 0 is an entrance boundary only under Grey's extinction condition")
        rate = M.v_inf(mech, t)
    elif boundary in (math.inf, "inf"):
        if not g.explosion:
            raise DomainError("boundary inf is an entrance boundary only under the explosion condition")
        rate = M.v_zero(mech, t)
    else:
        raise DomainError("boundary must be 0 or inf")
    return rng.exponential(1.0 / rate, size)


# ---------------------------------------------------------------------------
# Generator of the one-point motion


def jump_density(mech: M.BranchingMechanism, z: float, h):
    """Density of nu(z, dh) = (z-h) pi(dh) + pibar(h) dh on (0, z] (absolutely continuous families)."""
    lv = mech.levy
    h = np.asarray(h, dtype=float)
    if isinstance(lv, M.NoLevy):
        return np.zeros_like(h)
    if isinstance(lv, M.FiniteAtomic):
        raise DomainError("atomic Levy measures have no jump density")
    out = (z - h) * lv.density(h) + lv.tail(h)
    return np.where((h > 0) & (h <= z), out, 0.0)


def drift_b(mech: M.BranchingMechanism, z: float) -> float:
    """Drift of the one-point motion; finite-mean form when int_1^inf h pi(dh) < inf."""
    if not z > 0:
        raise DomainError("z must be > 0")
    d0 = M.psi_prime_zero(mech)
    if np.isfinite(d0):
        return drift_b_finite_mean(mech, z, d0)
    return drift_b_general(mech, z)


def drift_b_finite_mean(mech, z, d0=None):
    if d0 is None:
        d0 = M.psi_prime_zero(mech)
    far = M.tail_integral(mech, lambda h: 1.0, z, np.inf)
    near = M.tail_integral(mech, lambda h: h, 0.0, z)
    return z * far + near + d0 * z + 0.5 * mech.sigma2


def drift_b_general(mech, z):
    """int h (z 1{h<=1} pi(dh) - nu(z, dh)) - beta_lk z + sigma2/2, split so each piece converges."""
    m = min(z, 1.0)
    val = M.levy_integral(mech, lambda h: h * h, 0.0, m) - M.tail_integral(mech, lambda h: h, 0.0, m)
    if z < 1:
        val += z * M.levy_integral(mech, lambda h: h, z, 1.0)
    elif z > 1:
        val -= M.levy_integral(mech, lambda h: h * (z - h), 1.0, z)
        val -= M.tail_integral(mech, lambda h: h, 1.0, z)
    return val - mech.beta_lk * z + 0.5 * mech.sigma2


def generator_apply(mech: M.BranchingMechanism, f, fp, fpp, z: float) -> float:
    """sigma2/2 z f'' + int_0^z [f(z-h) - f(z) + h f'(z)] nu(z, dh) + b(z) f'(z)."""
    if not z > 0:
        raise DomainError("z must be > 0")
    fz, f1, f2 = f(z), fp(z), fpp(z)
    # below the cut the bracket is h^2/2 f''(z - h/3), exact to O(h^4), which
    # avoids cancellation; test functions are assumed to vary on scale ~1
    cut = min(z, max(1e-2 * z, 1e-3))

    def bracket(h):
        if h < cut:
            return 0.5 * h * h * fpp(z - h / 3.0)
        return f(z - h) - fz + h * f1

    jumps = 0.0
    if not isinstance(mech.levy, M.NoLevy):
        jumps = (M.levy_integral(mech, lambda h: bracket(h) * (z - h), 0.0, z, points=[cut])
                 + M.tail_integral(mech, bracket, 0.0, z))
    return 0.5 * mech.sigma2 * z * f2 + jumps + drift_b(mech, z) * f1
