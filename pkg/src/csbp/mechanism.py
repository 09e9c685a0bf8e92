"""Branching mechanisms, the cumulant flow v_t and derived analytic quantities.

A mechanism is

    Psi(q) = sigma2/2 q^2 - beta q + int (e^{-qx} - 1 + qx 1{x<=1}) pi(dx)

For the named families ``beta`` is the linear coefficient of the closed form
instead of the compensated one:

* ``Stable(alpha, c)``: Psi(q) = sigma2/2 q^2 - beta q + a q^alpha with a = c
  for alpha in (1, 2) and a = -c for alpha in (0, 1) (explosive branch).
* ``Neveu()``: Psi(q) = sigma2/2 q^2 - beta q + q log q.

``beta_lk`` gives the compensated coefficient in every case.
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import integrate, special
from scipy.integrate import solve_ivp

from .errors import DomainError, NumericFailure

ODE_RTOL = 1e-10
ODE_ATOL = 1e-14
QUAD_RTOL = 1e-11
ROOT_RTOL = 1e-12
PROBE_MAX_POWER = 60
PROBE_RTOL = 1e-9


# ---------------------------------------------------------------------------
# Levy measure families


@dataclass(frozen=True)
class NoLevy:
    """Pure diffusion, pi = 0."""


@dataclass(frozen=True)
class Stable:
    """pi(dh) = density_coef h^{-1-alpha} dh."""

    alpha: float
    c: float

    def __post_init__(self):
        if not (0.0 < self.alpha < 2.0) or self.alpha == 1.0:
            raise DomainError("stable index must lie in (0,1) or (1,2)")
        if not self.c > 0:
            raise DomainError("stable scale c must be positive")

    @property
    def density_coef(self) -> float:
        a = self.alpha
        if a > 1:
            return a * (a - 1) * self.c / math.gamma(2 - a)
        return self.c * a / math.gamma(1 - a)

    def density(self, h):
        return self.density_coef * h ** (-1.0 - self.alpha)

    def tail(self, x):
        return self.density_coef * x ** (-self.alpha) / self.alpha


@dataclass(frozen=True)
class Neveu:
    """pi(dh) = h^{-2} dh."""

    def density(self, h):
        return h ** -2.0

    def tail(self, x):
        return 1.0 / x


@dataclass(frozen=True)
class FiniteAtomic:
    """Finitely many atoms, given as ((size, mass), ...)."""

    atoms: tuple

    def __post_init__(self):
        atoms = tuple(sorted((float(h), float(m)) for h, m in self.atoms))
        if not atoms:
            raise DomainError("finite_atomic needs at least one atom")
        sizes = [h for h, _ in atoms]
        if any(h <= 0 or not math.isfinite(h) for h in sizes):
            raise DomainError("atom sizes must be positive and finite")
        if any(m <= 0 or not math.isfinite(m) for _, m in atoms):
            raise DomainError("atom masses must be positive and finite")
        if len(set(sizes)) != len(sizes):
            raise DomainError("atom sizes must be distinct")
        object.__setattr__(self, "atoms", atoms)

    @property
    def sizes(self) -> np.ndarray:
        return np.array([h for h, _ in self.atoms])

    @property
    def masses(self) -> np.ndarray:
        return np.array([m for _, m in self.atoms])

    def tail(self, x):
        x = np.asarray(x, dtype=float)
        return np.sum(np.where(self.sizes > x[..., None], self.masses, 0.0), axis=-1)


@dataclass(frozen=True, eq=False)
class TabulatedDensity:
    """Levy measure given by a density callable; the tail is optional."""

    density: Callable
    tail_fn: Optional[Callable] = None
    name: str = "tabulated"

    def __post_init__(self):
        # local power-law exponents of x^2 pi(x) at 0 and of pi(x) at infinity
        g0 = lambda x: x * x * self.density(x)
        a, b = g0(1e-12), g0(1e-11)
        if a > 0 and math.log(b / a) / math.log(10.0) <= -1.0:
            raise DomainError("int_0^1 x^2 pi(dx) diverges")
        a, b = self.density(1e11), self.density(1e12)
        if a > 0 and b > 0 and math.log(b / a) / math.log(10.0) >= -1.0:
            raise DomainError("int_1^inf pi(dx) diverges")
        try:
            near = _integrate(lambda x: x * x * self.density(x), 0.0, 1.0)
            far = _integrate(self.density, 1.0, np.inf)
        except NumericFailure as exc:
            raise DomainError("int (1 ^ x^2) pi(dx) could not be established finite") from exc
        if not (np.isfinite(near) and np.isfinite(far)):
            raise DomainError("int (1 ^ x^2) pi(dx) is not finite")

    def tail(self, x):
        if self.tail_fn is not None:
            return self.tail_fn(x)
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.empty(xs.size)
        for i, xi in enumerate(xs):
            knots = [xi]
            while knots[-1] < 1.0:
                knots.append(min(10.0 * knots[-1], 1.0))
            total = _integrate(self.density, max(xi, 1.0), np.inf)
            for lo, hi in zip(knots[:-1], knots[1:]):
                total += _integrate(self.density, lo, hi)
            out[i] = total
        return out if np.ndim(x) else float(out[0])


LevyFamily = (NoLevy, Stable, Neveu, FiniteAtomic, TabulatedDensity)


# ---------------------------------------------------------------------------
# Mechanism value


@dataclass(frozen=True)
class BranchingMechanism:
    sigma2: float = 0.0
    beta: float = 0.0
    levy: object = NoLevy()

    def __post_init__(self):
        if not isinstance(self.levy, LevyFamily):
            raise DomainError(f"unknown Levy family {self.levy!r}")
        if self.sigma2 < 0 or not math.isfinite(self.sigma2):
            raise DomainError("sigma2 must be finite and >= 0")
        if not math.isfinite(self.beta):
            raise DomainError("beta must be finite")
        if self.sigma2 == 0 and self.beta == 0 and isinstance(self.levy, NoLevy):
            raise DomainError("degenerate mechanism: sigma2 = beta = 0 and no Levy measure")

    @property
    def beta_lk(self) -> float:
        """Linear coefficient of the compensated Levy-Khintchine form."""
        lv = self.levy
        if isinstance(lv, Stable):
            if lv.alpha > 1:
                return self.beta - lv.density_coef / (lv.alpha - 1)
            return self.beta + lv.density_coef / (1 - lv.alpha)
        if isinstance(lv, Neveu):
            return self.beta + np.euler_gamma - 1.0
        return self.beta

    @property
    def is_feller(self) -> bool:
        return isinstance(self.levy, NoLevy) and self.sigma2 > 0

    def psi(self, q):
        return psi_eval(self, q)


def feller(sigma2: float, beta: float = 0.0) -> BranchingMechanism:
    return BranchingMechanism(sigma2, beta, NoLevy())


def neveu(sigma2: float = 0.0, beta: float = 0.0) -> BranchingMechanism:
    return BranchingMechanism(sigma2, beta, Neveu())


def stable(alpha: float, c: float = 1.0, beta: float = 0.0, sigma2: float = 0.0) -> BranchingMechanism:
    return BranchingMechanism(sigma2, beta, Stable(alpha, c))


# ---------------------------------------------------------------------------
# Quadrature helpers


def _integrate(f, a, b, points=None, epsrel=QUAD_RTOL, epsabs=1e-300):
    """Adaptive quadrature that raises NumericFailure on a poor error estimate."""
    if a == b:
        return 0.0
    kw = dict(epsabs=epsabs, epsrel=epsrel, limit=400, full_output=1)
    if points is not None and np.isfinite(b):
        pts = [p for p in points if a < p < b]
        if pts:
            kw["points"] = pts
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = integrate.quad(f, a, b, **kw)
    val, err = res[0], res[1]
    if len(res) > 3 and err > max(1e-7 * abs(val), 1e-13):
        raise NumericFailure(f"quadrature on [{a}, {b}] did not converge", estimate=err)
    return val


def _scale_points(q):
    """Geometric breakpoints between 1/q and 1 so that quad resolves the 1/q scale."""
    if q <= 1.0:
        return None
    return list(np.geomspace(1.0 / q, 1.0, int(math.log10(q)) + 2)[:-1])


def _phi2(u: float) -> float:
    """e^{-u} - 1 + u without cancellation for small u."""
    if u < 1e-3:
        return u * u * (0.5 - u * (1.0 / 6 - u * (1.0 / 24 - u / 120)))
    return math.expm1(-u) + u


def levy_integral(mech: BranchingMechanism, g, a=0.0, b=np.inf, points=None) -> float:
    """int_{(a, b]} g(h) pi(dh) for a scalar integrand g."""
    lv = mech.levy
    if isinstance(lv, NoLevy) or b <= a:
        return 0.0
    if isinstance(lv, FiniteAtomic):
        h = lv.sizes
        sel = (h > a) & (h <= b)
        return float(sum(m * g(float(x)) for x, m in zip(h[sel], lv.masses[sel])))
    dens = lv.density
    cuts = sorted({a, b, *[p for p in (points or ()) if a < p < b], *([1.0] if a < 1.0 < b else [])})
    total = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        total += _integrate(lambda x: g(x) * dens(x), lo, hi)
    return total


def tail_integral(mech: BranchingMechanism, g, a=0.0, b=np.inf) -> float:
    """int_a^b g(h) pibar(h) dh, pibar(h) = pi((h, inf))."""
    lv = mech.levy
    if isinstance(lv, NoLevy) or b <= a:
        return 0.0
    if isinstance(lv, FiniteAtomic):
        # pibar is a step function; integrate g on each step with quadrature
        knots = [a] + [h for h in lv.sizes if a < h < b] + [b]
        total = 0.0
        for lo, hi in zip(knots[:-1], knots[1:]):
            level = float(lv.tail(0.5 * (lo + hi)) if np.isfinite(hi) else lv.tail(lo + 1.0))
            if level > 0:
                total += level * _integrate(g, lo, hi)
        return total
    cuts = sorted({a, b, *([1.0] if a < 1.0 < b else [])})
    total = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        total += _integrate(lambda x: g(x) * lv.tail(x), lo, hi)
    return total


# ---------------------------------------------------------------------------
# Psi and its derivative


def psi_eval(mech: BranchingMechanism, q: float) -> float:
    q = float(q)
    if not (q >= 0 and math.isfinite(q)):
        raise DomainError(f"Psi is evaluated on finite q >= 0, got {q}")
    if q == 0.0:
        return 0.0
    lv = mech.levy
    base = 0.5 * mech.sigma2 * q * q - mech.beta * q
    if isinstance(lv, NoLevy):
        return base
    if isinstance(lv, Stable):
        a = lv.c if lv.alpha > 1 else -lv.c
        return base + a * q ** lv.alpha
    if isinstance(lv, Neveu):
        return base + q * math.log(q)
    if isinstance(lv, FiniteAtomic):
        h, m = lv.sizes, lv.masses
        comp = np.expm1(-q * h) + q * h * (h <= 1.0)
        return base + float(np.sum(m * comp))
    near = _integrate(lambda x: _phi2(q * x) * lv.density(x), 0.0, 1.0, points=_scale_points(q))
    far = _integrate(lambda x: math.expm1(-q * x) * lv.density(x), 1.0, np.inf)
    return base + near + far


def psi_prime(mech: BranchingMechanism, q: float) -> float:
    q = float(q)
    if q == 0.0:
        return psi_prime_zero(mech)
    lv = mech.levy
    base = mech.sigma2 * q - mech.beta
    if isinstance(lv, NoLevy):
        return base
    if isinstance(lv, Stable):
        a = lv.c if lv.alpha > 1 else -lv.c
        return base + a * lv.alpha * q ** (lv.alpha - 1)
    if isinstance(lv, Neveu):
        return base + math.log(q) + 1.0
    if isinstance(lv, FiniteAtomic):
        h, m = lv.sizes, lv.masses
        return base + float(np.sum(m * h * ((h <= 1.0) - np.exp(-q * h))))
    near = _integrate(lambda x: -x * math.expm1(-q * x) * lv.density(x), 0.0, 1.0, points=_scale_points(q))
    far = _integrate(lambda x: -x * math.exp(-q * x) * lv.density(x), 1.0, np.inf)
    return base + near + far


def psi_prime_zero(mech: BranchingMechanism) -> float:
    """Psi'(0+), possibly -inf."""
    lv = mech.levy
    if isinstance(lv, NoLevy):
        return -mech.beta
    if isinstance(lv, Stable):
        return -mech.beta if lv.alpha > 1 else -np.inf
    if isinstance(lv, Neveu):
        return -np.inf
    if isinstance(lv, FiniteAtomic):
        h, m = lv.sizes, lv.masses
        return -mech.beta - float(np.sum(m * h * (h > 1.0)))
    try:
        big = _integrate(lambda x: x * lv.density(x), 1.0, np.inf)
        if np.isfinite(big):
            return -mech.beta - big
    except NumericFailure:
        pass
    # divergent first moment: the one-sided difference quotient decides the sign
    eps = 1e-8
    slope = psi_eval(mech, eps) / eps
    return -np.inf if slope < 0 else slope


# ---------------------------------------------------------------------------
# Criticality and Grey's conditions


class Kind(str, enum.Enum):
    SUBCRITICAL = "subcritical"
    CRITICAL = "critical"
    SUPERCRITICAL = "supercritical"


@dataclass(frozen=True)
class Criticality:
    kind: Kind
    rho: float
    unbounded: bool = False  # Psi < 0 on the whole probed range


@dataclass(frozen=True)
class GreyReport:
    extinction: bool
    explosion: bool
    transient: bool


def classify(mech: BranchingMechanism) -> Criticality:
    d = psi_prime_zero(mech)
    if d > 0:
        return Criticality(Kind.SUBCRITICAL, 0.0)
    if d == 0:
        return Criticality(Kind.CRITICAL, 0.0)
    lo = 1e-12
    while psi_eval(mech, lo) >= 0 and lo > 1e-300:
        lo *= 1e-3
    hi = 1.0
    while psi_eval(mech, hi) <= 0:
        lo, hi = hi, 2.0 * hi
        if hi > 1e18:
            return Criticality(Kind.SUPERCRITICAL, np.inf, unbounded=True)
    if lo >= hi:
        lo = hi / 2
    while hi - lo > ROOT_RTOL * hi:
        mid = 0.5 * (lo + hi)
        if psi_eval(mech, mid) <= 0:
            lo = mid
        else:
            hi = mid
    return Criticality(Kind.SUPERCRITICAL, 0.5 * (lo + hi))


def _loglog_slope(mech, u, ratio=1.1):
    a, b = psi_eval(mech, u), psi_eval(mech, u * ratio)
    if a == 0 or b == 0 or np.sign(a) != np.sign(b):
        raise NumericFailure(f"Psi changes sign near u={u}; asymptotic exponent undefined")
    return math.log(abs(b) / abs(a)) / math.log(ratio)


def _decide(p, low, high, what):
    """True if p < low, False if p > high, NumericFailure in the ambiguous band."""
    if p < low:
        return True
    if p > high:
        return False
    raise NumericFailure(f"{what}: local exponent {p:.4f} inside the undecidable band [{low}, {high}]")


def grey(mech: BranchingMechanism) -> GreyReport:
    lv = mech.levy
    crit = classify(mech)
    if isinstance(lv, TabulatedDensity):
        if mech.sigma2 > 0:
            ext = True
        else:
            u = 1e12
            if psi_eval(mech, u) <= 0:
                ext = False
            else:
                ext = not _decide(_loglog_slope(mech, u), 1.005, 1.05, "extinction")
        if np.isfinite(psi_prime_zero(mech)):
            expl = False
        else:
            u = 1e-12
            if psi_eval(mech, u) >= 0:
                expl = False
            else:
                expl = _decide(_loglog_slope(mech, u), 0.95, 0.995, "explosion")
        crit_transient = None
        if crit.kind is Kind.CRITICAL:
            crit_transient = _decide(_loglog_slope(mech, 1e-12), 1.95, 1.995, "transience")
    else:
        if isinstance(lv, Stable):
            ext = mech.sigma2 > 0 or lv.alpha > 1
            expl = lv.alpha < 1
            crit_transient = True  # critical stable has Psi ~ c q^alpha, alpha < 2, near 0
        else:
            ext = mech.sigma2 > 0
            expl = False
            crit_transient = False  # critical and quadratic near 0
    if crit.kind is Kind.SUBCRITICAL:
        transient = True
    elif crit.kind is Kind.SUPERCRITICAL:
        transient = False
    else:
        transient = bool(crit_transient)
    return GreyReport(bool(ext), bool(expl), transient)


# ---------------------------------------------------------------------------
# The cumulant v_t(lambda)


def _closed_form_v(mech: BranchingMechanism, t: float, lam: float):
    lv = mech.levy
    beta = mech.beta
    if isinstance(lv, NoLevy):
        g = t if beta == 0 else -math.expm1(-beta * t) / beta
        return lam / (math.exp(-beta * t) + 0.5 * mech.sigma2 * lam * g)
    if mech.sigma2 != 0:
        return None
    if isinstance(lv, Neveu):
        return math.exp(beta + (math.log(lam) - beta) * math.exp(-t))
    if isinstance(lv, Stable):
        a = lv.c if lv.alpha > 1 else -lv.c
        e = 1.0 - lv.alpha
        w0 = lam ** e
        if beta == 0:
            w = w0 - e * a * t
        else:
            w = a / beta + (w0 - a / beta) * math.exp(e * beta * t)
        if w <= 0:
            raise NumericFailure("stable closed form left (0, inf)")
        return w ** (1.0 / e)
    return None


def _ode_v(mech: BranchingMechanism, t: float, lam: float, method: str = "RK45") -> float:
    def rhs(_, y):
        q = math.exp(y[0])
        return [-psi_eval(mech, q) / q]

    sol = solve_ivp(rhs, (0.0, t), [math.log(lam)], method=method, rtol=ODE_RTOL, atol=ODE_ATOL)
    if sol.status != 0:
        raise NumericFailure(f"cumulant ODE failed: {sol.message}")
    out = math.exp(sol.y[0, -1])
    if not (0 < out < np.inf):
        raise NumericFailure("cumulant ODE left (0, inf)")
    return out


def v(mech: BranchingMechanism, t: float, lam: float, method: str = "auto") -> float:
    """v_t(lambda). ``method='ode'`` forces the generic Runge-Kutta route."""
    t = float(t)
    if t < 0:
        raise DomainError("t must be >= 0")
    if lam == np.inf:
        return v_inf(mech, t) if t > 0 else np.inf
    if not lam > 0:
        raise DomainError("lambda must be > 0")
    if t == 0:
        return float(lam)
    if method == "auto":
        out = _closed_form_v(mech, t, float(lam))
        if out is not None:
            return out
        return _ode_v(mech, t, float(lam))
    if method == "ode":
        return _ode_v(mech, t, float(lam))
    raise DomainError(f"unknown method {method!r}")


def v_inf(mech: BranchingMechanism, t: float) -> float:
    """v_t(inf); +inf when extinction fails."""
    if not t > 0:
        raise DomainError("t must be > 0")
    lv = mech.levy
    beta = mech.beta
    if isinstance(lv, NoLevy) and mech.sigma2 > 0:
        g = t if beta == 0 else -math.expm1(-beta * t) / beta
        return 2.0 / (mech.sigma2 * g)
    if isinstance(lv, Stable) and mech.sigma2 == 0:
        if lv.alpha < 1:
            return np.inf
        e = lv.alpha - 1
        w = e * lv.c * t if beta == 0 else lv.c * -math.expm1(-e * beta * t) / beta
        return w ** (-1.0 / e)
    if not grey(mech).extinction:
        return np.inf
    return _grey_inverse(mech, t, up=True)


def v_zero(mech: BranchingMechanism, t: float) -> float:
    """v_t(0+); 0 when explosion fails."""
    if not t > 0:
        raise DomainError("t must be > 0")
    lv = mech.levy
    beta = mech.beta
    if isinstance(lv, Stable) and mech.sigma2 == 0:
        if lv.alpha > 1:
            return 0.0
        e = 1 - lv.alpha
        w = e * lv.c * t if beta == 0 else lv.c * math.expm1(e * beta * t) / beta
        return w ** (1.0 / e)
    if not grey(mech).explosion:
        return 0.0
    return _grey_inverse(mech, t, up=False)


def _probe(mech, t, up):
    """Limit of v_t(lambda) along lambda = 2^{+-j}; falls back to Grey inversion."""
    prev = None
    for j in range(1, PROBE_MAX_POWER + 1):
        lam = 2.0 ** j if up else 2.0 ** -j
        cur = v(mech, t, lam)
        if prev is not None and abs(cur - prev) <= PROBE_RTOL * abs(cur):
            return cur
        prev = cur
    # slow algebraic approach to the limit (e.g. stable index near 1): invert Grey's integral
    try:
        return _grey_inverse(mech, t, up)
    except (NumericFailure, ValueError) as exc:
        raise NumericFailure(f"v_t({'inf' if up else '0'}) probe did not settle",
                             estimate=abs(cur - prev)) from exc


def _grey_inverse(mech, t, up):
    """Solve int_v^inf dz/Psi = t (up) or int_0^v dz/|Psi| = t (down) for v."""
    from scipy.optimize import brentq

    rho = classify(mech).rho
    f = lambda z: 1.0 / abs(psi_eval(mech, z))

    def span(a, b):
        # geometric pieces keep each quad call on a single scale
        if not np.isfinite(b):
            c = max(2.0 * a, 1.0)
            return span(a, c) + _integrate(f, c, np.inf)
        knots = np.geomspace(a, b, max(2, int(math.log10(b / a)) + 2)) if b > a else [a, b]
        return sum(_integrate(f, lo, hi) for lo, hi in zip(knots[:-1], knots[1:]))

    def g(s):
        x = math.exp(s)
        try:
            val = span(x, np.inf) if up else span(1e-300, x)
        except NumericFailure:
            return np.inf  # the integrand is not integrable this close to rho
        return val - t if up else t - val

    # g decreases in s in both directions of the problem
    edge = math.log(rho) if 0 < rho < np.inf else (-np.inf if up else np.inf)
    s = 0.0 if not np.isfinite(edge) else edge + (1.0 if up else -1.0)
    if g(s) > 0:
        lo, hi = s, s + 1.0
        while g(hi) > 0:
            lo, hi = hi, hi + 2.0
    else:
        lo, hi = s - 1.0, s
        while g(lo) <= 0:
            gap = lo - edge if np.isfinite(edge) else np.inf
            hi, lo = lo, (lo - 2.0 if gap > 4.0 else edge + 0.5 * gap)
    return math.exp(brentq(g, lo, hi, xtol=1e-14, rtol=1e-13))


# ---------------------------------------------------------------------------
# Quasi-stationary law


def qsd_laplace(mech: BranchingMechanism, u: float) -> float:
    if classify(mech).kind is not Kind.SUBCRITICAL or not grey(mech).extinction:
        raise DomainError("quasi-stationary law needs a subcritical mechanism with extinction")
    if u < 0:
        raise DomainError("u must be >= 0")
    if u == 0:
        return 1.0
    if u == np.inf:
        return 0.0
    if mech.is_feller:
        a, b = 0.5 * mech.sigma2, -mech.beta
        return b / (a * u + b)
    d = psi_prime_zero(mech)
    f = lambda x: 1.0 / psi_eval(mech, x)
    mid = max(2.0 * u, 1.0)
    integral = _integrate(f, u, mid) + _integrate(f, mid, np.inf)
    return -math.expm1(-d * integral)


# ---------------------------------------------------------------------------
# Coagulation rates p_theta(k) and their tails


def rate_measure(mech: BranchingMechanism, theta: float, k: int) -> float:
    """p_theta(k) = sigma2/2 theta 1{k=2} + theta^{k-1} int x^k/k! e^{-theta x} pi(dx)."""
    if not theta > 0:
        raise DomainError("theta must be > 0")
    if k < 2:
        raise DomainError("k must be >= 2")
    diff = 0.5 * mech.sigma2 * theta if k == 2 else 0.0
    lv = mech.levy
    if isinstance(lv, NoLevy):
        return diff
    if isinstance(lv, Stable):
        a = lv.alpha
        return diff + lv.density_coef * math.exp((a - 1) * math.log(theta) + math.lgamma(k - a) - math.lgamma(k + 1))
    if isinstance(lv, Neveu):
        return diff + 1.0 / (k * (k - 1))
    lt = math.log(theta)
    lk = math.lgamma(k + 1)

    def kern(x):
        return math.exp((k - 1) * lt + k * math.log(x) - theta * x - lk) if x > 0 else 0.0

    return diff + levy_integral(mech, kern, points=[k / theta])


def rate_tail(mech: BranchingMechanism, theta: float, k: int) -> float:
    """sum_{j >= k} p_theta(j), using P(Poisson(theta x) >= k) = gammainc(k, theta x)."""
    if not theta > 0:
        raise DomainError("theta must be > 0")
    k = max(int(k), 2)
    diff = 0.5 * mech.sigma2 * theta if k == 2 else 0.0
    lv = mech.levy
    if isinstance(lv, NoLevy):
        return diff
    if isinstance(lv, Stable):
        a = lv.alpha
        return diff + lv.density_coef * math.exp((a - 1) * math.log(theta) + math.lgamma(k - a) - math.lgamma(k)) / a
    if isinstance(lv, Neveu):
        return diff + 1.0 / (k - 1)
    kern = lambda x: special.gammainc(k, theta * x) / theta
    return diff + levy_integral(mech, kern, points=[k / theta])


def total_rate(mech: BranchingMechanism, theta: float) -> float:
    """Total coagulation mass, equal to Psi'(theta) - Psi(theta)/theta."""
    return rate_tail(mech, theta, 2)


# ---------------------------------------------------------------------------
# Structured configuration


def mechanism_from_config(cfg: dict) -> BranchingMechanism:
    from .errors import ConfigError

    if not isinstance(cfg, dict):
        raise ConfigError("mechanism config must be a mapping", key="mechanism")
    try:
        sigma2 = float(cfg.get("sigma2", 0.0))
    except (TypeError, ValueError):
        raise ConfigError("must be a number", key="sigma2") from None
    try:
        beta = float(cfg.get("beta", 0.0))
    except (TypeError, ValueError):
        raise ConfigError("must be a number", key="beta") from None
    levy_cfg = cfg.get("levy", {"family": "none"}) or {"family": "none"}
    if not isinstance(levy_cfg, dict):
        raise ConfigError("must be a mapping", key="levy")
    family = str(levy_cfg.get("family", "none")).lower()
    try:
        if family == "none":
            levy = NoLevy()
        elif family == "stable":
            if "alpha" not in levy_cfg:
                raise ConfigError("missing", key="levy.alpha")
            levy = Stable(float(levy_cfg["alpha"]), float(levy_cfg.get("c", 1.0)))
        elif family == "neveu":
            levy = Neveu()
        elif family == "finite_atomic":
            if "atoms" not in levy_cfg:
                raise ConfigError("missing", key="levy.atoms")
            levy = FiniteAtomic(tuple((float(h), float(m)) for h, m in levy_cfg["atoms"]))
        else:
            raise ConfigError(f"unknown family {family!r}", key="levy.family")
        return BranchingMechanism(sigma2, beta, levy)
    except DomainError as exc:
        raise ConfigError(str(exc), key="mechanism") from exc


def mechanism_to_config(mech: BranchingMechanism) -> dict:
    lv = mech.levy
    if isinstance(lv, NoLevy):
        levy = {"family": "none"}
    elif isinstance(lv, Stable):
        levy = {"family": "stable", "alpha": lv.alpha, "c": lv.c}
    elif isinstance(lv, Neveu):
        levy = {"family": "neveu"}
    elif isinstance(lv, FiniteAtomic):
        levy = {"family": "finite_atomic", "atoms": [list(a) for a in lv.atoms]}
    else:
        raise DomainError("tabulated densities have no text representation")
    return {"sigma2": mech.sigma2, "beta": mech.beta, "levy": levy}
