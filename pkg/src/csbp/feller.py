"""Explicit toolkit for the Feller diffusion flow Psi(q) = sigma2/2 q^2 - beta q.

Pairwise MRCA times of the population at time 0 are read off a Poisson comb:
atoms (x, depth) with intensity dx times mu(dt), where mu((t, inf]) = beta_hat_t,
plus an atom at depth inf of mass 2|beta|/sigma2 when beta < 0.  T(x, y) is the
largest depth in [x, y].
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import flow as F
from . import mechanism as M
from .errors import DomainError

DEFAULT_T_MIN = 1e-4


@dataclass(frozen=True)
class FellerParams:
    sigma2: float
    beta: float = 0.0

    def __post_init__(self):
        if not (self.sigma2 > 0 and math.isfinite(self.sigma2)):
            raise DomainError("sigma2 must be finite and > 0")
        if not math.isfinite(self.beta):
            raise DomainError("beta must be finite")

    @property
    def prolific_rate(self) -> float:
        """Mass of the infinite-depth atom: 2|beta|/sigma2 if beta < 0, else 0."""
        return 2.0 * -self.beta / self.sigma2 if self.beta < 0 else 0.0

    def mechanism(self) -> M.BranchingMechanism:
        return M.feller(self.sigma2, self.beta)


def beta_hat(p: FellerParams, t: float) -> float:
    """Tail mass mu((t, inf]) of the comb intensity; inf at t = 0."""
    if t < 0:
        raise DomainError("t must be >= 0")
    if t == 0:
        return math.inf
    if math.isinf(t):
        return p.prolific_rate
    return F.feller_beta_hat(p.sigma2, p.beta, t)


def beta_hat_inverse(p: FellerParams, b):
    """Depth t with beta_hat(t) = b, for b above the prolific rate (vectorised)."""
    b = np.asarray(b, dtype=float)
    base = 2.0 / (p.sigma2 * b)
    y = p.beta * base
    if np.all(np.abs(y) < 1e-8):
        return base * (1.0 - y / 2.0)
    return np.log1p(y) / p.beta


def v(p: FellerParams, t: float, lam: float) -> float:
    if t == 0:
        return lam
    if p.beta == 0:
        return lam / (1.0 + p.sigma2 * lam * t / 2.0)
    e = math.expm1(p.beta * t)
    return lam * p.beta * (e + 1.0) / (p.beta + lam * p.sigma2 * e / 2.0)


def v_inf(p: FellerParams, t: float) -> float:
    return F.feller_jump_rate(p.sigma2, p.beta, t)


def v_hat(p: FellerParams, t: float, lam: float) -> float:
    """Laplace exponent of the inverse flow: beta_hat_t lam / (lam + v_t(inf))."""
    if math.isinf(lam):
        return beta_hat(p, t)
    return beta_hat(p, t) * lam / (lam + v_inf(p, t))


def mrca_cdf(p: FellerParams, t: float, x: float, y: float) -> float:
    """P(T_{x,y} <= t). At t = inf this is P(T < inf)."""
    if not 0 <= x <= y:
        raise DomainError("need 0 <= x <= y")
    if t < 0:
        raise DomainError("t must be >= 0")
    d = y - x
    if d == 0:
        return 1.0
    if math.isinf(t):
        return p_common_ancestor(p, x, y)
    b = beta_hat(p, t)
    return 0.0 if math.isinf(b) else math.exp(-b * d)


def p_common_ancestor(p: FellerParams, x: float, y: float) -> float:
    """P(T_{x,y} < inf) = exp(-(y-x) 2|beta|/sigma2): no prolific point in the window."""
    if not 0 <= x <= y:
        raise DomainError("need 0 <= x <= y")
    return math.exp(-p.prolific_rate * (y - x))


def p_no_ancestor(p: FellerParams, x: float, y: float) -> float:
    """P(T_{x,y} = inf) = 1 - exp(2 beta (y-x)/sigma2) for beta < 0, else 0."""
    if not 0 <= x <= y:
        raise DomainError("need 0 <= x <= y")
    return -math.expm1(-p.prolific_rate * (y - x))


class CoalescentPointProcess:
    """Atoms of the comb above depth t_min on [0, x_max].

    Depths below t_min are not represented: T(x, y) returns 0.0 when no atom of
    [x, y] exceeds t_min, so T is exact on the event {T >= t_min}.
    """

    def __init__(self, positions, depths, x_max: float, t_min: float):
        self.positions = np.asarray(positions, dtype=float)
        self.depths = np.asarray(depths, dtype=float)
        self.x_max = float(x_max)
        self.t_min = float(t_min)
        if self.positions.size > 1 and np.any(np.diff(self.positions) <= 0):
            raise DomainError("positions must be strictly increasing")
        self._table = _sparse_max_table(self.depths)

    def __len__(self):
        return self.positions.size

    @property
    def atoms(self):
        return list(zip(self.positions.tolist(), self.depths.tolist()))

    def infinite_positions(self) -> np.ndarray:
        return self.positions[np.isinf(self.depths)]

    def T(self, x, y):
        """Largest depth over atoms in [x, y] (vectorised); inf marks no common ancestor."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if np.any(x > y) or np.any(x < 0) or np.any(y > self.x_max):
            raise DomainError("windows must satisfy 0 <= x <= y <= x_max")
        lo = np.searchsorted(self.positions, x, side="left")
        hi = np.searchsorted(self.positions, y, side="right")
        out = _range_max(self._table, lo, hi)
        return out if out.ndim else float(out)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "depth"])
        for x, d in zip(self.positions, self.depths):
            w.writerow([repr(float(x)), "inf" if math.isinf(d) else repr(float(d))])
        return buf.getvalue()


def _sparse_max_table(a: np.ndarray):
    table = [a]
    k = 1
    while 2 * k <= a.size:
        prev = table[-1]
        table.append(np.maximum(prev[:-k], prev[k:]))
        k *= 2
    return table


def _range_max(table, lo, hi):
    """max of a[lo:hi] per query, 0.0 on empty ranges."""
    lo, hi = np.broadcast_arrays(np.asarray(lo), np.asarray(hi))
    shape = lo.shape
    lo, length = lo.ravel(), (hi - lo).ravel()
    out = np.zeros(lo.size)
    ok = np.flatnonzero(length > 0)
    if ok.size:
        lev = np.floor(np.log2(length[ok])).astype(int)
        for j in np.unique(lev):
            idx = ok[lev == j]
            row = table[j]
            out[idx] = np.maximum(row[lo[idx]], row[lo[idx] + length[idx] - (1 << j)])
    return out.reshape(shape)


def sample_depths(p: FellerParams, n: int, t_min: float, rng) -> np.ndarray:
    """n i.i.d. depths from mu restricted to (t_min, inf], by tail inversion."""
    b_top = beta_hat(p, t_min)
    b = b_top * (1.0 - rng.random(n))        # uniform on (0, b_top]
    out = np.full(n, np.inf)
    fin = b > p.prolific_rate
    out[fin] = beta_hat_inverse(p, b[fin])
    return out


def sample_cpp(p: FellerParams, x_max: float, rng, t_min: float = DEFAULT_T_MIN) -> CoalescentPointProcess:
    if not x_max > 0:
        raise DomainError("x_max must be > 0")
    if not t_min > 0:
        raise DomainError("t_min must be > 0")
    n = rng.poisson(beta_hat(p, t_min) * x_max)
    pos = np.sort(rng.uniform(0.0, x_max, n))
    return CoalescentPointProcess(pos, sample_depths(p, n, t_min, rng), x_max, t_min)


def prolific_points(p: FellerParams, x_max: float, rng) -> np.ndarray:
    """Initial prolific individuals: Poisson points of rate 2|beta|/sigma2 on [0, x_max]."""
    if p.beta >= 0:
        raise DomainError("prolific individuals need beta < 0")
    if not x_max > 0:
        raise DomainError("x_max must be > 0")
    n = rng.poisson(p.prolific_rate * x_max)
    return np.sort(rng.uniform(0.0, x_max, n))


def sample_pair_mrca(p: FellerParams, gaps, rng) -> np.ndarray:
    """Independent MRCA times of consecutive pairs at the given spacings (inverse cdf)."""
    gaps = np.asarray(gaps, dtype=float)
    if np.any(gaps <= 0):
        raise DomainError("spacings must be > 0")
    u = 1.0 - rng.random(gaps.shape)         # (0, 1]
    out = np.full(gaps.shape, np.inf)
    # P(T <= t) = exp(-beta_hat_t d) climbs to exp(-rate d)
    fin = u < np.exp(-p.prolific_rate * gaps)
    b = -np.log(u[fin]) / gaps[fin]
    out[fin] = beta_hat_inverse(p, b)
    return out


def binary_merging_check(p: FellerParams, positions, rng, times: Optional[list] = None) -> bool:
    """True iff the finite consecutive-pair MRCA times are pairwise distinct."""
    x = np.asarray(positions, dtype=float)
    if x.size < 3:
        raise DomainError("need at least 3 positions")
    gaps = np.diff(x)
    if np.any(gaps <= 0):
        raise DomainError("positions must be strictly increasing")
    t = sample_pair_mrca(p, gaps, rng)
    if times is not None:
        times.append(t)
    fin = t[np.isfinite(t)]
    return bool(np.unique(fin).size == fin.size)
