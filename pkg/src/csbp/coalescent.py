"""Consecutive coalescents: Gillespie and thinning simulators, exact small-n
oracles and closed-form marginal laws."""
from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import special
from scipy.linalg import expm

from . import flow
from . import mechanism as M
from .errors import DomainError, InternalConsistencyError
from .partition import ConsecutivePartition, MergeEvent, all_partitions, apply_merge, merge_sizes, render

MAX_ORACLE_N = 8
BOUND_GRID = 64
BOUND_FACTOR = 1.5
BOUND_REFRESH = 0.1


# ---------------------------------------------------------------------------
# Reproduction measures


def _tail_vector(mech: M.BranchingMechanism, theta: float, ks: np.ndarray) -> np.ndarray:
    """mu-bar_theta(k) for an integer array ks >= 2, vectorized where closed forms exist."""
    ks = np.asarray(ks, dtype=float)
    diff = np.where(ks == 2, 0.5 * mech.sigma2 * theta, 0.0)
    lv = mech.levy
    if isinstance(lv, M.NoLevy):
        return diff
    if isinstance(lv, M.Stable):
        a = lv.alpha
        return diff + lv.density_coef * theta ** (a - 1) / (a * special.poch(ks - a, a))
    if isinstance(lv, M.Neveu):
        return diff + 1.0 / (ks - 1)
    return np.array([M.rate_tail(mech, theta, int(k)) for k in ks])


def _shape_free(mech: M.BranchingMechanism) -> bool:
    """True when p_theta(.) / mu-bar_theta(2) does not depend on theta."""
    lv = mech.levy
    if isinstance(lv, M.NoLevy):
        return True
    return mech.sigma2 == 0 and isinstance(lv, (M.Stable, M.Neveu))


class ReproductionMeasure:
    """Finite measure on {2, 3, ...} given by mass(k) and tail(k) = sum_{j >= k} mass(j)."""

    def __init__(self, mass: Callable, tail: Callable, name: str = "", tail_vec: Optional[Callable] = None):
        self.mass = mass
        self.tail = tail
        self.name = name
        self._tail_vec = tail_vec
        self._table = np.empty(0)
        self.total = float(tail(2))
        if not (self.total > 0 and math.isfinite(self.total)):
            raise DomainError("reproduction measure needs finite positive total mass")

    @classmethod
    def neveu(cls):
        return cls(lambda k: 1.0 / (k * (k - 1)), lambda k: 1.0 / (max(k, 2) - 1), "neveu",
                   lambda ks: 1.0 / (ks - 1))

    @classmethod
    def from_mechanism(cls, mech: M.BranchingMechanism, theta: float):
        return cls(lambda k: M.rate_measure(mech, theta, k), lambda k: M.rate_tail(mech, theta, k),
                   f"p_theta, theta={theta}", lambda ks: _tail_vector(mech, theta, ks))

    @classmethod
    def finite(cls, masses: dict):
        masses = {int(k): float(v) for k, v in masses.items() if v > 0}
        if not masses or min(masses) < 2:
            raise DomainError("masses must live on k >= 2")
        return cls(lambda k: masses.get(k, 0.0), lambda k: sum(v for j, v in masses.items() if j >= k),
                   "finite")

    def table(self, kmax: int) -> np.ndarray:
        """T with T[k] = tail(k) for 2 <= k <= kmax + 1; cached and grown on demand."""
        if self._table.size < kmax + 2:
            ks = np.arange(2, kmax + 2)
            vals = self._tail_vec(ks) if self._tail_vec is not None else np.array([self.tail(int(k)) for k in ks])
            self._table = np.concatenate(([np.nan, np.nan], np.asarray(vals, dtype=float)))
        return self._table

    def k_sampler(self, kmax: int):
        """u in [0,1) -> K with P(K = k) = mass(k)/total, returned as kmax + 1 when K > kmax."""
        return _KSampler(self.table(kmax), kmax)


class _KSampler:
    def __init__(self, table: np.ndarray, kmax: int):
        t2 = table[2]
        self.total = t2
        # K <= k iff T(k+1) <= T(2)(1 - u); neg is increasing in k
        self.neg = -table[3:kmax + 2] / t2
        self.kmax = kmax

    def __call__(self, u):
        i = np.searchsorted(self.neg, -(1.0 - np.asarray(u)), side="left")
        return i + 2


# ---------------------------------------------------------------------------
# Time-dependent rate schedules


class RateSchedule:
    """Rates mu_t(k) = p_{theta_t}(k), theta_t = v_t(lam) (or v_t(inf) when lam is inf)."""

    def __init__(self, mech: M.BranchingMechanism, lam: float):
        if not lam > 0:
            raise DomainError("lambda must be > 0")
        if math.isinf(lam) and not M.grey(mech).extinction:
            raise DomainError("lambda = inf needs Grey's extinction condition")
        self.mech = mech
        self.lam = lam
        self.shape_free = _shape_free(mech)
        self._bounds = {}
        self._shape = None

    def theta(self, t: float) -> float:
        if math.isinf(self.lam):
            if not t > 0:
                raise DomainError("rates at lambda = inf diverge at t = 0")
            return M.v_inf(self.mech, t)
        return self.lam if t == 0 else M.v(self.mech, t, self.lam)

    def rate(self, t: float, k: int) -> float:
        return M.rate_measure(self.mech, self.theta(t), k)

    def tail(self, t: float, k: int) -> float:
        return M.rate_tail(self.mech, self.theta(t), k)

    def total(self, t: float) -> float:
        """mu-bar_t(2): the rate at which a given pair of adjacent blocks is involved."""
        return M.total_rate(self.mech, self.theta(t))

    def bound(self, t0: float, t1: float) -> float:
        """1.5 x the grid maximum of mu-bar_t(2) on [t0, t1]."""
        grid = np.linspace(t0, t1, BOUND_GRID)
        return BOUND_FACTOR * max(self.total(float(s)) for s in grid)

    def interval_bound(self, t_start: float, i: int) -> float:
        key = (t_start, i)
        if key not in self._bounds:
            self._bounds[key] = self.bound(t_start + i * BOUND_REFRESH, t_start + (i + 1) * BOUND_REFRESH)
        return self._bounds[key]

    def shape_sampler(self, kmax: int):
        """Theta-free K sampler (only when shape_free)."""
        if self._shape is None or self._shape.kmax < kmax:
            self._shape = ReproductionMeasure.from_mechanism(self.mech, 1.0).k_sampler(kmax)
        return self._shape

    def draw_k(self, t: float, u: float, limit: int) -> int:
        """K ~ mu_t / mu-bar_t(2); any value above ``limit`` is reported as limit + 1."""
        if self.shape_free:
            return int(min(self.shape_sampler(limit)(u), limit + 1))
        theta = self.theta(t)
        target = u * M.total_rate(self.mech, theta)
        acc, k = 0.0, 1
        while k <= limit:
            k += 1
            acc += M.rate_measure(self.mech, theta, k)
            if acc > target:
                return k
        return limit + 1


# ---------------------------------------------------------------------------
# Trajectories


@dataclass
class CoalescentTrajectory:
    n: int
    events: list = field(default_factory=list)      # (time, MergeEvent)
    snapshots: dict = field(default_factory=dict)   # time -> ConsecutivePartition
    final: Optional[ConsecutivePartition] = None

    def block_counts(self) -> list:
        counts, m = [self.n], self.n
        for _, e in self.events:
            m -= e.n_merged(m) - 1
            counts.append(m)
        return counts

    def to_json(self) -> str:
        return json.dumps({
            "n": self.n,
            "events": [{"t": t, "j": e.j, "k": e.k, "boundary": e.boundary} for t, e in self.events],
            "snapshots": {repr(float(t)): render(p) for t, p in sorted(self.snapshots.items())},
        }, sort_keys=True)


def _record(traj, sizes, times, i, t_now):
    while i < len(times) and times[i] < t_now:
        traj.snapshots[times[i]] = ConsecutivePartition(tuple(sizes))
        i += 1
    return i


def simulate_homogeneous(mu: ReproductionMeasure, n: int, t_end: float, rng, snapshots=(),
                         record: bool = True) -> CoalescentTrajectory:
    """Gillespie: with m blocks the total rate is (m-1) mu-bar(2).

    j is uniform on 1..m-1; K ~ mu / mu-bar(2); K <= m-j gives the interior event
    (j, K), otherwise the boundary event j (rate mu-bar(m-j+1) in total).
    """
    if n < 1:
        raise DomainError("n must be >= 1")
    sizes = [1] * n
    traj = CoalescentTrajectory(n)
    times = sorted(float(s) for s in snapshots if s <= t_end)
    sampler = mu.k_sampler(n)
    total = mu.total
    t, i, m = 0.0, 0, n
    while m > 1:
        t += rng.exponential(1.0 / ((m - 1) * total))
        if t > t_end:
            break
        if record:
            i = _record(traj, sizes, times, i, t)
        j = int(rng.integers(1, m))
        k = int(sampler(rng.random()))
        e = MergeEvent(j, k) if k <= m - j else MergeEvent(j, boundary=True)
        merge_sizes(sizes, e)
        m = len(sizes)
        if record:
            traj.events.append((t, e))
    _record(traj, sizes, times, i, math.inf)
    traj.final = ConsecutivePartition(tuple(sizes))
    return traj


def simulate_inhomogeneous(sched: RateSchedule, n: int, t_start: float, t_end: float, rng, snapshots=(),
                           record: bool = True) -> CoalescentTrajectory:
    """Ogata thinning against (m-1) x a piecewise-constant bound refreshed every 0.1 time units."""
    if n < 1:
        raise DomainError("n must be >= 1")
    if math.isinf(sched.lam) and not t_start > 0:
        raise DomainError("lambda = inf needs t_start > 0")
    if t_end < t_start:
        raise DomainError("t_end must be >= t_start")
    sizes = [1] * n
    traj = CoalescentTrajectory(n)
    times = sorted(float(s) for s in snapshots if t_start <= s <= t_end)
    t, i, m = t_start, 0, n
    idx = 0
    while m > 1:
        b = min(t_start + (idx + 1) * BOUND_REFRESH, t_end)
        cap = (m - 1) * sched.interval_bound(t_start, idx)
        t += rng.exponential(1.0 / cap)
        if t >= b:
            t = b
            if b >= t_end:
                break
            idx += 1
            continue
        u = rng.random()
        r = (m - 1) * sched.total(t)
        if r > cap:
            raise InternalConsistencyError(f"thinning bound violated at t={t}: rate {r} > bound {cap}")
        if u * cap > r:
            continue
        if record:
            i = _record(traj, sizes, times, i, t)
        j = int(rng.integers(1, m))
        k = sched.draw_k(t, rng.random(), m - j)
        e = MergeEvent(j, k) if k <= m - j else MergeEvent(j, boundary=True)
        merge_sizes(sizes, e)
        m = len(sizes)
        if record:
            traj.events.append((t, e))
    _record(traj, sizes, times, i, math.inf)
    traj.final = ConsecutivePartition(tuple(sizes))
    return traj


@functools.lru_cache(maxsize=64)
def schedule(mech: M.BranchingMechanism, lam: float) -> RateSchedule:
    """Shared schedule per (mechanism, lambda), so thinning bounds are computed once."""
    return RateSchedule(mech, lam)


def simulate(mech: M.BranchingMechanism, lam: float, n: int, t: float, rng, s: float = 0.01, **kw):
    """C^lam(t) restricted to [n]; for lam = inf, C(s, t) started from singletons at time s."""
    sched = schedule(mech, lam)
    start = s if math.isinf(lam) else 0.0
    return simulate_inhomogeneous(sched, n, start, t, rng, **kw)


# ---------------------------------------------------------------------------
# Block-count chain


def block_count_generator(mu: ReproductionMeasure, n: int) -> np.ndarray:
    """Q[l-1, l-k] = (l-k) mu(k) + mu-bar(k) for the number of blocks l in 1..n."""
    tab = mu.table(n)
    mass = np.zeros(n + 2)
    mass[2:n + 1] = tab[2:n + 1] - tab[3:n + 2]
    q = np.zeros((n, n))
    for l in range(2, n + 1):
        for k in range(2, l + 1):
            q[l - 1, l - k] = (l - k) * mass[k] + tab[k]
        q[l - 1, l - 1] = -q[l - 1, :l - 1].sum()
    return q


def block_count_law(mu: ReproductionMeasure, n: int, t: float) -> np.ndarray:
    """Exact law of the number of blocks at t, as an array indexed by l - 1."""
    q = block_count_generator(mu, n)
    start = np.zeros(n)
    start[-1] = 1.0
    return start @ expm(q * t)


def simulate_block_counts(mu: ReproductionMeasure, n: int, t: float, reps: int, rng) -> np.ndarray:
    """Vectorized simulation of the block-count chain for ``reps`` independent replicates."""
    sampler = mu.k_sampler(n)
    total = mu.total
    l = np.full(reps, n, dtype=np.int64)
    clock = np.zeros(reps)
    active = np.flatnonzero(l > 1)
    while active.size:
        clock[active] += rng.exponential(1.0, active.size) / ((l[active] - 1) * total)
        active = active[clock[active] <= t]
        if not active.size:
            break
        j = rng.integers(1, l[active])
        k = sampler(rng.random(active.size))
        merged = np.minimum(k, l[active] - j + 1)
        l[active] -= merged - 1
        active = active[l[active] > 1]
    return l


def block_count_chain(mu: ReproductionMeasure, n: int, t: float, rng=None, reps: int = 0):
    """Exact law (rng None) or simulated counts."""
    if rng is None:
        return block_count_law(mu, n, t)
    return simulate_block_counts(mu, n, t, reps, rng)


# ---------------------------------------------------------------------------
# Exact small-n oracle


@dataclass
class OracleResult:
    states: list
    probs: np.ndarray
    richardson_gap: float = 0.0

    def as_dict(self) -> dict:
        return {s: float(p) for s, p in zip(self.states, self.probs)}


def partition_generator(n: int, rate: Callable, tail: Callable):
    """Generator over the 2^{n-1} consecutive partitions of [n]."""
    states = all_partitions(n)
    index = {s: i for i, s in enumerate(states)}
    q = np.zeros((len(states), len(states)))
    for i, c in enumerate(states):
        m = c.n_blocks
        for j in range(1, m):
            for k in range(2, m - j + 1):
                q[i, index[apply_merge(c, MergeEvent(j, k))]] += rate(k)
            q[i, index[apply_merge(c, MergeEvent(j, boundary=True))]] += tail(m - j + 1)
        q[i, i] -= q[i].sum()
    return states, q


def ctmc_oracle(source, n: int, t: float, t_start: float = 0.0, step: float = 1e-3) -> OracleResult:
    """Law of the partition of [n] at time t from singletons.

    ``source`` is a ReproductionMeasure (homogeneous, one matrix exponential) or
    a RateSchedule (product of midpoint exponentials with ``step``, compared
    against step/2; the gap is reported).
    """
    if n > MAX_ORACLE_N:
        raise DomainError(f"oracle enumerates 2^(n-1) states; n <= {MAX_ORACLE_N}")
    if n < 1:
        raise DomainError("n must be >= 1")
    if isinstance(source, ReproductionMeasure):
        states, q = partition_generator(n, source.mass, source.tail)
        p0 = np.zeros(len(states))
        p0[states.index(ConsecutivePartition((1,) * n))] = 1.0
        return OracleResult(states, p0 @ expm(q * (t - t_start)))

    def run(h):
        nsteps = max(1, int(round((t - t_start) / h)))
        h = (t - t_start) / nsteps
        states = all_partitions(n)
        p = np.zeros(len(states))
        p[states.index(ConsecutivePartition((1,) * n))] = 1.0
        for s in range(nsteps):
            mid = t_start + (s + 0.5) * h
            theta = source.theta(mid)
            _, q = partition_generator(n, lambda k: M.rate_measure(source.mech, theta, k),
                                       lambda k: M.rate_tail(source.mech, theta, k))
            p = p @ expm(q * h)
        return states, p

    states, coarse = run(step)
    _, fine = run(step / 2)
    return OracleResult(states, fine, float(np.abs(fine - coarse).max()))


# ---------------------------------------------------------------------------
# Closed-form marginals


def marginal_block_gf(mech: M.BranchingMechanism, lam: float, t: float, z: float, s: Optional[float] = None) -> float:
    """E[z^{#C_1}]: 1 - v_t(lam(1-z))/v_t(lam), or for lam = inf the block of C(s, t)."""
    if not 0 <= z <= 1:
        raise DomainError("z must lie in [0, 1]")
    if math.isinf(lam):
        if s is None or not 0 < s <= t:
            raise DomainError("lambda = inf needs 0 < s <= t")
        if s == t:
            return z
        vs = M.v_inf(mech, s)
        return 1.0 - M.v(mech, t - s, vs * (1 - z)) / M.v_inf(mech, t) if z < 1 else 1.0
    if t == 0:
        return z
    if z == 1:
        return 1.0 - (M.v_zero(mech, t) if M.grey(mech).explosion else 0.0) / M.v(mech, t, lam)
    return 1.0 - M.v(mech, t, lam * (1 - z)) / M.v(mech, t, lam)


def limit_partition_gf(mech: M.BranchingMechanism, lam: float, z: float) -> float:
    """gf of #C_1 of the frozen partition C^lam(inf) for a subcritical mechanism."""
    if M.classify(mech).kind is not M.Kind.SUBCRITICAL:
        raise DomainError("the frozen limit needs a subcritical mechanism")
    if not 0 <= z < 1:
        raise DomainError("z must lie in [0, 1)")
    d = M.psi_prime_zero(mech)
    lo = lam * (1 - z)
    if lo == lam:
        return 0.0
    integral = M._integrate(lambda u: 1.0 / M.psi_eval(mech, u), lo, lam)
    return -math.expm1(-d * integral)


def singleton_fraction(mech: M.BranchingMechanism, lam: float, t: float) -> float:
    """D_t^lam = (lam/Psi(lam)) (Psi(v)/v), v = v_t(lam); equals lam d/dlam log v_t(lam)."""
    if t == 0:
        return 1.0
    p = M.psi_eval(mech, lam)
    if p == 0:
        # lam is a fixed point of v_t, where d v_t / d lam = exp(-Psi'(lam) t)
        return math.exp(-M.psi_prime(mech, lam) * t)
    v = M.v(mech, t, lam)
    return lam / p * M.psi_eval(mech, v) / v


def blocks_geometric_param(mech: M.BranchingMechanism, lam: float, t: float) -> float:
    """v_t(0)/v_t(lam): success probability of the geometric number of blocks."""
    if not M.grey(mech).explosion:
        raise DomainError("a finite number of blocks needs the explosion condition")
    return M.v_zero(mech, t) / M.v(mech, t, lam)


def reduced_tree_check(mech: M.BranchingMechanism, T: float, t: float, z: float):
    """(gf of the reduced-tree offspring count, first-jump survival)."""
    if not M.grey(mech).extinction:
        raise DomainError("reduced trees need Grey's extinction condition")
    if not 0 <= t < T:
        raise DomainError("need 0 <= t < T")
    vT = M.v_inf(mech, T)
    vr = M.v_inf(mech, T - t)
    gf = 1.0 - (M.v(mech, t, vr * (1 - z)) if z < 1 else 0.0) / vT if t > 0 else z
    surv = (M.psi_eval(mech, vT) / vT) * (vr / M.psi_eval(mech, vr))
    return gf, surv


# ---------------------------------------------------------------------------
# Complete genealogy for the Feller flow


@dataclass
class IntervalGenealogy:
    """Interval partitions of the current population [0, Y] by ancestors at each time."""

    times: list
    lengths: list          # lengths[i]: interval lengths of C(times[i]) in order
    groupings: list        # groupings[i]: C(times[i], times[i+1]) on the intervals of C(times[i])
    population: float


def coag_intervals(lengths, d: ConsecutivePartition) -> np.ndarray:
    lengths = np.asarray(lengths, dtype=float)
    if d.ground_size != lengths.size:
        raise DomainError("grouping must partition the intervals")
    edges = np.cumsum((0,) + d.sizes)
    return np.add.reduceat(lengths, edges[:-1]) if lengths.size else lengths


def interval_genealogy(mech: M.BranchingMechanism, t_grid, x_max: float, rng) -> IntervalGenealogy:
    """Coupled forward paths X_{-t,0} for t in t_grid, built by composition."""
    if not mech.is_feller:
        raise DomainError("interval genealogy is pathwise exact for the Feller family only")
    times = [float(t) for t in t_grid]
    if not times or times[0] <= 0 or any(b <= a for a, b in zip(times, times[1:])):
        raise DomainError("t_grid must be positive and increasing")
    s2, b = mech.sigma2, mech.beta
    # pieces X_{-t_i, -t_{i-1}}, sampled from the oldest one outward
    pieces = [None] * len(times)
    horizon = float(x_max)
    for i in range(len(times) - 1, -1, -1):
        dt = times[i] - (times[i - 1] if i else 0.0)
        pieces[i] = flow.sample_feller_forward(s2, b, dt, horizon, rng)
        horizon = pieces[i].end_value()
    composed = [pieces[0]]
    for i in range(1, len(times)):
        composed.append(flow.compose(composed[-1], pieces[i]))
    lengths = [p.sizes.copy() for p in composed]
    groupings = []
    for i in range(len(times) - 1):
        outer, inner = composed[i], pieces[i + 1]
        levels = np.concatenate(([0.0], np.cumsum(inner.sizes)))
        # ancestor of each interval of C(t_i): the inner jump whose level range holds its location
        owner = np.searchsorted(levels, outer.locs, side="left")
        _, counts = np.unique(owner, return_counts=True)
        groupings.append(ConsecutivePartition(tuple(int(c) for c in counts)))
    return IntervalGenealogy(times, lengths, groupings, float(pieces[0].end_value()))
