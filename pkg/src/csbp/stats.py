"""Goodness-of-fit helpers returning uniform TestReport records."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats as sst

from .errors import DomainError

MIN_SAMPLES = 100


@dataclass
class TestReport:
    statistic: str          # KS | chi-square | TV | z-score | max-rel-error | ...
    value: float
    threshold: float        # p-value for tests, bound for distances
    passed: bool
    n: int
    name: str = ""
    anchor: str = ""

    __test__ = False  # keep pytest from collecting this class

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag} {self.name} {self.statistic}={self.value:.6g} threshold={self.threshold:.6g} n={self.n}"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["value"] = _finite(d["value"])
        d["threshold"] = _finite(d["threshold"])
        return d


def _finite(x):
    x = float(x)
    return x if math.isfinite(x) else str(x)


def _check_samples(x):
    x = np.asarray(x, dtype=float)
    if x.size < MIN_SAMPLES:
        raise DomainError(f"need at least {MIN_SAMPLES} samples, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise DomainError("samples must be finite")
    return x


def ks_test(samples, cdf, alpha: float = 0.01, name: str = "") -> TestReport:
    """One-sample KS with the asymptotic p-value; pass iff p > alpha."""
    x = _check_samples(samples)
    if np.ptp(x) == 0:
        raise DomainError("degenerate sample")
    res = sst.kstest(x, cdf, method="asymp")
    return TestReport("KS", float(res.statistic), float(res.pvalue), bool(res.pvalue > alpha), x.size, name)


def ks_2sample(a, b, alpha: float = 0.01, name: str = "") -> TestReport:
    a, b = _check_samples(a), _check_samples(b)
    res = sst.ks_2samp(a, b, method="asymp")
    return TestReport("KS2", float(res.statistic), float(res.pvalue), bool(res.pvalue > alpha), a.size + b.size, name)


def pool_cells(observed, expected, min_expected: float = 5.0):
    """Merge adjacent cells (left to right) until every expectation is >= min_expected."""
    obs_out, exp_out = [], []
    o_acc = e_acc = 0.0
    for o, e in zip(observed, expected):
        o_acc += o
        e_acc += e
        if e_acc >= min_expected:
            obs_out.append(o_acc)
            exp_out.append(e_acc)
            o_acc = e_acc = 0.0
    if e_acc > 0 or o_acc > 0:
        if exp_out:
            obs_out[-1] += o_acc
            exp_out[-1] += e_acc
        else:
            obs_out.append(o_acc)
            exp_out.append(e_acc)
    return np.array(obs_out), np.array(exp_out)


def chi_square(counts, probs, alpha: float = 0.01, ddof: int = 0, name: str = "") -> TestReport:
    """Pearson chi-square of a histogram against cell probabilities, with pooling."""
    counts = np.asarray(counts, dtype=float)
    probs = np.asarray(probs, dtype=float)
    if counts.shape != probs.shape:
        raise DomainError("histogram and pmf must align")
    n = counts.sum()
    if n < MIN_SAMPLES:
        raise DomainError(f"need at least {MIN_SAMPLES} samples, got {int(n)}")
    if np.any(probs < 0):
        raise DomainError("negative probability")
    missing = 1.0 - probs.sum()
    if missing > 1e-9:
        # unobserved remainder becomes an explicit cell
        counts = np.append(counts, 0.0)
        probs = np.append(probs, missing)
    obs, exp = pool_cells(counts, probs * n)
    if obs.size < 2:
        raise DomainError("fewer than two cells after pooling")
    stat = float(np.sum((obs - exp) ** 2 / exp))
    dof = obs.size - 1 - ddof
    p = float(sst.chi2.sf(stat, dof))
    return TestReport("chi-square", stat, p, bool(p > alpha), int(n), name)


def tv_distance(hist_a, hist_b) -> float:
    """Total variation between two histograms (normalised) on their common support."""
    a = np.asarray(hist_a, dtype=float)
    b = np.asarray(hist_b, dtype=float)
    m = max(a.size, b.size)
    a = np.pad(a, (0, m - a.size))
    b = np.pad(b, (0, m - b.size))
    if a.sum() <= 0 or b.sum() <= 0:
        raise DomainError("empty histogram")
    return 0.5 * float(np.abs(a / a.sum() - b / b.sum()).sum())


def tv_report(hist_a, hist_b, bound: float, name: str = "") -> TestReport:
    d = tv_distance(hist_a, hist_b)
    n = int(round(max(np.sum(hist_a), np.sum(hist_b))))  # one side may be a probability vector
    return TestReport("TV", d, bound, bool(d < bound), n, name)


def mean_and_se(x):
    x = np.asarray(x, dtype=float)
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


def z_test(estimate: float, target: float, se: float, k: float = 3.0, n: int = 0, name: str = "") -> TestReport:
    """Pass iff |estimate - target| <= k standard errors."""
    if se < 0:
        raise DomainError("standard error must be >= 0")
    z = abs(estimate - target) / se if se > 0 else (0.0 if estimate == target else math.inf)
    return TestReport("z-score", z, k, bool(z <= k), n, name)


def bound_report(value: float, bound: float, statistic: str, n: int = 0, name: str = "") -> TestReport:
    """Deterministic check: pass iff value <= bound."""
    return TestReport(statistic, float(value), float(bound), bool(value <= bound), n, name)
