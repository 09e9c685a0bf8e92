"""Experiment registry, seeding and report writing for the validation runs.

Each experiment ties a simulation (or numerical route) to an analytic oracle
and returns a list of TestReport records.  Seeds for sub-streams derive from a
master seed as ``master XOR hash(key)`` so every run is reproducible.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy import integrate, stats as sst

from . import coalescent as C
from . import feller as Fe
from . import flow as F
from . import mechanism as M
from . import poissonbox as B
from . import stats as S
from .errors import ConfigError, CSBPError

DEFAULT_SEED = 20240617
SEED_ENV = "CSBP_SEED"

# thresholds fixed by the acceptance criteria
SEMIGROUP_RTOL = 1e-8
CLOSED_FORM_RTOL = 1e-6
ALPHA = 0.01
TV_BOUND = 0.01
Z_SE = 3.0


# ---------------------------------------------------------------------------
# Seeding


def key_hash(key) -> int:
    return int.from_bytes(hashlib.blake2b(str(key).encode(), digest_size=8).digest(), "little")


def derive_seed(master: int, key) -> int:
    """seed_i = master XOR hash(i), reduced to 64 bits."""
    return (int(master) ^ key_hash(key)) & (2 ** 64 - 1)


class Seeds:
    def __init__(self, master: int):
        self.master = int(master)

    def rng(self, key) -> np.random.Generator:
        return np.random.default_rng(derive_seed(self.master, key))


def env_seed(default: Optional[int]) -> Optional[int]:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return default
    try:
        return int(raw)
    except ValueError:
        raise ConfigError("must be an integer", key=SEED_ENV) from None


# ---------------------------------------------------------------------------
# Config


@dataclass
class ExperimentConfig:
    experiment: str
    params: dict = field(default_factory=dict)
    seed: int = DEFAULT_SEED
    out: Optional[str] = None
    mechanism: Optional[dict] = None

    KEYS = ("experiment", "params", "seed", "out", "mechanism", "reps")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a mapping", key="config")
        for k in d:
            if k not in cls.KEYS:
                raise ConfigError("unknown key", key=k)
        if "experiment" not in d:
            raise ConfigError("missing", key="experiment")
        params = dict(d.get("params") or {})
        if "reps" in d:
            params["reps"] = d["reps"]
        try:
            seed = int(d.get("seed", DEFAULT_SEED))
        except (TypeError, ValueError):
            raise ConfigError("must be an integer", key="seed") from None
        cfg = cls(str(d["experiment"]), params, seed, d.get("out"), d.get("mechanism"))
        cfg.validate()
        return cfg

    def validate(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}", key="experiment")
        exp = EXPERIMENTS[self.experiment]
        for k in self.params:
            if k not in exp.defaults:
                raise ConfigError(f"not a parameter of {self.experiment}", key=f"params.{k}")
        if "reps" in self.params:
            r = self.params["reps"]
            if not isinstance(r, (int, np.integer)) or isinstance(r, bool) or r < 1:
                raise ConfigError("replicate count must be an integer >= 1", key="reps")
        if self.mechanism is not None:
            if not exp.takes_mechanism:
                raise ConfigError(f"{self.experiment} runs fixed mechanisms", key="mechanism")
            M.mechanism_from_config(self.mechanism)

    def merged_params(self) -> dict:
        p = dict(EXPERIMENTS[self.experiment].defaults)
        p.update(self.params)
        return p


def load_config(path) -> ExperimentConfig:
    import yaml

    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"unparseable config: {exc}", key="config") from None
    return ExperimentConfig.from_dict(data)


# ---------------------------------------------------------------------------
# Results


class DataSink:
    """Collects CSV tables; written next to the report when an output dir is given."""

    def __init__(self):
        self.tables = {}

    def add(self, name: str, header, rows):
        self.tables[name] = (list(header), [list(r) for r in rows])


@dataclass
class RunResult:
    experiment: str
    anchor: str
    seed: int
    params: dict
    reports: list
    files: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return bool(self.reports) and all(r.passed for r in self.reports)

    def to_json(self) -> str:
        doc = {
            "experiment": self.experiment,
            "anchor": self.anchor,
            "seed": self.seed,
            "params": _jsonable(self.params),
            "passed": self.passed,
            "reports": [r.to_dict() for r in self.reports],
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return float(x) if math.isfinite(x) else str(float(x))
    return x


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return "inf" if math.isinf(v) else repr(float(v))
    return v


@dataclass
class Experiment:
    name: str
    func: Callable
    anchor: str
    defaults: dict
    takes_mechanism: bool = False


EXPERIMENTS: dict = {}


def experiment(name: str, anchor: str, takes_mechanism: bool = False, **defaults):
    def wrap(fn):
        EXPERIMENTS[name] = Experiment(name, fn, anchor, defaults, takes_mechanism)
        return fn
    return wrap


def run(config: ExperimentConfig) -> RunResult:
    """Run one experiment; writes <name>.report.json and CSV data when config.out is set."""
    config.validate()
    exp = EXPERIMENTS[config.experiment]
    params = config.merged_params()
    mech = M.mechanism_from_config(config.mechanism) if config.mechanism is not None else None
    sink = DataSink()
    reports = exp.func(params, Seeds(config.seed), mech, sink)
    for r in reports:
        r.anchor = exp.anchor
        if not r.name.startswith(exp.name):
            r.name = f"{exp.name}/{r.name}" if r.name else exp.name
    result = RunResult(exp.name, exp.anchor, config.seed, params, reports)
    if config.out is not None:
        out = Path(config.out)
        out.mkdir(parents=True, exist_ok=True)
        for name, (header, rows) in sink.tables.items():
            path = out / f"{exp.name}.{name}.csv"
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(header)
                w.writerows([_fmt(v) for v in row] for row in rows)
            result.files.append(str(path))
        path = out / f"{exp.name}.report.json"
        path.write_text(result.to_json())
        result.files.append(str(path))
    return result


def run_many(names, seed: int, out: Optional[str] = None, overrides: Optional[dict] = None) -> list:
    results = []
    for name in names:
        cfg = ExperimentConfig(name, dict((overrides or {}).get(name, {})), seed, out)
        results.append(run(cfg))
    return results


# ---------------------------------------------------------------------------
# Shared pieces


def _tempered_mechanism() -> M.BranchingMechanism:
    dens = M.TabulatedDensity(lambda x: x ** -2.5 * math.exp(-x), name="tempered x^-2.5 e^-x")
    return M.BranchingMechanism(0.5, 0.2, dens)


def _label(mech: M.BranchingMechanism) -> str:
    lv = mech.levy
    if isinstance(lv, M.NoLevy):
        return f"feller(s2={mech.sigma2:g},b={mech.beta:g})"
    if isinstance(lv, M.Stable):
        return f"stable(a={lv.alpha:g},c={lv.c:g},b={mech.beta:g},s2={mech.sigma2:g})"
    if isinstance(lv, M.Neveu):
        return f"neveu(b={mech.beta:g},s2={mech.sigma2:g})"
    return getattr(lv, "name", type(lv).__name__)


def _binomial_z(hits: int, n: int, target: float, name: str) -> S.TestReport:
    se = math.sqrt(target * (1 - target) / n)
    r = S.z_test(hits / n, target, se, k=Z_SE, n=n, name=name)
    return r


def _mean_z(values, target: float, name: str) -> S.TestReport:
    m, se = S.mean_and_se(values)
    return S.z_test(m, target, se, k=Z_SE, n=len(values), name=name)


def _exp_cdf(rate: float):
    return sst.expon(scale=1.0 / rate).cdf


# ---------------------------------------------------------------------------
# 1. cumulant semigroup


@experiment("semigroup", "cumulant semigroup v_{t+s} = v_t o v_s", takes_mechanism=True,
            n_pairs=20, n_lam=20, t_lo=0.05, t_hi=5.0, lam_lo=1e-3, lam_hi=1e3)
def _semigroup(p, seeds, mech, sink):
    ts = np.geomspace(p["t_lo"], p["t_hi"], p["n_pairs"])
    ss = ts[(7 * np.arange(p["n_pairs"])) % p["n_pairs"]]
    lams = np.geomspace(p["lam_lo"], p["lam_hi"], p["n_lam"])
    mechs = [mech] if mech is not None else [M.feller(2.0, 0.5), M.neveu(), M.stable(1.5, 1.0), _tempered_mechanism()]
    reports, rows = [], []
    for m in mechs:
        closed = M._closed_form_v(m, 1.0, 1.0) is not None
        routes = ("auto", "ode") if closed else ("auto",)
        for route in routes:
            worst = 0.0
            for t, s in zip(ts, ss):
                for lam in lams:
                    full = M.v(m, t + s, lam, method=route)
                    comp = M.v(m, t, M.v(m, s, lam, method=route), method=route)
                    err = abs(full - comp) / full
                    worst = max(worst, err)
                    rows.append((_label(m), route, t, s, lam, full, comp, err))
            name = f"{_label(m)}/{'closed-form' if route == 'auto' and closed else route}"
            reports.append(S.bound_report(worst, SEMIGROUP_RTOL, "max-rel-error", len(ts) * len(lams), name))
    sink.add("grid", ["mechanism", "route", "t", "s", "lam", "v_t_plus_s", "v_t_of_v_s", "rel_err"], rows)
    return reports


# ---------------------------------------------------------------------------
# 2. Feller comb: pairwise MRCA law


@experiment("feller-cpp", "Feller MRCA law P(T_xy <= t) = exp(-beta_hat_t (y-x)) via the Poisson comb",
            sigma2=2.0, reps=100000,
            cases=[[0.0, 1.0, 1.0], [0.0, 0.5, 0.5], [0.7, 0.5, 0.3], [1.0, 2.0, 1.0], [-1.0, 2.0, 0.8], [-1.0, 5.0, 1.0]])
def _feller_cpp(p, seeds, mech, sink):
    reports, rows = [], []
    n = int(p["reps"])
    for i, (beta, t, d) in enumerate(p["cases"]):
        par = Fe.FellerParams(p["sigma2"], beta)
        rng = seeds.rng(("feller-cpp", i))
        cpp = Fe.sample_cpp(par, n * d, rng, t_min=t / 2)
        edges = np.linspace(0.0, cpp.x_max, n + 1)
        T = cpp.T(edges[:-1], edges[1:])
        target = Fe.mrca_cdf(par, t, 0.0, d)
        hits = int(np.sum(T <= t))
        reports.append(_binomial_z(hits, n, target, f"beta={beta:g},t={t:g},d={d:g}"))
        rows.append((beta, t, d, n, hits / n, target))
        if beta < 0:
            # mass at inf: P(T = inf) = 1 - exp(2 beta d / sigma2)
            inf_target = Fe.p_no_ancestor(par, 0.0, d)
            reports.append(_binomial_z(int(np.sum(np.isinf(T))), n, inf_target,
                                       f"beta={beta:g},d={d:g},no-common-ancestor"))
    sink.add("cdf", ["beta", "t", "d", "windows", "empirical", "exact"], rows)
    return reports


# ---------------------------------------------------------------------------
# 3. inverse flow at an exponential level


def _forward_sampler(mech, t, eps):
    if mech.is_feller:
        return lambda h, r: F.sample_feller_forward(mech.sigma2, mech.beta, t, h, r)
    if isinstance(mech.levy, M.Neveu) and mech.sigma2 == 0 and mech.beta == 0:
        return lambda h, r: F.sample_neveu_forward(t, h, r, eps=eps)
    raise ConfigError("pathwise forward flow needs Feller or Neveu (sigma2 = beta = 0)", key="mechanism")


@experiment("inverse-flow", "inverse flow: hat X_t(e_q) ~ Exp(v_t(q))",
            reps=100000, eps=1e-6,
            cases=[["feller", 2.0, 0.0, 1.0, 0.5], ["feller", 2.0, 0.0, 1.0, 1.0],
                   ["feller", 2.0, 0.0, 1.0, 2.0], ["neveu", 0.0, 0.0, 0.6931471805599453, 4.0]])
def _inverse_flow(p, seeds, mech, sink):
    reports, rows = [], []
    n = int(p["reps"])
    for i, (fam, s2, beta, t, q) in enumerate(p["cases"]):
        m = M.feller(s2, beta) if fam == "feller" else M.neveu(s2, beta)
        rate = M.v(m, t, q)
        rng = seeds.rng(("inverse-flow", i))
        sub = _forward_sampler(m, t, p["eps"])
        levels = rng.exponential(1.0 / q, n)
        chunk = 2.0 / q
        xs = np.array([F.inverse_at_level(sub, y, rng, chunk=chunk) for y in levels])
        tag = f"{_label(m)},t={t:.6g},q={q:g}"
        reports.append(S.ks_test(xs, _exp_cdf(rate), ALPHA, f"{tag}/pathwise"))
        # second route: the law of the inverse path sampled directly
        ys = F.semigroup_exponential_sample(m, t, q, seeds.rng(("inverse-flow-law", i)), size=n)
        reports.append(S.ks_test(ys, _exp_cdf(rate), ALPHA, f"{tag}/law"))
        rows.extend((tag, j, x) for j, x in enumerate(xs[:1000]))
    sink.add("samples", ["case", "index", "value"], rows)
    return reports


# ---------------------------------------------------------------------------
# 4. Poisson boxes: direct vs pullback


@experiment("poisson-box", "Poisson box block law: direct construction equals pullback of a Poisson sample",
            n_blocks=100000, lam=1.0, eps=1e-3,
            feller=[2.0, 0.3, 1.0], neveu_t=0.2)
def _poisson_box(p, seeds, mech, sink):
    lam = p["lam"]
    s2, beta, tf = p["feller"]
    cases = [
        (f"feller(s2={s2:g},b={beta:g}),t={tf:g}", B.from_mechanism(M.feller(s2, beta), tf),
         lambda h, r: F.sample_feller_forward(s2, beta, tf, h, r)),
        (f"neveu,t={p['neveu_t']:g}", B.from_mechanism(M.neveu(), p["neveu_t"]), None),
    ]
    reports, rows = [], []
    n = int(p["n_blocks"])
    for i, (tag, phi, sub) in enumerate(cases):
        sub = sub or B.path_sampler(phi, eps=p["eps"])
        law = B.block_size_law(phi, lam)
        direct = B.direct_block_sizes(law, n, seeds.rng(("box-direct", i)))
        pulled, jp = B.pullback_block_sizes(sub, lam, n, seeds.rng(("box-pullback", i)), chunk=100.0)
        h_direct, edges = B.binned_histogram(direct)
        h_pulled, _ = B.binned_histogram(pulled)
        reports.append(S.tv_report(h_direct, h_pulled, TV_BOUND, f"{tag}/TV direct-vs-pullback"))
        gaps = np.diff(np.concatenate(([0.0], jp)))
        reports.append(S.ks_test(gaps, _exp_cdf(phi(lam)), ALPHA, f"{tag}/J' gaps"))
        exact = B.binned_law(law)
        labels = [f"{int(e)}" for e in edges] + ["inf"]
        rows.extend((tag, lab, a, b, e) for lab, a, b, e in zip(labels, h_direct, h_pulled, exact))
    sink.add("histograms", ["case", "bin_lo", "direct", "pullback", "exact_prob"], rows)
    return reports


# ---------------------------------------------------------------------------
# 5. coalescent marginals


@experiment("coalescent-marginals", "marginal block law E z^{#C_1(t)} = 1 - v_t(lam(1-z))/v_t(lam)",
            takes_mechanism=True, n=30, reps=100000, z=[0.2, 0.5, 0.8],
            cases=[["feller", 1.0, 1.0], ["neveu", 2.0, 0.5], ["stable", 1.0, 0.5]])
def _marginals(p, seeds, mech, sink):
    fixed = {"feller": M.feller(2.0, 0.3), "neveu": M.neveu(), "stable": M.stable(1.5, 1.0)}
    cases = [(mech, 1.0, 1.0)] if mech is not None else [(fixed[f], lam, t) for f, lam, t in p["cases"]]
    reports, rows = [], []
    for i, (m, lam, t) in enumerate(cases):
        rng = seeds.rng(("marginals", i))
        first = np.array([C.simulate(m, lam, p["n"], t, rng, record=False).final.sizes[0]
                          for _ in range(int(p["reps"]))])
        for z in p["z"]:
            target = C.marginal_block_gf(m, lam, t, z)
            r = _mean_z(z ** first, target, f"{_label(m)},lam={lam:g},t={t:g},z={z:g}")
            reports.append(r)
            rows.append((_label(m), lam, t, z, float(np.mean(z ** first)), target))
    sink.add("gf", ["mechanism", "lam", "t", "z", "empirical", "exact"], rows)
    return reports


# ---------------------------------------------------------------------------
# 6. CTMC oracle


@experiment("ctmc-oracle", "consecutive coalescent rates: simulation equals the matrix-exponential law",
            reps=100000, sizes=[4, 6], neveu_t=1.0, stable_s=0.1, stable_t=0.3)
def _ctmc(p, seeds, mech, sink):
    reports, rows = [], []
    sched = C.schedule(M.stable(1.5, 1.0), math.inf)
    for n in p["sizes"]:
        for kind in ("neveu", "stable-inf"):
            rng = seeds.rng(("ctmc", kind, n))
            if kind == "neveu":
                oracle = C.ctmc_oracle(C.ReproductionMeasure.neveu(), n, p["neveu_t"])
                runs = [C.simulate_homogeneous(C.ReproductionMeasure.neveu(), n, p["neveu_t"], rng,
                                               record=False).final for _ in range(int(p["reps"]))]
            else:
                oracle = C.ctmc_oracle(sched, n, p["stable_t"], t_start=p["stable_s"])
                runs = [C.simulate_inhomogeneous(sched, n, p["stable_s"], p["stable_t"], rng, record=False).final
                        for _ in range(int(p["reps"]))]
            index = {s: i for i, s in enumerate(oracle.states)}
            counts = np.bincount([index[c] for c in runs], minlength=len(index))
            reports.append(S.tv_report(counts, oracle.probs, TV_BOUND, f"{kind},n={n}"))
            rows.extend((kind, n, "".join(map(str, s.sizes)), c, pr, oracle.richardson_gap)
                        for s, c, pr in zip(oracle.states, counts, oracle.probs))
    sink.add("partitions", ["case", "n", "sizes", "count", "oracle_prob", "oracle_gap"], rows)
    return reports


# ---------------------------------------------------------------------------
# 7. Bolthausen-Sznitman block counts


@experiment("bolthausen-sznitman", "Neveu genealogy: block counts follow the rate l/(k(k-1)) chain; n^{e^-t} scaling",
            n=50, t=1.0, reps=100000, scale_sizes=[2000, 8000], scale_reps=100000)
def _bs(p, seeds, mech, sink):
    mu = C.ReproductionMeasure.neveu()
    n, t = p["n"], p["t"]
    rng = seeds.rng("bs-partitions")
    counts = np.array([C.simulate_homogeneous(mu, n, t, rng, record=False).final.n_blocks
                       for _ in range(int(p["reps"]))])
    hist = np.bincount(counts, minlength=n + 1)[1:]
    law = C.block_count_law(mu, n, t)
    reports = [S.tv_report(hist, law, TV_BOUND, f"n={n},t={t:g}/partition-vs-chain")]
    rows = [("partition", n, l + 1, hist[l], law[l]) for l in range(n)]
    a, b = p["scale_sizes"]
    scaled = []
    for m in (a, b):
        c = C.simulate_block_counts(mu, m, t, int(p["scale_reps"]), seeds.rng(("bs-scale", m)))
        scaled.append(c / m ** math.exp(-t))
    reports.append(S.ks_2sample(scaled[0], scaled[1], ALPHA, f"scaling n={a} vs n={b}"))
    qs = np.linspace(0.05, 0.95, 19)
    rows.extend(("scaled-quantile", m, q, float(np.quantile(s, q)), "") for m, s in zip((a, b), scaled) for q in qs)
    sink.add("counts", ["kind", "n", "value", "empirical", "exact"], rows)
    return reports


# ---------------------------------------------------------------------------
# 8. subcritical limits


@experiment("subcritical-limits", "subcritical Feller: interval lengths tend to the QSD; frozen partition gf",
            sigma2=2.0, beta=-1.0, t_grid=[10.0, 20.0], intervals=100000,
            lam=1.0, z=0.5, n=30, t_frozen=30.0, reps=100000)
def _subcritical(p, seeds, mech, sink):
    m = M.feller(p["sigma2"], p["beta"])
    qsd_rate = 2 * abs(p["beta"]) / p["sigma2"]
    reports = []
    # one single-piece genealogy per time: composing pieces would push the
    # oldest piece to ~intervals * v_dt(inf) / v_T(inf) jumps
    for T in p["t_grid"]:
        x_max = p["intervals"] / M.v_inf(m, T)
        g = C.interval_genealogy(m, [T], x_max, seeds.rng(("sub-intervals", T)))
        lengths = g.lengths[-1]
        reports.append(S.ks_test(lengths, _exp_cdf(qsd_rate), ALPHA, f"interval lengths t={T:g} vs Exp({qsd_rate:g})"))
    rng = seeds.rng("sub-frozen")
    first = np.array([C.simulate(m, p["lam"], p["n"], p["t_frozen"], rng, record=False).final.sizes[0]
                      for _ in range(int(p["reps"]))])
    target = C.limit_partition_gf(m, p["lam"], p["z"])
    reports.append(_mean_z(p["z"] ** first, target, f"frozen gf lam={p['lam']:g},z={p['z']:g}"))
    sink.add("lengths", ["index", "length"], list(enumerate(lengths[:5000])))
    return reports


# ---------------------------------------------------------------------------
# 9. supercritical stationarity


@experiment("supercritical-stationarity", "supercritical Feller: hat X_t(1) converges to Exp(rho)",
            sigma2=2.0, beta=1.0, t=20.0, y=1.0, reps=100000)
def _supercritical(p, seeds, mech, sink):
    m = M.feller(p["sigma2"], p["beta"])
    rho = M.classify(m).rho
    n = int(p["reps"])
    rng = seeds.rng("super-path")
    sub = _forward_sampler(m, p["t"], None)
    xs = np.array([F.inverse_at_level(sub, p["y"], rng, chunk=4.0) for _ in range(n)])
    rng = seeds.rng("super-law")
    ys = np.array([F.feller_inverse_at(F.sample_feller_inverse(p["sigma2"], p["beta"], p["t"], p["y"], rng), p["y"])
                   for _ in range(n)])
    tag = f"t={p['t']:g},y={p['y']:g} vs Exp(rho={rho:g})"
    return [S.ks_test(xs, _exp_cdf(rho), ALPHA, f"{tag}/pathwise"),
            S.ks_test(ys, _exp_cdf(rho), ALPHA, f"{tag}/inverse-path")]


# ---------------------------------------------------------------------------
# 10. generator


def _feller_semigroup_expect(sigma2, beta, h, z, f):
    """E f(hat X_h(z)) exactly: Gamma(M+1, v_h(inf)) with M ~ Poisson(beta_hat_h z)."""
    rate = F.feller_jump_rate(sigma2, beta, h)
    mean_m = F.feller_beta_hat(sigma2, beta, h) * z
    pois = sst.poisson(mean_m)
    spread = 12.0 * math.sqrt(mean_m) + 30.0
    lo, hi = max(0, int(mean_m - spread)), int(mean_m + spread)
    total = 0.0
    for k in range(lo, hi + 1):
        w = pois.pmf(k)
        if w < 1e-18:
            continue
        g = sst.gamma(k + 1, scale=1.0 / rate)
        a, b = g.ppf(1e-15), g.isf(1e-15)
        val = integrate.quad(lambda x: f(x) * g.pdf(x), a, b, epsabs=1e-15, epsrel=1e-12, limit=200)[0]
        total += w * val
    return total


@experiment("generator", "one-point motion generator: semigroup derivative and kernel closed forms",
            sigma2=2.0, beta=0.5, z=[0.5, 1.0, 2.0], h=[1e-2, 1e-3], bump_center=1.0, bump_width=0.5,
            fit_margin=2.0)
def _generator(p, seeds, mech, sink):
    s2, beta = p["sigma2"], p["beta"]
    m = M.feller(s2, beta)
    c0, w = p["bump_center"], p["bump_width"]
    f = lambda x: math.exp(-(x - c0) ** 2 / (2 * w * w))
    fp = lambda x: -(x - c0) / (w * w) * f(x)
    fpp = lambda x: ((x - c0) ** 2 / w ** 4 - 1 / (w * w)) * f(x)
    h_fit, h_check = p["h"]
    diffs = {}
    rows = []
    for z in p["z"]:
        lf = F.generator_apply(m, f, fp, fpp, z)
        for h in p["h"]:
            fd = (_feller_semigroup_expect(s2, beta, h, z, f) - f(z)) / h
            diffs[(z, h)] = abs(fd - lf)
            rows.append(("feller-fd", z, h, fd, lf))
    # C fitted on the coarse step (with margin), then checked at both steps
    c = p["fit_margin"] * max(diffs[(z, h_fit)] for z in p["z"]) / h_fit
    reports = [S.bound_report(diffs[(z, h)], c * h, "abs-diff", name=f"feller z={z:g},h={h:g},C={c:.4g}")
               for z in p["z"] for h in p["h"]]
    # drift and jump kernel: closed forms against quadrature
    st = M.stable(1.5, 1.0, 0.3)
    cst = st.levy.density_coef
    a = 1.5
    checks = []
    for z in p["z"]:
        checks.append((f"stable drift z={z:g}",
                       cst * z ** (2 - a) / (a * (a - 1) * (2 - a)) - st.beta * z, F.drift_b_general(st, z)))
        nv = M.neveu(beta=0.3)
        checks.append((f"neveu drift z={z:g}",
                       (1 - np.euler_gamma) * z - z * math.log(z) - nv.beta * z, F.drift_b_general(nv, z)))
        for hh in (0.1 * z, 0.5 * z, 0.9 * z):
            tail_q = integrate.quad(lambda x: cst * x ** (-1 - a), hh, np.inf, epsabs=0, epsrel=1e-12)[0]
            checks.append((f"stable kernel z={z:g},h={hh:g}",
                           cst * ((z - hh) * hh ** (-1 - a) + hh ** (-a) / a),
                           (z - hh) * cst * hh ** (-1 - a) + tail_q))
            tail_q = integrate.quad(lambda x: x ** -2.0, hh, np.inf, epsabs=0, epsrel=1e-12)[0]
            checks.append((f"neveu kernel z={z:g},h={hh:g}", z / hh ** 2, (z - hh) / hh ** 2 + tail_q))
            checks.append((f"library kernel stable z={z:g},h={hh:g}",
                           cst * ((z - hh) * hh ** (-1 - a) + hh ** (-a) / a), float(F.jump_density(st, z, hh))))
    for name, closed, quad in checks:
        err = abs(closed - quad) / abs(closed)
        reports.append(S.bound_report(err, CLOSED_FORM_RTOL, "rel-error", name=name))
        rows.append((name, "", "", quad, closed))
    sink.add("values", ["check", "z", "h", "numeric", "reference"], rows)
    return reports


# ---------------------------------------------------------------------------
# 11. coming down from infinity


@experiment("coming-down", "explosive Psi = -q^{1/2}: block count is geometric(v_t(0)/v_t(lam)); v_t(0) # -> Exp(1/lam)",
            lam=1.0, t=1.0, reps=100000, eps=1e-3, t_small=1e-3, lam_small=1.0, reps_small=100000, eps_small=1.0)
def _coming_down(p, seeds, mech, sink):
    m = M.stable(0.5, 1.0)
    reports, rows = [], []
    lam, t = p["lam"], p["t"]
    phi = B.from_mechanism(m, t)
    pgeo = C.blocks_geometric_param(m, lam, t)
    sub = B.path_sampler(phi, eps=p["eps"])
    rng = seeds.rng("cdi-count")
    chunk = 10.0 / phi.kill
    counts = np.array([B.pullback_block_count(sub, lam, rng, chunk=chunk) for _ in range(int(p["reps"]))])
    top = int(sst.geom(pgeo).isf(1e-3))
    hist = np.append(np.bincount(np.minimum(counts, top + 1), minlength=top + 2)[1:top + 1], np.sum(counts > top))
    probs = np.append(sst.geom(pgeo).pmf(np.arange(1, top + 1)), sst.geom(pgeo).sf(top))
    reports.append(S.chi_square(hist, probs, ALPHA, name=f"geometric count t={t:g},lam={lam:g},p={pgeo:.6g}"))
    rows.extend(("count", k + 1, hist[k], probs[k]) for k in range(top))
    ts, ls = p["t_small"], p["lam_small"]
    phi = B.from_mechanism(m, ts)
    sub = B.path_sampler(phi, eps=p["eps_small"])
    rng = seeds.rng("cdi-small")
    chunk = 2.0 / phi.kill
    v0 = M.v_zero(m, ts)
    scaled = np.array([v0 * B.pullback_block_count(sub, ls, rng, chunk=chunk) for _ in range(int(p["reps_small"]))])
    reports.append(S.ks_test(scaled, _exp_cdf(1.0 / ls), ALPHA, f"v_t(0) # at t={ts:g} vs Exp(1/lam), lam={ls:g}"))
    sink.add("counts", ["kind", "k", "observed", "prob"], rows)
    return reports


# ---------------------------------------------------------------------------
# 12. singletons


@experiment("singletons", "singleton fraction D_t^lam = P(#C_1 = 1)",
            n_blocks=10000, cases=[["neveu", 1.0, 0.1, 60000], ["feller", 1.0, 1.0, 22000]])
def _singletons(p, seeds, mech, sink):
    fixed = {"feller": M.feller(2.0, 0.0), "neveu": M.neveu()}
    reports, rows = [], []
    k = int(p["n_blocks"])
    for i, (fam, lam, t, n) in enumerate(p["cases"]):
        m = fixed[fam]
        tr = C.simulate(m, lam, int(n), t, seeds.rng(("singletons", i)), record=False)
        sizes = np.array(tr.final.sizes)
        # the last block may be cut by the restriction to [n]
        if sizes.size <= k:
            raise CSBPError(f"only {sizes.size} blocks at n={n}; raise n")
        ones = int(np.sum(sizes[:k] == 1))
        target = C.singleton_fraction(m, lam, t)
        reports.append(_binomial_z(ones, k, target, f"{_label(m)},lam={lam:g},t={t:g}"))
        rows.append((_label(m), lam, t, n, sizes.size, ones / k, target))
    sink.add("fractions", ["mechanism", "lam", "t", "n", "blocks", "empirical", "exact"], rows)
    return reports


ACCEPTANCE_ORDER = ["semigroup", "feller-cpp", "inverse-flow", "poisson-box", "coalescent-marginals",
                    "ctmc-oracle", "bolthausen-sznitman", "subcritical-limits", "supercritical-stationarity",
                    "generator", "coming-down", "singletons"]
