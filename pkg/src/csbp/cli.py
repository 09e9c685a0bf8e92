"""Command line entry point: csbp {vt, coalesce, feller-cpp, validate}.

Every flag can also come from a YAML file given by --config; keys are the flag
names (dashes or underscores).  Precedence: flag > CSBP_SEED (seed only) >
config file > built-in default.
"""
from __future__ import annotations

import argparse
import csv
import math
import sys
from pathlib import Path

import yaml

from . import coalescent as C
from . import feller as Fe
from . import harness as H
from . import mechanism as M
from .errors import ConfigError, CSBPError
from .partition import render

DEFAULTS = {
    "vt": {"mech": None, "t": None, "lam": None, "out": None},
    "coalesce": {"mech": None, "lam": None, "n": None, "t": None, "reps": 1, "seed": H.DEFAULT_SEED,
                 "s": 0.01, "out": None},
    "feller-cpp": {"beta": 0.0, "sigma2": 2.0, "xmax": None, "reps": 1, "t_min": Fe.DEFAULT_T_MIN,
                   "seed": H.DEFAULT_SEED, "out": None},
    "validate": {"experiment": None, "seed": H.DEFAULT_SEED, "out": None},
}


def _read_yaml(path) -> dict:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}", key="config") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"unparseable YAML: {exc}", key="config") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping", key="config")
    return {str(k).replace("-", "_"): v for k, v in data.items()}


def resolve(command: str, args: argparse.Namespace) -> dict:
    """Merge defaults, config file, CSBP_SEED and flags for one subcommand."""
    defaults = {k.replace("-", "_"): v for k, v in DEFAULTS[command].items()}
    values = dict(defaults)
    cfg = _read_yaml(args.config) if getattr(args, "config", None) else {}
    extra = {}
    for k, v in cfg.items():
        if k in values:
            values[k] = v
        elif command == "validate" and k in ("params", "mechanism", "reps"):
            extra[k] = v
        else:
            raise ConfigError(f"not an option of {command}", key=k)
    if "seed" in values:
        values["seed"] = H.env_seed(values["seed"])
    for k in defaults:
        flag = getattr(args, k, None)
        if flag is not None:
            values[k] = flag
    values.update(extra)
    return values


def _require(values: dict, *keys):
    for k in keys:
        if values.get(k) is None:
            raise ConfigError("required", key=k)


def _grid(x, key) -> list:
    """Comma list, YAML list or scalar; 'inf' allowed."""
    if isinstance(x, (list, tuple)):
        items = list(x)
    else:
        items = [s for s in str(x).split(",") if s.strip()]
    try:
        out = [float(v) for v in items]
    except (TypeError, ValueError):
        raise ConfigError(f"bad number in {x!r}", key=key) from None
    if not out:
        raise ConfigError("empty grid", key=key)
    return out


def _int(x, key, low=None) -> int:
    try:
        v = int(x)
    except (TypeError, ValueError):
        raise ConfigError("must be an integer", key=key) from None
    if isinstance(x, float) and x != v:
        raise ConfigError("must be an integer", key=key)
    if low is not None and v < low:
        raise ConfigError(f"must be >= {low}", key=key)
    return v


def _float(x, key) -> float:
    try:
        return float(x)
    except (TypeError, ValueError):
        raise ConfigError("must be a number", key=key) from None


def _mechanism(source) -> M.BranchingMechanism:
    if isinstance(source, dict):
        return M.mechanism_from_config(source)
    return M.mechanism_from_config(_read_yaml(source))


def _writer(out):
    fh = open(out, "w", newline="") if out else sys.stdout
    return fh, csv.writer(fh, lineterminator="\n")


def cmd_vt(values: dict) -> int:
    _require(values, "mech", "t", "lam")
    mech = _mechanism(values["mech"])
    fh, w = _writer(values["out"])
    w.writerow(["t", "lam", "v"])
    for t in _grid(values["t"], "t"):
        for lam in _grid(values["lam"], "lam"):
            val = M.v_inf(mech, t) if math.isinf(lam) else M.v(mech, t, lam)
            w.writerow([repr(t), repr(lam), repr(float(val))])
    if fh is not sys.stdout:
        fh.close()
    return 0


def cmd_coalesce(values: dict) -> int:
    _require(values, "mech", "lam", "n", "t")
    mech = _mechanism(values["mech"])
    lam = _float(values["lam"], "lam")
    n = _int(values["n"], "n", 1)
    t = _float(values["t"], "t")
    reps = _int(values["reps"], "reps", 1)
    s = _float(values["s"], "s")
    seeds = H.Seeds(_int(values["seed"], "seed"))
    fh = open(values["out"], "w") if values["out"] else sys.stdout
    for i in range(reps):
        tr = C.simulate(mech, lam, n, t, seeds.rng(("coalesce", i)), s=s, record=False)
        fh.write(render(tr.final) + "\n")
    if fh is not sys.stdout:
        fh.close()
    return 0


def cmd_feller_cpp(values: dict) -> int:
    _require(values, "xmax")
    p = Fe.FellerParams(_float(values["sigma2"], "sigma2"), _float(values["beta"], "beta"))
    x_max = _float(values["xmax"], "xmax")
    t_min = _float(values["t_min"], "t_min")
    reps = _int(values["reps"], "reps", 1)
    seeds = H.Seeds(_int(values["seed"], "seed"))
    fh, w = _writer(values["out"])
    w.writerow(["rep", "x", "depth"])
    for i in range(reps):
        cpp = Fe.sample_cpp(p, x_max, seeds.rng(("feller-cpp", i)), t_min=t_min)
        for x, d in cpp.atoms:
            w.writerow([i, repr(x), "inf" if math.isinf(d) else repr(d)])
    if fh is not sys.stdout:
        fh.close()
    return 0


def cmd_validate(values: dict) -> int:
    _require(values, "experiment")
    name = str(values["experiment"])
    seed = _int(values["seed"], "seed")
    names = H.ACCEPTANCE_ORDER if name == "all" else [name]
    if name == "all" and any(k in values for k in ("params", "mechanism", "reps")):
        raise ConfigError("params, mechanism and reps need a single experiment", key="experiment")
    ok = True
    for nm in names:
        cfg = H.ExperimentConfig.from_dict({
            "experiment": nm, "seed": seed, "out": values["out"],
            **{k: values[k] for k in ("params", "mechanism", "reps") if k in values},
        })
        res = H.run(cfg)
        for r in res.reports:
            print(r.line())
        ok = ok and res.passed
    print("ALL PASS" if ok else "SOME CHECKS FAILED")
    return 0 if ok else 1


COMMANDS = {"vt": cmd_vt, "coalesce": cmd_coalesce, "feller-cpp": cmd_feller_cpp, "validate": cmd_validate}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="csbp", description="Consecutive coalescents of branching flows.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("vt", help="tabulate v_t(lam) as CSV")
    p.add_argument("--mech", help="mechanism YAML file")
    p.add_argument("--t", help="comma-separated times")
    p.add_argument("--lam", help="comma-separated lambdas, 'inf' allowed")
    p.add_argument("--out", help="CSV file (default stdout)")

    p = sub.add_parser("coalesce", help="sample C^lam(t) restricted to [n]")
    p.add_argument("--mech")
    p.add_argument("--lam", help="lambda or 'inf'")
    p.add_argument("--n", type=int)
    p.add_argument("--t", type=float)
    p.add_argument("--reps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--s", type=float, help="start time when lam = inf")
    p.add_argument("--out", help="output file, one partition per line (default stdout)")

    p = sub.add_parser("feller-cpp", help="sample the Feller coalescent point process")
    p.add_argument("--beta", type=float)
    p.add_argument("--sigma2", type=float)
    p.add_argument("--xmax", type=float)
    p.add_argument("--reps", type=int)
    p.add_argument("--t-min", dest="t_min", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="CSV file (default stdout)")

    p = sub.add_parser("validate", help="run an acceptance experiment or 'all'")
    p.add_argument("experiment", nargs="?")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="directory for CSV data and JSON reports")

    for p in sub.choices.values():
        p.add_argument("--config", help="YAML file whose keys mirror the flags")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        values = resolve(args.command, args)
        return COMMANDS[args.command](values)
    except ConfigError as exc:
        print(f"csbp: config error: {exc}", file=sys.stderr)
        return 2
    except CSBPError as exc:
        print(f"csbp: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
