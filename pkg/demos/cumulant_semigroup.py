"""Tabulate v_t(lam) for four mechanisms and show the composition identity numerically."""
import math

from csbp import mechanism as M

mechs = {
    "feller(2, 0.5)": M.feller(2.0, 0.5),
    "neveu": M.neveu(),
    "stable(1.5)": M.stable(1.5, 1.0),
    "subcritical feller(2, -1)": M.feller(2.0, -1.0),
}
lam, t, s = 3.0, 0.7, 1.1
print(f"{'mechanism':28s} {'v_t(lam)':>14s} {'v_(t+s)':>14s} {'v_t(v_s)':>14s} {'v_t(inf)':>12s}")
for name, m in mechs.items():
    full = M.v(m, t + s, lam)
    comp = M.v(m, t, M.v(m, s, lam))
    vinf = M.v_inf(m, t) if M.grey(m).extinction else math.inf
    print(f"{name:28s} {M.v(m, t, lam):14.10f} {full:14.10f} {comp:14.10f} {vinf:12.6g}")
