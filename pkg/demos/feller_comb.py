"""Sample the Feller coalescent point process and compare MRCA frequencies with the closed form."""
import numpy as np

from csbp import feller as Fe

rng = np.random.default_rng(1)
for beta in (0.5, 0.0, -1.0):
    p = Fe.FellerParams(2.0, beta)
    d, n = 0.5, 50000
    cpp = Fe.sample_cpp(p, n * d, rng, t_min=0.1)
    edges = np.linspace(0.0, cpp.x_max, n + 1)
    times = cpp.T(edges[:-1], edges[1:])
    print(f"beta={beta:+.1f}  atoms={len(cpp)}  no-ancestor fraction={np.isinf(times).mean():.4f}"
          f" (exact {Fe.p_no_ancestor(p, 0.0, d):.4f})")
    for t in (0.2, 1.0, 3.0):
        print(f"   P(T <= {t}) empirical {np.mean(times <= t):.4f}  exact {Fe.mrca_cdf(p, t, 0.0, d):.4f}")
