"""Explosive stable mechanism Psi(q) = -q^{1/2}: geometric block counts and the small-t rescaling."""
import numpy as np

from csbp import coalescent as C
from csbp import mechanism as M
from csbp import poissonbox as B

m = M.stable(0.5, 1.0)
rng = np.random.default_rng(3)
lam = 1.0
for t in (1.0, 0.1, 0.01):
    phi = B.from_mechanism(m, t)
    sub = B.path_sampler(phi, eps=min(1e-3, t))
    counts = np.array([B.pullback_block_count(sub, lam, rng, chunk=10.0 / phi.kill) for _ in range(5000)])
    p = C.blocks_geometric_param(m, lam, t)
    v0 = M.v_zero(m, t)
    print(f"t={t:<5}  mean count {counts.mean():10.2f} (geometric mean {1 / p:10.2f})"
          f"  mean v_t(0)*count {v0 * counts.mean():.4f}")
