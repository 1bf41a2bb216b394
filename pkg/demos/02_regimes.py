"""Which ergodicity regime a model falls in, and what the null-smallness check says.

A full-rank observation operator leaves nothing unidentified. Dropping one
direction from A (``A = I - u u^T``) makes the drift toward that direction
matter, and the null-smallness ratio decides the conditional regimes.
"""

import numpy as np

from llngm.bessel_gig import GigParams
from llngm.ergodicity import classify_regime, gamma_ns_scan, null_smallness
from llngm.model import AR1Kernel, ModelSpec, build_rank_deficient_A

n = 12
kernel = AR1Kernel(n, 0.5, "precision")

for label, (p, a, b, mu) in {"NIG prior": (-0.5, 1, 1, 1), "gamma, p = 0.3": (0.3, 1, 0, 1),
                             "inverse gamma, mu = 0": (-1.5, 0, 2, 0)}.items():
    spec = ModelSpec(gig=GigParams(p, a, b), mu=mu, sigma=1.0, sigma_eps=1.0, kernel=kernel, A=np.eye(n))
    rep = classify_regime(spec)
    print(f"{label:24s} regime {rep.regime.value:7s} trace class {rep.trace_class:4s} "
          f"geometric ergodicity {rep.geo_ergodic}")

A = build_rank_deficient_A(n)
spec = ModelSpec(gig=GigParams(0.3, 1, 0), mu=0.4, sigma=1.0, sigma_eps=1.0, kernel=kernel, A=A)
ns = null_smallness(spec)
print(f"\nrank-deficient A: dim Null = {ns.r}, ratio = {ns.ns_ratio:.3f}, satisfied = {ns.satisfied}")
print(f"projector identity gap = {ns.identity_gap:.1e}")

grid = [0.0, 0.1, 0.5, 1.0, 2.0]
print("gamma_ns along mu:", np.round(gamma_ns_scan(spec, grid, np.zeros(n)), 3))
