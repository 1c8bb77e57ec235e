"""Show the low-rank nugget bias and how the bias-adjusted variant removes it.

A plain predictive process with few knots dumps the unexplained spatial variance
into the nugget estimate; adding the heteroskedastic remainder delta2(l) restores
the parent marginal variance location by location, so the bias disappears while
the likelihood stays O(n r^2).
"""

import numpy as np

from spatgp import (ChainConfig, LowRankBackend, LowRankSpec, PriorSpec, cross_cov,
                    grid_knots, noise_diag, build_B, paper_design, residual_var,
                    run_chain, simulate, summarize)

design = paper_design("table1", scale=0.15, seed=7)
sim = simulate(design)
train, _ = sim.train_test()
print(f"data: n={train.n} on [0,100]^2, true sigma2=1, tau2=1")

knots = grid_knots(((0.0, 100.0), (0.0, 100.0)), 36)

# the remainder variance is zero at the knots and grows between them
spec = LowRankSpec("pp", knots, design.params)
print(f"delta2 at a knot:      {residual_var(knots.knots[0], spec):.2e}")
mid = np.array([50.0 + 100 / 12, 50.0 + 100 / 12])
print(f"delta2 between knots:  {residual_var(mid, spec):.3f}")

# the bias-adjusted variant restores the marginal variance exactly
spec_mpp = LowRankSpec("mpp", knots, design.params)
b = build_B(train.locations[:5], spec_mpp)
v = cross_cov(knots.knots, knots.knots, design.params)
marg = np.einsum("ij,jk,ik->i", b, v, b) + noise_diag(train.locations[:5], spec_mpp)
print(f"mpp marginal variance at 5 sites: {marg.round(12)} (= sigma2 + tau2)")

priors = PriorSpec.default_for(1.0, 1.0, design.params.phi)
config = ChainConfig(iterations=1500, burn_in=750, seed=1,
                     initial_theta=(1.0, 1.0, design.params.phi))
for variant in ("pp", "mpp"):
    backend = LowRankBackend(train, LowRankSpec(variant, knots, design.params), priors)
    stats = summarize(run_chain(backend, config))["tau2"]
    print(f"{variant:4s} nugget estimate: {stats['q50']:.3f} "
          f"(95% CI {stats['q2.5']:.2f} to {stats['q97.5']:.2f}), truth 1.0")
