"""
The linear Gaussian testbed
===========================

Latent ``z ~ N(mu, I)``, observation ``x | z ~ N(z, I)`` and a proposal
``q(z | x) = N(A x + b, c I)``.  Everything about this model is available in
closed form, which is what makes it a useful bench for gradient estimators.
"""

import numpy as np

from gradlab.model import (
    GenerativeParams,
    ModelConfig,
    analytic_optimum,
    log_marginal,
    log_weight_from_noise,
    perturb_params,
    sample_dataset,
)

rng = np.random.default_rng(0)
config = ModelConfig(dim=5, proposal_variance=2 / 3, n_data=256)
data = sample_dataset(config, GenerativeParams(rng.normal(size=5)), rng)

# the optimum is known exactly: mu* = mean(x), A* = I/2, b* = mu*/2
theta, phi = analytic_optimum(data)
print("mu*:", np.round(theta.mu, 3))

# importance weights are unbiased for the marginal likelihood
x = data[0]
eps = rng.standard_normal((1, 200_000, 5))
w = np.exp(log_weight_from_noise(theta, phi, x[None], eps, config)[0])
print("mean weight   %.5f +- %.5f" % (w.mean(), w.std() / np.sqrt(w.size)))
print("exact p(x)    %.5f" % np.exp(log_marginal(theta, x)))

# moving away from the optimum spreads the weights out
for offset in (0.0, 0.01, 0.5):
    t, p = perturb_params((theta, phi), offset, np.random.default_rng(1))
    lw = log_weight_from_noise(t, p, x[None], eps[:, :10_000], config)[0]
    print(f"offset {offset:<5} sd(log w) = {lw.std():.3f}")
