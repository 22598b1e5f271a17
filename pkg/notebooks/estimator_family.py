"""
One panel, five estimators
==========================

VAE, IWAE, MIWAE, CIWAE and PIWAE all turn the same particles into a
gradient; they differ only in how the particles are weighted.
"""

import numpy as np

from gradlab.estimators import (
    EstimatorSpec,
    delta_ciwae,
    delta_mk,
    delta_piwae,
    delta_vae,
    draw_weight_panel,
    estimate,
    estimate_elbo,
)
from gradlab.metrics import ess
from gradlab.model import GenerativeParams, InferenceParams, ModelConfig

config = ModelConfig(dim=2)
theta = GenerativeParams([0.3, -0.4])
phi = InferenceParams([[0.7, 0.1], [0.0, 0.4]], [0.2, -0.1])
x = np.array([1.0, -0.5])

# a single 4 x 8 panel of particles
panel = draw_weight_panel(theta, phi, x, 4, 8, config, np.random.default_rng(0))
print("bound with K=8:", estimate_elbo(panel))
print("bound with K=32:", estimate_elbo(panel.regroup(1)))
print("ESS of the pooled weights:", ess(panel.log_w.ravel()))

# the estimators on the same particles
for spec in (EstimatorSpec.vae(32), EstimatorSpec.iwae(32), EstimatorSpec.miwae(4, 8), EstimatorSpec.ciwae(32, 0.5), EstimatorSpec.piwae(4, 8)):
    print(f"{spec.label:18s}", np.round(estimate(panel, spec), 3))

# CIWAE interpolates between its endpoints exactly
flat = panel.regroup(1)
assert np.array_equal(delta_ciwae(flat, 0.0), delta_mk(flat))
assert np.array_equal(delta_ciwae(flat, 1.0), delta_vae(flat))
theta_part, phi_part = delta_piwae(panel)
print("PIWAE mu part equals pooled IWAE:", np.array_equal(theta_part[:2], delta_mk(flat)[:2]))
