"""Replicated batch gradient estimates with common random numbers.

For every replicate and datapoint one pool of ``T = max n_particles``
standard-normal draws is shared by all requested estimators; each estimator
reads the prefix it needs.  Any prefix of an i.i.d. pool is itself an i.i.d.
panel, so each estimator's replicates have exactly the law of independent
draws, while a whole sweep costs about as much as its largest member.

Replicate ``r`` reads ``substream(seed, purpose, r)`` and consumes it in
datapoint order, so results do not depend on block size or worker count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .estimators import EstimatorSpec, batch_gradient, combine_noise, particle_coefficients
from .model import GenerativeParams, InferenceParams, ModelConfig, log_weight_from_noise, param_layout, proposal_mean
from .rng import n_threads, substream

# doubles per noise block; keeps a block around 8 MB
BLOCK_ELEMS = 1 << 20


def replicate_estimates(
    theta: GenerativeParams,
    phi: InferenceParams,
    xs,
    specs,
    replicates: int,
    config: ModelConfig,
    seed: int,
    purpose: str = "sweep",
    threads: int | None = None,
) -> dict[EstimatorSpec, np.ndarray]:
    """``replicates`` batch-averaged estimates for each spec, as ``(R, P)`` arrays.

    ``xs`` may be a single datapoint ``(D,)`` or a batch ``(N, D)``.
    """
    specs = list(dict.fromkeys(specs))
    if not specs:
        raise ValueError("need at least one estimator spec")
    if replicates < 1:
        raise ValueError(f"replicates must be >= 1, got {replicates}")
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    n, d = xs.shape
    layout = param_layout(d)
    pool = max(s.n_particles for s in specs)
    block = max(1, BLOCK_ELEMS // (pool * d))
    sqrt_c = np.sqrt(config.proposal_variance)
    mean_z = proposal_mean(phi, xs)
    out = {s: np.empty((replicates, layout.size)) for s in specs}

    def run(r: int) -> None:
        gen = substream(seed, purpose, r)
        combos = {s: np.empty((2 if s.kind == "piwae" else 1, n, d)) for s in specs}
        for start in range(0, n, block):
            stop = min(n, start + block)
            eps = gen.standard_normal((stop - start, pool, d))
            log_w = log_weight_from_noise(theta, phi, xs[start:stop], eps, config)
            for s in specs:
                coef = particle_coefficients(log_w, s)
                coefs = coef if s.kind == "piwae" else (coef,)
                for j, c in enumerate(coefs):
                    combos[s][j, start:stop] = combine_noise(c, eps)
        for s in specs:
            z_bar = mean_z + sqrt_c * combos[s]
            g = batch_gradient(theta, phi, xs, z_bar[-1])
            if s.kind == "piwae":
                g[layout.mu] = batch_gradient(theta, phi, xs, z_bar[0])[layout.mu]
            out[s][r] = g

    workers = min(threads or n_threads(), replicates)
    if workers <= 1:
        for r in range(replicates):
            run(r)
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            list(ex.map(run, range(replicates)))
    return out
