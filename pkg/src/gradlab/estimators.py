"""The importance-weighted gradient estimator family.

Every estimator here is a per-datapoint convex combination of particle
gradients, ``Delta = sum_t c_t grad log w_t`` with ``sum_t c_t = 1``:

* VAE (``K = 1``): ``c_t = 1 / M``.
* IWAE (``M = 1``) and MIWAE: within each of the ``M`` groups of ``K``
  particles, ``c`` is the self-normalized weight divided by ``M``.
* CIWAE: ``beta / K + (1 - beta) * normalized weight`` on one shared group.
* PIWAE: two coefficient sets on the same ``M x L`` panel; the pooled
  ``K = M L`` IWAE set for ``mu`` and the grouped MIWAE set for ``(A, b)``.

Two routes evaluate the combinations.  ``delta_*`` functions work on an
explicit :class:`WeightPanel` holding per-particle gradient vectors and are
model-agnostic.  ``pool_delta``/``batched_delta`` use the fact that the
Gaussian model's gradients are affine in ``z`` and collapse particles to a
single weighted sample per datapoint first.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, softmax

from .model import (
    GenerativeParams,
    InferenceParams,
    ModelConfig,
    grad_log_weight_at,
    log_weight_from_noise,
    param_layout,
    proposal_mean,
    reparam_sample,
    log_weight,
)

KINDS = ("vae", "iwae", "miwae", "ciwae", "piwae")


@dataclass(frozen=True)
class EstimatorSpec:
    """Which estimator and its sample sizes.

    ``m`` outer groups of ``k`` particles; for PIWAE ``l`` is the inference
    group size and ``k = m * l``.  ``beta`` is only meaningful for CIWAE.
    """

    kind: str
    m: int = 1
    k: int = 1
    beta: float = 0.0
    l: int | None = None

    def __post_init__(self):
        kind = self.kind.lower()
        object.__setattr__(self, "kind", kind)
        if kind not in KINDS:
            raise ValueError(f"unknown estimator kind {self.kind!r}; expected one of {KINDS}")
        if self.m < 1 or self.k < 1:
            raise ValueError(f"m and k must be >= 1, got m={self.m}, k={self.k}")
        if kind == "vae" and self.k != 1:
            raise ValueError("VAE requires k=1")
        if kind == "iwae" and self.m != 1:
            raise ValueError("IWAE requires m=1")
        if kind == "ciwae" and not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"CIWAE beta must lie in [0, 1], got {self.beta}")
        if kind == "piwae":
            l = self.k // self.m if self.l is None else self.l
            if l < 1 or self.m * l != self.k:
                raise ValueError(f"PIWAE requires k = m * l, got m={self.m}, k={self.k}, l={self.l}")
            object.__setattr__(self, "l", l)

    @classmethod
    def vae(cls, m: int = 1) -> EstimatorSpec:
        return cls("vae", m=m, k=1)

    @classmethod
    def iwae(cls, k: int) -> EstimatorSpec:
        return cls("iwae", m=1, k=k)

    @classmethod
    def miwae(cls, m: int, k: int) -> EstimatorSpec:
        return cls("miwae", m=m, k=k)

    @classmethod
    def ciwae(cls, k: int, beta: float, m: int = 1) -> EstimatorSpec:
        # m > 1 averages independent CIWAE estimates (an extension)
        return cls("ciwae", m=m, k=k, beta=beta)

    @classmethod
    def piwae(cls, m: int, l: int) -> EstimatorSpec:
        return cls("piwae", m=m, k=m * l, l=l)

    @property
    def n_particles(self) -> int:
        """Particles consumed per datapoint (PIWAE shares one ``m x l`` panel)."""
        if self.kind == "piwae":
            return self.k
        return self.m * self.k

    @property
    def label(self) -> str:
        if self.kind == "ciwae":
            return f"ciwae(beta={self.beta:g})"
        return self.kind


@dataclass(frozen=True, eq=False)
class WeightPanel:
    """``M x K`` log-weights with per-particle gradients of ``log w``.

    ``grad_log_w`` has shape ``(M, K, P)`` in the flat ``[mu, A, b]`` layout.
    ``eps`` keeps the standard-normal draws that produced the panel, if known.
    """

    log_w: np.ndarray
    grad_log_w: np.ndarray
    eps: np.ndarray | None = None

    def __post_init__(self):
        log_w = np.atleast_2d(np.asarray(self.log_w, dtype=float))
        grads = np.asarray(self.grad_log_w, dtype=float)
        if grads.ndim != 3 or grads.shape[:2] != log_w.shape:
            raise ValueError(f"grad_log_w shape {grads.shape} does not match log_w shape {log_w.shape}")
        if not np.all(np.isfinite(log_w)):
            raise ValueError("log_w must be finite")
        object.__setattr__(self, "log_w", log_w)
        object.__setattr__(self, "grad_log_w", grads)

    @property
    def m_rows(self) -> int:
        return self.log_w.shape[0]

    @property
    def k_cols(self) -> int:
        return self.log_w.shape[1]

    def regroup(self, m: int) -> WeightPanel:
        """Same particles, row-major, as ``m`` rows (``m`` must divide ``M K``)."""
        total = self.m_rows * self.k_cols
        if total % m:
            raise ValueError(f"cannot split {total} weights into {m} rows")
        eps = None if self.eps is None else self.eps.reshape(m, total // m, -1)
        return WeightPanel(
            self.log_w.reshape(m, total // m),
            self.grad_log_w.reshape(m, total // m, -1),
            eps,
        )


def draw_weight_panel(
    theta: GenerativeParams,
    phi: InferenceParams,
    x,
    m: int,
    k: int,
    config: ModelConfig,
    rng,
) -> WeightPanel:
    """Draw ``M K`` i.i.d. reparameterized particles for one datapoint."""
    if m < 1 or k < 1:
        raise ValueError(f"m and k must be >= 1, got m={m}, k={k}")
    eps = rng.standard_normal((m, k, theta.dim))
    z = reparam_sample(phi, x, eps, config)
    return WeightPanel(
        log_weight(theta, phi, x, z, config),
        grad_log_weight_at(theta, phi, x, z),
        eps,
    )


def normalized_weights(log_w, axis: int = -1) -> np.ndarray:
    """Self-normalized importance weights, computed in log space."""
    return softmax(np.asarray(log_w, dtype=float), axis=axis)


# Shared combination kernels.  Endpoint identities (CIWAE at beta in {0, 1},
# PIWAE theta-part vs IWAE) are bitwise only because every path funnels
# through these two helpers with identical operand shapes.


def _uniform_combination(grads: np.ndarray) -> np.ndarray:
    """Plain average of ``(n, P)`` particle gradients."""
    return grads.sum(axis=0) / grads.shape[0]


def _snis_combination(log_w: np.ndarray, grads: np.ndarray) -> np.ndarray:
    """``sum_k wbar_k grad_k``: gradient of ``log mean_k w_k`` for one group."""
    wbar = normalized_weights(log_w)
    return (wbar[:, None] * grads).sum(axis=0)


def delta_mk(panel: WeightPanel) -> np.ndarray:
    """``(1/M) sum_m grad log (1/K) sum_k w_{m,k}`` on an explicit panel."""
    if panel.k_cols == 1:
        return _uniform_combination(panel.grad_log_w[:, 0, :])
    rows = [_snis_combination(panel.log_w[i], panel.grad_log_w[i]) for i in range(panel.m_rows)]
    return _uniform_combination(np.stack(rows))


def delta_vae(panel: WeightPanel) -> np.ndarray:
    """VAE estimator on every weight of the panel, each treated as its own group."""
    p = panel.grad_log_w.shape[-1]
    return _uniform_combination(panel.grad_log_w.reshape(-1, p))


def delta_ciwae(panel: WeightPanel, beta: float) -> np.ndarray:
    """``beta * VAE + (1 - beta) * IWAE`` on the same weights.

    With ``M > 1`` rows the result averages independent per-row CIWAE
    estimates.
    """
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must lie in [0, 1], got {beta}")
    rows = []
    for i in range(panel.m_rows):
        vae_part = _uniform_combination(panel.grad_log_w[i])
        iwae_part = _snis_combination(panel.log_w[i], panel.grad_log_w[i])
        rows.append(beta * vae_part + (1.0 - beta) * iwae_part)
    if panel.m_rows == 1:
        return rows[0]
    return _uniform_combination(np.stack(rows))


def delta_piwae(panel: WeightPanel) -> tuple[np.ndarray, np.ndarray]:
    """PIWAE pair on an ``M x L`` panel.

    Returns full-length vectors: the pooled IWAE estimate with only the
    ``mu`` block kept, and the grouped MIWAE estimate with only ``(A, b)``
    kept.  Their sum is the update PIWAE applies.
    """
    p = panel.grad_log_w.shape[-1]
    layout = param_layout(_dim_from_size(p))
    pooled = panel.regroup(1)
    theta_full = _snis_combination(pooled.log_w[0], pooled.grad_log_w[0])
    phi_full = delta_mk(panel)
    theta_part = np.zeros(p)
    phi_part = np.zeros(p)
    theta_part[layout.mu] = theta_full[layout.mu]
    phi_part[layout.phi] = phi_full[layout.phi]
    return theta_part, phi_part


def estimate(panel: WeightPanel, spec: EstimatorSpec) -> np.ndarray:
    """Dispatch ``spec`` on a panel laid out as ``spec.m`` rows."""
    if spec.kind == "piwae":
        th, ph = delta_piwae(panel.regroup(spec.m))
        return th + ph
    if spec.kind == "ciwae":
        return delta_ciwae(panel.regroup(spec.m), spec.beta)
    if spec.kind == "vae":
        return delta_vae(panel)
    return delta_mk(panel.regroup(spec.m))


def estimate_elbo(panel: WeightPanel) -> float:
    """``(1/M) sum_m log (1/K) sum_k w_{m,k}``, via log-sum-exp."""
    per_row = logsumexp(panel.log_w, axis=1) - np.log(panel.k_cols)
    return float(per_row.mean())


def _dim_from_size(p: int) -> int:
    d = int(round(np.sqrt(p + 1) - 1))
    if d * (d + 2) != p:
        raise ValueError(f"{p} is not a valid flat parameter length")
    return d


# -- pooled route: particle coefficients on a pool of log-weights -------------


def _grouped_softmax(log_w: np.ndarray, m: int, k: int) -> np.ndarray:
    lead = log_w.shape[:-1]
    return softmax(log_w.reshape(lead + (m, k)), axis=-1).reshape(lead + (m * k,))


def particle_coefficients(log_w, spec: EstimatorSpec):
    """Coefficients ``c_t`` over the first ``spec.n_particles`` entries of ``log_w``.

    ``log_w`` has shape ``(..., T)`` with ``T >= spec.n_particles``; any
    prefix of an i.i.d. pool is itself a valid panel.  Returns an array of
    shape ``(..., n_particles)``, or a ``(theta_coef, phi_coef)`` pair for
    PIWAE.
    """
    log_w = np.asarray(log_w, dtype=float)
    n = spec.n_particles
    if log_w.shape[-1] < n:
        raise ValueError(f"pool has {log_w.shape[-1]} particles, {spec} needs {n}")
    lw = log_w[..., :n]
    if spec.kind == "vae":
        return np.full(lw.shape, 1.0 / spec.m)
    if spec.kind in ("iwae", "miwae"):
        return _grouped_softmax(lw, spec.m, spec.k) / spec.m
    if spec.kind == "ciwae":
        snis = _grouped_softmax(lw, spec.m, spec.k)
        return (spec.beta / spec.k + (1.0 - spec.beta) * snis) / spec.m
    pooled = softmax(lw, axis=-1)
    grouped = _grouped_softmax(lw, spec.m, spec.l) / spec.m
    return pooled, grouped


def combine_noise(coef: np.ndarray, eps: np.ndarray) -> np.ndarray:
    """``sum_t c_t eps_t`` per datapoint: ``coef (N, n)``, ``eps (N, T, D)`` -> ``(N, D)``."""
    n = coef.shape[-1]
    return np.matmul(coef[:, None, :], eps[:, :n, :])[:, 0, :]


def batch_gradient(theta: GenerativeParams, phi: InferenceParams, xs, z_bar) -> np.ndarray:
    """Average over datapoints of the gradient at combined samples ``z_bar (N, D)``.

    Equals ``mean_n grad_log_weight_at(theta, phi, x_n, z_bar_n)`` but costs
    one ``D x D`` product instead of ``N`` outer products.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    z_bar = np.atleast_2d(z_bar)
    n = xs.shape[0]
    g_b = theta.mu + xs - 2.0 * z_bar
    return np.concatenate([z_bar.mean(axis=0) - theta.mu, (g_b.T @ xs / n).reshape(-1), g_b.mean(axis=0)])


def pool_delta(
    theta: GenerativeParams,
    phi: InferenceParams,
    xs,
    eps: np.ndarray,
    spec: EstimatorSpec,
    config: ModelConfig,
    log_w: np.ndarray | None = None,
) -> np.ndarray:
    """Batch-averaged estimate from pooled noise ``eps (N, T, D)``.

    Datapoint ``n`` uses particles ``eps[n, :spec.n_particles]``.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    if log_w is None:
        log_w = log_weight_from_noise(theta, phi, xs, eps, config)
    sqrt_c = np.sqrt(config.proposal_variance)
    mean_z = proposal_mean(phi, xs)
    coef = particle_coefficients(log_w, spec)
    if spec.kind != "piwae":
        return batch_gradient(theta, phi, xs, mean_z + sqrt_c * combine_noise(coef, eps))
    layout = param_layout(theta.dim)
    theta_full = batch_gradient(theta, phi, xs, mean_z + sqrt_c * combine_noise(coef[0], eps))
    out = batch_gradient(theta, phi, xs, mean_z + sqrt_c * combine_noise(coef[1], eps))
    out[layout.mu] = theta_full[layout.mu]
    return out


def batched_delta(
    spec: EstimatorSpec,
    theta: GenerativeParams,
    phi: InferenceParams,
    xs,
    config: ModelConfig,
    rng,
) -> np.ndarray:
    """``(1/N) sum_n Delta^(n)`` with an independent panel per datapoint."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    if xs.shape[0] < 1:
        raise ValueError("batched_delta needs at least one datapoint")
    eps = rng.standard_normal((xs.shape[0], spec.n_particles, theta.dim))
    return pool_delta(theta, phi, xs, eps, spec, config)
