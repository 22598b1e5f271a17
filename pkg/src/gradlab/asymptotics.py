"""Monte Carlo estimates of the large-K theory for importance-weighted gradients.

With ``w`` the single-particle weight and ``Z = E[w]``, the leading-order
behaviour of ``Delta_{M,K}`` is governed by a handful of single-particle
moments:

    E[Delta]      = grad log Z - grad(Var[w] / Z^2) / (2K) + O(1/K^2)
    SNR(theta)    = sqrt(M) |sqrt(K) grad Z - Z grad(Var[w]/Z^2) / (2 sqrt(K))|
                    / sqrt(E[w^2 (grad log w - grad log Z)^2])
    SNR(phi)      = sqrt(M) |grad Var[w]| / (2 Z sqrt(K) sd[grad w])

For the inference parameters ``grad_phi Z = 0``, so the expected gradient
points along ``-grad_phi Var[w]``.  Every moment is estimated from
reparameterized samples; nothing here is symbolic.

Also here: the two moment identities for averages of i.i.d. triples used in
the bias derivation, checked by simulation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .estimators import EstimatorSpec, _dim_from_size
from .metrics import SlopeFit, fit_loglog_slope, unit
from .model import (
    GenerativeParams,
    InferenceParams,
    ModelConfig,
    grad_log_marginal,
    grad_log_weight,
    log_marginal,
    log_weight_from_noise,
    param_layout,
    proposal_mean,
)
from .replicates import replicate_estimates

# statistical-equality convention: agreement within this many combined standard errors
N_SIGMA = 4.0


def engine_seed(rng) -> int:
    """Seed for the replicate engine, drawn from ``rng`` (or ``rng`` itself if it is an int)."""
    if isinstance(rng, (int, np.integer)):
        return int(rng)
    return int(rng.integers(0, 2**63))


def _n_blocks(n: int) -> int:
    return int(min(100, max(10, n // 1000)))


# -- theory terms -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TheoryTerms:
    """Single-particle moments at one datapoint, in natural (unscaled) units.

    ``stderr`` maps each field name to its batch-means standard error.
    ``z_reference`` is the exact marginal likelihood for cross-checking ``z_true``.
    """

    z_true: float
    grad_theta_z: np.ndarray
    var_w: float
    grad_theta_var_ratio: np.ndarray
    theta_denom: np.ndarray
    grad_phi_var: np.ndarray
    phi_denom: np.ndarray
    z_reference: float
    n_samples: int
    stderr: dict = field(default_factory=dict)

    def z_within(self, n_sigma: float = N_SIGMA) -> bool:
        return abs(self.z_true - self.z_reference) <= n_sigma * self.stderr["z_true"]


_TERM_FIELDS = (
    "z_true",
    "grad_theta_z",
    "var_w",
    "grad_theta_var_ratio",
    "theta_denom",
    "grad_phi_var",
    "phi_denom",
)


def _raw_moments(u: np.ndarray, g: np.ndarray, layout) -> dict:
    g_t, g_p = g[:, layout.mu], g[:, layout.phi]
    u2 = u * u
    return {
        "n": u.shape[0],
        "u": u.sum(),
        "u2": u2.sum(),
        "u_gt": u @ g_t,
        "u2_gt": u2 @ g_t,
        "u2_gt2": u2 @ (g_t * g_t),
        "u_gp": u @ g_p,
        "u2_gp": u2 @ g_p,
        "u2_gp2": u2 @ (g_p * g_p),
    }


def _merge(a: dict, b: dict) -> dict:
    return {key: a[key] + b[key] for key in a}


def _terms_from_moments(mom: dict, scale: float) -> dict:
    """Field values from pooled raw sums of ``u = w / scale`` and gradients."""
    n = mom["n"]
    e = {key: val / n for key, val in mom.items() if key != "n"}
    z = e["u"]
    grad_z = e["u_gt"]
    var = (e["u2"] - z * z) * n / (n - 1)
    var_ratio_grad = 2.0 * e["u2_gt"] / z**2 - 2.0 * e["u2"] * grad_z / z**3
    h = grad_z / z
    theta_sq = e["u2_gt2"] - 2.0 * h * e["u2_gt"] + h * h * e["u2"]
    phi_sq = e["u2_gp2"] - e["u_gp"] ** 2
    return {
        "z_true": z * scale,
        "grad_theta_z": grad_z * scale,
        "var_w": var * scale**2,
        "grad_theta_var_ratio": var_ratio_grad,
        "theta_denom": np.sqrt(np.maximum(theta_sq, 0.0)) * scale,
        "grad_phi_var": 2.0 * e["u2_gp"] * scale**2,
        "phi_denom": np.sqrt(np.maximum(phi_sq, 0.0)) * scale,
    }


def estimate_theory_terms(
    theta: GenerativeParams,
    phi: InferenceParams,
    x,
    n_samples: int,
    config: ModelConfig,
    rng,
) -> TheoryTerms:
    """Monte Carlo estimates of the single-particle moments at datapoint ``x``.

    Weights are handled relative to the exact marginal likelihood so that
    nothing underflows in high dimension; results are rescaled at the end.
    """
    if n_samples < 100:
        raise ValueError(f"n_samples must be >= 100, got {n_samples}")
    x = np.asarray(x, dtype=float).reshape(-1)
    layout = param_layout(theta.dim)
    log_ref = float(log_marginal(theta, x))
    scale = float(np.exp(log_ref))
    blocks = _n_blocks(n_samples)
    edges = np.linspace(0, n_samples, blocks + 1).astype(int)
    per_block = []
    total = None
    for lo, hi in zip(edges[:-1], edges[1:]):
        eps = rng.standard_normal((hi - lo, theta.dim))
        log_w = log_weight_from_noise(theta, phi, x[None], eps[None], config)[0]
        u = np.exp(log_w - log_ref)
        mom = _raw_moments(u, grad_log_weight(theta, phi, x, eps, config), layout)
        per_block.append(_terms_from_moments(mom, scale))
        total = mom if total is None else _merge(total, mom)
    values = _terms_from_moments(total, scale)
    stderr = {}
    for name in _TERM_FIELDS:
        stack = np.array([b[name] for b in per_block])
        stderr[name] = stack.std(axis=0, ddof=1) / np.sqrt(blocks)
    return TheoryTerms(
        **{name: values[name] for name in _TERM_FIELDS},
        z_reference=scale,
        n_samples=int(n_samples),
        stderr=stderr,
    )


def predicted_snr(terms: TheoryTerms, m: int, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Leading-order per-component SNR ``(theta, phi)`` of ``Delta_{M,K}`` at one datapoint."""
    if m < 1 or k < 1:
        raise ValueError(f"m and k must be >= 1, got m={m}, k={k}")
    rk = np.sqrt(k)
    num_theta = rk * terms.grad_theta_z - terms.z_true / (2.0 * rk) * terms.grad_theta_var_ratio
    with np.errstate(divide="ignore", invalid="ignore"):
        theta_snr = np.sqrt(m) * np.abs(num_theta) / terms.theta_denom
        phi_snr = np.sqrt(m) * np.abs(terms.grad_phi_var) / (2.0 * terms.z_true * rk * terms.phi_denom)
    return theta_snr, phi_snr


def predicted_batch_snr(terms_seq, m: int, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Leading-order SNR of the estimate averaged over the datapoints behind ``terms_seq``.

    Means and variances both sum over datapoints, so the ``1/N`` factors cancel.
    """
    if m < 1 or k < 1:
        raise ValueError(f"m and k must be >= 1, got m={m}, k={k}")
    terms_seq = list(terms_seq)
    if not terms_seq:
        raise ValueError("need theory terms for at least one datapoint")
    mean_t, var_t, mean_p, var_p = 0.0, 0.0, 0.0, 0.0
    for t in terms_seq:
        z = t.z_true
        # E[Delta] and Var[Delta] at one datapoint, to leading order
        mean_t = mean_t + t.grad_theta_z / z - t.grad_theta_var_ratio / (2.0 * k)
        var_t = var_t + (t.theta_denom / z) ** 2 / k
        mean_p = mean_p - t.grad_phi_var / (2.0 * k * z * z)
        var_p = var_p + (t.phi_denom / z) ** 2 / k
    with np.errstate(divide="ignore", invalid="ignore"):
        theta_snr = np.sqrt(m) * np.abs(mean_t) / np.sqrt(var_t)
        phi_snr = np.sqrt(m) * np.abs(mean_p) / np.sqrt(var_p)
    return theta_snr, phi_snr


# -- asymptotic direction of the inference gradient ----------------------------


@dataclass(frozen=True, eq=False)
class DirectionTarget:
    """Unit vector along ``-grad_phi(Var[w] / Z^2)`` averaged over datapoints.

    ``variance_gradient`` is the unnormalized ``mean_n grad_phi(Var_n / Z_n^2)``
    and ``stderr`` its batch-means standard error.
    """

    direction: np.ndarray
    variance_gradient: np.ndarray
    stderr: np.ndarray
    n_samples: int


def variance_gradient_from_samples(theta, phi, xs, eps, config: ModelConfig, log_w=None) -> np.ndarray:
    """``mean_n E[2 (w / Z_n)^2 grad_phi log w]`` from noise ``eps (N, T, D)``.

    ``Z_n`` is the sample mean of the weights at datapoint ``n``, so adding a
    constant to every log-weight leaves the result unchanged.  The gradient is
    affine in ``z``, so each datapoint collapses to one ``w^2``-weighted sample.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    eps = np.asarray(eps, dtype=float)
    if log_w is None:
        log_w = log_weight_from_noise(theta, phi, xs, eps, config)
    t = log_w.shape[-1]
    log_u = log_w - (logsumexp(log_w, axis=-1, keepdims=True) - np.log(t))
    s = np.exp(2.0 * log_u)
    scale = 2.0 * s.mean(axis=-1)
    z_tilde = proposal_mean(phi, xs) + np.sqrt(config.proposal_variance) * np.matmul(
        (s / s.sum(axis=-1, keepdims=True))[:, None, :], eps
    )[:, 0, :]
    g_b = scale[:, None] * (theta.mu + xs - 2.0 * z_tilde)
    n = xs.shape[0]
    return np.concatenate([(g_b.T @ xs / n).reshape(-1), g_b.mean(axis=0)])


def direction_target(
    theta: GenerativeParams,
    phi: InferenceParams,
    x,
    n_samples: int,
    config: ModelConfig,
    rng,
) -> DirectionTarget:
    """Asymptotic direction of the inference-parameter gradient.

    ``x`` is one datapoint or an ``(N, D)`` batch; ``n_samples`` draws are
    used per datapoint.
    """
    if n_samples < 1000:
        raise ValueError(f"n_samples must be >= 1000, got {n_samples}")
    xs = np.atleast_2d(np.asarray(x, dtype=float))
    n, d = xs.shape
    blocks = 10
    edges = np.linspace(0, n_samples, blocks + 1).astype(int)
    chunk = max(1, (1 << 21) // (n_samples * d))
    total = np.zeros(d * d + d)
    block_vals = np.zeros((blocks, d * d + d))
    for start in range(0, n, chunk):
        stop = min(n, start + chunk)
        eps = rng.standard_normal((stop - start, n_samples, d))
        log_w = log_weight_from_noise(theta, phi, xs[start:stop], eps, config)
        weight = (stop - start) / n
        total += weight * variance_gradient_from_samples(theta, phi, xs[start:stop], eps, config, log_w)
        for j, (lo, hi) in enumerate(zip(edges[:-1], edges[1:])):
            block_vals[j] += weight * variance_gradient_from_samples(
                theta, phi, xs[start:stop], eps[:, lo:hi], config, log_w[:, lo:hi]
            )
    norm = np.linalg.norm(total)
    if not norm > 0:
        raise ValueError("variance gradient is exactly zero; direction undefined")
    stderr = block_vals.std(axis=0, ddof=1) / np.sqrt(blocks)
    return DirectionTarget(-total / norm, total, stderr, int(n_samples))


def cosine(a, b) -> float:
    return float(np.dot(unit(a), unit(b)))


@dataclass(frozen=True)
class CosineRow:
    k: int
    cosine: float
    stderr: float
    # standard error of the increase from the previous K (nan on the first row)
    step_stderr: float


def direction_convergence(samples_by_k: dict, target, blocks: int = 20) -> list[CosineRow]:
    """Cosine between the replicate-mean inference gradient and ``target`` for each K.

    ``samples_by_k`` maps ``k`` to an ``(R, P)`` batch (or ``(R, P_phi)``).
    Standard errors come from a delete-one-block jackknife over replicates;
    the step errors use paired blocks, so common random numbers are respected.
    """
    target = np.asarray(target, dtype=float)
    ks = sorted(samples_by_k)
    phi_part = {}
    for k in ks:
        arr = np.asarray(samples_by_k[k], dtype=float)
        if arr.shape[1] != target.shape[0]:
            arr = arr[:, param_layout(_dim_of_phi(target.shape[0])).phi]
        phi_part[k] = arr
    r = phi_part[ks[0]].shape[0]
    if r < blocks:
        raise ValueError(f"need at least {blocks} replicates for the jackknife, got {r}")
    edges = np.linspace(0, r, blocks + 1).astype(int)

    def jack(k):
        arr = phi_part[k]
        sums = np.array([arr[lo:hi].sum(axis=0) for lo, hi in zip(edges[:-1], edges[1:])])
        counts = np.diff(edges)
        total = sums.sum(axis=0)
        loo = [(total - sums[j]) / (r - counts[j]) for j in range(blocks)]
        return cosine(total / r, target), np.array([cosine(v, target) for v in loo])

    def jack_se(vals):
        return float(np.sqrt((blocks - 1) / blocks * np.sum((vals - vals.mean()) ** 2)))

    rows = []
    prev = None
    for k in ks:
        cos_k, loo_k = jack(k)
        step = np.nan if prev is None else jack_se(loo_k - prev)
        rows.append(CosineRow(int(k), cos_k, jack_se(loo_k), step))
        prev = loo_k
    return rows


def _dim_of_phi(p_phi: int) -> int:
    d = int(round((-1 + np.sqrt(1 + 4 * p_phi)) / 2))
    if d * d + d != p_phi:
        raise ValueError(f"{p_phi} is not a valid inference-parameter length")
    return d


# -- bias ---------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BiasRow:
    k: int
    mean_phi: np.ndarray
    stderr_phi: np.ndarray
    predicted_phi: np.ndarray
    norm: float
    predicted_norm: float
    theta_distance: float


@dataclass(frozen=True, eq=False)
class BiasReport:
    rows: list
    slope: SlopeFit | None
    predicted_slope: SlopeFit | None


def bias_table(samples_by_k: dict, variance_gradient, grad_log_z_theta) -> BiasReport:
    """Empirical mean inference gradient per K against ``-variance_gradient / (2K)``.

    ``variance_gradient`` is ``mean_n grad_phi(Var_n / Z_n^2)`` (see
    :class:`DirectionTarget`); ``grad_log_z_theta`` is the exact
    ``mean_n grad_mu log Z_n``.  Slopes are fitted over every K present.
    """
    variance_gradient = np.asarray(variance_gradient, dtype=float)
    rows = []
    for k in sorted(samples_by_k):
        arr = np.asarray(samples_by_k[k], dtype=float)
        layout = param_layout(_dim_from_size(arr.shape[1]))
        mean = arr.mean(axis=0)
        se = arr.std(axis=0, ddof=1) / np.sqrt(arr.shape[0])
        pred = -variance_gradient / (2.0 * k)
        rows.append(
            BiasRow(
                k=int(k),
                mean_phi=mean[layout.phi],
                stderr_phi=se[layout.phi],
                predicted_phi=pred,
                norm=float(np.linalg.norm(mean[layout.phi])),
                predicted_norm=float(np.linalg.norm(pred)),
                theta_distance=float(np.linalg.norm(mean[layout.mu] - grad_log_z_theta)),
            )
        )
    ks = [row.k for row in rows]
    slope = pslope = None
    if len(set(ks)) >= 2:
        slope = fit_loglog_slope(ks, [row.norm for row in rows])
        pslope = fit_loglog_slope(ks, [row.predicted_norm for row in rows])
    return BiasReport(rows, slope, pslope)


def bias_check(
    theta: GenerativeParams,
    phi: InferenceParams,
    x,
    k_list,
    replicates: int,
    config: ModelConfig,
    rng,
    oracle_samples: int = 1000,
) -> BiasReport:
    """Replicated IWAE estimates at each K compared with the leading bias term."""
    if replicates < 1000:
        raise ValueError(f"replicates must be >= 1000, got {replicates}")
    xs = np.atleast_2d(np.asarray(x, dtype=float))
    seed = engine_seed(rng)
    specs = {int(k): EstimatorSpec.iwae(int(k)) for k in k_list}
    out = replicate_estimates(theta, phi, xs, specs.values(), replicates, config, seed, purpose="bias")
    target = direction_target(theta, phi, xs, oracle_samples, config, rng)
    grad_log_z = grad_log_marginal(theta, xs).mean(axis=0)
    return bias_table({k: out[s] for k, s in specs.items()}, target.variance_gradient, grad_log_z)


# -- moment identities for averages of i.i.d. triples ---------------------------

TRIPLE_KINDS = ("identical", "correlated", "weight_residual")


@dataclass(frozen=True)
class TripleGenerator:
    """I.i.d. mean-zero triples ``(a, b, c)``, dependent only within an index.

    * ``identical``: ``a = b = c`` standard normal.
    * ``correlated``: ``a``, ``b`` standard normal with correlation ``rho``
      and ``c = a b - rho``.
    * ``weight_residual``: from the Gaussian model at a fixed datapoint,
      ``a = w / Z - 1``, ``b = d(w/Z)/d b_0`` and
      ``c = d(w/Z)/d mu_0 - d log Z / d mu_0``; all centred by exact means.
    """

    kind: str
    rho: float = 0.0
    dim: int = 2
    proposal_variance: float = 2.0 / 3.0
    offset: float = 0.3

    def __post_init__(self):
        if self.kind not in TRIPLE_KINDS:
            raise ValueError(f"unknown triple kind {self.kind!r}; expected one of {TRIPLE_KINDS}")
        if not -1.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must lie in [-1, 1], got {self.rho}")

    def sample(self, rng, n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if self.kind == "identical":
            a = rng.standard_normal(n)
            return a, a, a
        if self.kind == "correlated":
            e = rng.standard_normal((2, n))
            a = e[0]
            b = self.rho * e[0] + np.sqrt(1.0 - self.rho**2) * e[1]
            return a, b, a * b - self.rho
        return self._weight_residuals(rng, n)

    def _weight_residuals(self, rng, n):
        d = self.dim
        config = ModelConfig(d, self.proposal_variance, 1)
        theta = GenerativeParams(np.linspace(-0.5, 0.5, d))
        x = np.linspace(1.0, -1.0, d)
        # a deliberately mismatched proposal so the weights vary
        phi = InferenceParams((0.5 + self.offset) * np.eye(d), 0.5 * theta.mu - self.offset)
        eps = rng.standard_normal((n, d))
        log_w = log_weight_from_noise(theta, phi, x[None], eps[None], config)[0]
        u = np.exp(log_w - log_marginal(theta, x))
        g = grad_log_weight(theta, phi, x, eps, config)
        layout = param_layout(d)
        b0 = layout.b.start
        a = u - 1.0
        b = u * g[:, b0]
        c = u * g[:, 0] - grad_log_marginal(theta, x)[0]
        return a, b, c

    def exact_moments(self) -> dict | None:
        """Single-index moments when known in closed form."""
        if self.kind == "identical":
            return {"abc": 0.0, "ab": 1.0, "a2": 1.0, "b2": 1.0, "ab2": 3.0}
        if self.kind == "correlated":
            r2 = self.rho**2
            return {"abc": 1.0 + r2, "ab": self.rho, "a2": 1.0, "b2": 1.0, "ab2": 1.0 + 2.0 * r2}
        return None


def product_mean_rhs(mom: dict, k: int) -> float:
    return mom["abc"] / k**2


# cross coefficient on E[ab]^2 in Var[abar bbar] * K^3: the stated form uses 2K - 2,
# which counts the squared-mean correction at order 1/K^3 instead of 1/K^2;
# pairing indices exactly gives K - 1.  The two agree at K = 1 or E[ab] = 0.
def _cross_coefficient(k: int, paired: bool) -> int:
    return k - 1 if paired else 2 * k - 2


def product_var_rhs(mom: dict, k: int, paired: bool = False) -> float:
    var_ab = mom["ab2"] - mom["ab"] ** 2
    cross = _cross_coefficient(k, paired)
    return (var_ab + (k - 1) * mom["a2"] * mom["b2"] + cross * mom["ab"] ** 2) / k**3


@dataclass(frozen=True)
class IdentityCheck:
    name: str
    lhs: float
    lhs_se: float
    rhs: float
    rhs_se: float
    exact: float | None
    passed: bool

    @property
    def z_score(self) -> float:
        se = np.hypot(self.lhs_se, self.rhs_se)
        return float(abs(self.lhs - self.rhs) / se) if se > 0 else (0.0 if self.lhs == self.rhs else np.inf)


@dataclass(frozen=True)
class LemmaReport:
    kind: str
    k: int
    n_trials: int
    checks: tuple

    def check(self, name: str) -> IdentityCheck:
        return next(c for c in self.checks if c.name == name)

    @property
    def passed(self) -> bool:
        """Both identities in their stated form."""
        return self.check("product_mean").passed and self.check("product_variance").passed

    @property
    def passed_paired(self) -> bool:
        return self.check("product_mean").passed and self.check("product_variance_paired").passed


def _agree(lhs, lhs_se, rhs, rhs_se) -> bool:
    se = np.hypot(lhs_se, rhs_se)
    return bool(abs(lhs - rhs) <= N_SIGMA * se)


def lemma_moment_check(gen: TripleGenerator, k: int, n_trials: int, rng, rhs_rng=None) -> LemmaReport:
    """Simulate ``E[abar bbar cbar]`` and ``Var[abar bbar]`` for averages over ``k`` triples.

    Right-hand sides use single-index moments from an independent stream
    (``rhs_rng``, spawned from ``rng`` if omitted).  When the generator's
    moments are known exactly the left side is also compared with the exact
    right side.  The variance is checked against both cross coefficients
    (see :func:`product_var_rhs`).
    """
    if n_trials < 10_000:
        raise ValueError(f"n_trials must be >= 10000, got {n_trials}")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if rhs_rng is None:
        rhs_rng = rng.spawn(1)[0]
    a, b, c = (v.reshape(n_trials, k).mean(axis=1) for v in gen.sample(rng, n_trials * k))
    ab = a * b
    prod = ab * c
    lhs1, lhs1_se = float(prod.mean()), float(prod.std(ddof=1) / np.sqrt(n_trials))
    lhs2 = float(ab.var(ddof=1))
    lhs2_se = float(np.sqrt(np.var((ab - ab.mean()) ** 2, ddof=1) / n_trials))

    a1, b1, c1 = gen.sample(rhs_rng, n_trials * k)
    n1 = a1.size
    abc1 = a1 * b1 * c1
    ab1 = a1 * b1
    feats = np.stack([ab1, ab1 * ab1, a1 * a1, b1 * b1])
    m = feats.mean(axis=1)
    mom = {"abc": abc1.mean(), "ab": m[0], "ab2": m[1], "a2": m[2], "b2": m[3]}
    rhs1 = float(product_mean_rhs(mom, k))
    rhs1_se = float(abc1.std(ddof=1) / np.sqrt(n1) / k**2)
    exact = gen.exact_moments()
    ex1 = None if exact is None else product_mean_rhs(exact, k)
    ok1 = _agree(lhs1, lhs1_se, rhs1, rhs1_se) and (ex1 is None or _agree(lhs1, lhs1_se, ex1, 0.0))
    checks = [IdentityCheck("product_mean", lhs1, lhs1_se, rhs1, rhs1_se, ex1, ok1)]
    for name, paired in (("product_variance", False), ("product_variance_paired", True)):
        rhs2 = float(product_var_rhs(mom, k, paired))
        # delta method on (E[ab], E[(ab)^2], E[a^2], E[b^2])
        d_ab = 2.0 * (_cross_coefficient(k, paired) - 1) * m[0]
        grad = np.array([d_ab, 1.0, (k - 1) * m[3], (k - 1) * m[2]]) / k**3
        rhs2_se = float((grad @ (feats - m[:, None])).std(ddof=1) / np.sqrt(n1))
        ex2 = None if exact is None else product_var_rhs(exact, k, paired)
        ok2 = _agree(lhs2, lhs2_se, rhs2, rhs2_se) and (ex2 is None or _agree(lhs2, lhs2_se, ex2, 0.0))
        checks.append(IdentityCheck(name, lhs2, lhs2_se, rhs2, rhs2_se, ex2, ok2))
    return LemmaReport(gen.kind, int(k), int(n_trials), tuple(checks))
