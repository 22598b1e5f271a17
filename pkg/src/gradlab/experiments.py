"""Experiment runners that turn a config into a CSV table.

Every runner is a pure function of its :class:`ExperimentConfig`: the dataset,
the perturbed parameter point and every Monte Carlo draw come from
``substream(seed, purpose, index)``, so the same config gives byte-identical
output regardless of ``GRADLAB_THREADS``.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import asymptotics
from .estimators import KINDS, EstimatorSpec
from .metrics import dsnr, dsnr_random_baseline, fit_loglog_slope, rmse_to, sign_balance, snr, unit
from .model import (
    GROUPS,
    GenerativeParams,
    ModelConfig,
    analytic_optimum,
    grad_log_marginal,
    param_layout,
    perturb_params,
    sample_dataset,
)
from .optimize import AdamHyperparams, train
from .replicates import replicate_estimates
from .rng import substream

SCHEMA_VERSION = 1

PRESETS = {
    "near-optimum": {"dim": 20, "n_data": 1024, "proposal_variance": 2.0 / 3.0, "offset_std": 0.01},
    "high-variance": {"offset_std": 0.5, "proposal_variance": 1.0},
    "custom": {},
}

_BASE = {"dim": 20, "n_data": 1024, "proposal_variance": 2.0 / 3.0, "offset_std": 0.01}

TARGET_POLICIES = ("empirical", "fixed_k1000", "random_baseline")


@dataclass(frozen=True)
class ExperimentConfig:
    preset: str = "near-optimum"
    dim: int = 20
    n_data: int = 1024
    proposal_variance: float = 2.0 / 3.0
    offset_std: float = 0.01
    replicates: int = 10_000
    m_list: tuple = (1, 10, 100, 1000)
    k_list: tuple = (1, 10, 100, 1000)
    estimators: tuple = ("iwae", "vae")
    beta: float = 0.5
    seed: int = 0
    # subcommand extras
    target_policy: str = "empirical"
    track: str = "b:0"
    oracle_samples: int = 1000
    steps: int = 2000
    minibatch_size: int = 32
    step_size: float = 1e-2
    log_every: int = 1
    triple_rho: float = 0.5

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ValueError(f"unknown preset {self.preset!r}; expected one of {tuple(PRESETS)}")
        for name, pinned in PRESETS[self.preset].items():
            if getattr(self, name) != pinned:
                raise ValueError(f"preset {self.preset!r} pins {name}={pinned!r}; use --preset custom to change it")
        object.__setattr__(self, "m_list", tuple(int(m) for m in self.m_list))
        object.__setattr__(self, "k_list", tuple(int(k) for k in self.k_list))
        object.__setattr__(self, "estimators", tuple(e.lower() for e in self.estimators))
        if not self.m_list or not self.k_list:
            raise ValueError("m_list and k_list must be nonempty")
        if min(self.m_list) < 1 or min(self.k_list) < 1:
            raise ValueError("m_list and k_list entries must be >= 1")
        for e in self.estimators:
            if e not in KINDS:
                raise ValueError(f"unknown estimator {e!r}; expected one of {KINDS}")
        if self.replicates < 1:
            raise ValueError(f"replicates must be >= 1, got {self.replicates}")
        if self.target_policy not in TARGET_POLICIES:
            raise ValueError(f"unknown target policy {self.target_policy!r}; expected one of {TARGET_POLICIES}")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        ModelConfig(self.dim, self.proposal_variance, self.n_data)
        if self.offset_std < 0:
            raise ValueError(f"offset_std must be >= 0, got {self.offset_std}")

    @classmethod
    def from_preset(cls, preset: str = "near-optimum", **overrides) -> ExperimentConfig:
        """Config with the preset's pinned values; pinned fields may not be overridden."""
        if preset not in PRESETS:
            raise ValueError(f"unknown preset {preset!r}; expected one of {tuple(PRESETS)}")
        pinned = PRESETS[preset]
        for name, value in overrides.items():
            if name in pinned and value != pinned[name]:
                raise ValueError(f"preset {preset!r} pins {name}={pinned[name]!r}; use --preset custom to change it")
        values = {**_BASE, **pinned}
        if preset == "high-variance":
            # far from the asymptotic regime; smaller default sweeps
            values.update(m_list=(1, 10, 100), k_list=(1, 10, 100))
        values.update(overrides)
        return cls(preset=preset, **values)

    @property
    def model(self) -> ModelConfig:
        return ModelConfig(self.dim, self.proposal_variance, self.n_data)

    @property
    def fits_slopes(self) -> bool:
        return self.preset != "high-variance"


@dataclass(frozen=True, eq=False)
class Problem:
    model: ModelConfig
    data: np.ndarray
    optimum: tuple
    theta: GenerativeParams
    phi: object


def build_problem(cfg: ExperimentConfig) -> Problem:
    """Dataset drawn from the model with ``mu_true ~ N(0, I)``, plus the perturbed point."""
    model = cfg.model
    mu_true = GenerativeParams(substream(cfg.seed, "dataset", 0).standard_normal(model.dim))
    data = sample_dataset(model, mu_true, substream(cfg.seed, "dataset", 1))
    optimum = analytic_optimum(data)
    theta, phi = perturb_params(optimum, cfg.offset_std, substream(cfg.seed, "perturb"))
    return Problem(model, data, optimum, theta, phi)


def specs_for(cfg: ExperimentConfig) -> list[EstimatorSpec]:
    """Estimators swept by ``cfg``, ordered by (kind order, M, K).

    VAE sweeps ``m_list`` at ``K = 1``; IWAE sweeps ``k_list`` at ``M = 1``;
    the other kinds take the ``m_list x k_list`` grid (PIWAE keeps the pairs
    where ``M`` divides ``K``).
    """
    out = []
    for kind in cfg.estimators:
        if kind == "vae":
            out += [EstimatorSpec.vae(m) for m in cfg.m_list]
        elif kind == "iwae":
            out += [EstimatorSpec.iwae(k) for k in cfg.k_list]
        elif kind == "miwae":
            out += [EstimatorSpec.miwae(m, k) for m in cfg.m_list for k in cfg.k_list]
        elif kind == "ciwae":
            out += [EstimatorSpec.ciwae(k, cfg.beta, m) for m in cfg.m_list for k in cfg.k_list]
        else:
            pairs = [(m, k // m) for m in cfg.m_list for k in cfg.k_list if k % m == 0]
            if not pairs:
                raise ValueError("PIWAE needs at least one (M, K) pair with M dividing K")
            out += [EstimatorSpec.piwae(m, l) for m, l in pairs]
    out = list(dict.fromkeys(out))
    order = {kind: i for i, kind in enumerate(cfg.estimators)}
    return sorted(out, key=lambda s: (order[s.kind], s.m, s.k))


# -- CSV ------------------------------------------------------------------------


def format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


@dataclass
class CsvTable:
    schema: str
    columns: tuple
    rows: list = field(default_factory=list)

    def add(self, **cells) -> None:
        unknown = set(cells) - set(self.columns)
        if unknown:
            raise KeyError(f"unknown columns {sorted(unknown)} for schema {self.schema}")
        self.rows.append(tuple(cells.get(c) for c in self.columns))

    def render(self) -> str:
        buf = io.StringIO()
        buf.write(f"#schema=gradlab.{self.schema}/{SCHEMA_VERSION}\n")
        buf.write(",".join(self.columns) + "\n")
        for row in self.rows:
            buf.write(",".join(format_cell(v) for v in row) + "\n")
        return buf.getvalue()

    def write(self, path) -> None:
        path = Path(path)
        try:
            path.write_text(self.render(), encoding="utf-8")
        except OSError as exc:
            raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc

    def column(self, name: str) -> list:
        j = self.columns.index(name)
        return [row[j] for row in self.rows]

    def where(self, **match) -> list[dict]:
        out = []
        for row in self.rows:
            rec = dict(zip(self.columns, row))
            if all(rec[k] == v for k, v in match.items()):
                out.append(rec)
        return out


SCHEMAS = {
    "snr": ("row", "estimator", "M", "K", "group", "index", "mean", "std", "snr", "stderr_mean"),
    "dsnr": ("row", "estimator", "M", "K", "group", "dsnr", "iqr_low", "iqr_high", "n_degenerate"),
    "hist": ("row", "estimator", "M", "K", "group", "index", "value"),
    "rmse": ("row", "estimator", "M", "K", "rmse"),
    "direction": (
        "row",
        "estimator",
        "M",
        "K",
        "cosine",
        "cosine_stderr",
        "step_stderr",
        "bias_norm",
        "predicted_bias_norm",
        "theta_distance",
    ),
    "lemma": (
        "row",
        "generator",
        "K",
        "identity",
        "lhs",
        "lhs_stderr",
        "rhs",
        "rhs_stderr",
        "exact",
        "z_score",
        "passed",
    ),
    "train": ("row", "estimator", "M", "K", "iteration", "elbo", "l2_generative", "l2_inference"),
}


def _table(name: str) -> CsvTable:
    return CsvTable(name, SCHEMAS[name])


# -- sweeps ---------------------------------------------------------------------

GROUP_SLICES = ("theta", "phi")


def run_replicates(cfg: ExperimentConfig, specs, problem: Problem | None = None, purpose: str = "sweep"):
    problem = problem or build_problem(cfg)
    return replicate_estimates(
        problem.theta, problem.phi, problem.data, specs, cfg.replicates, problem.model, cfg.seed, purpose=purpose
    )


def group_snr(samples, layout, group: str) -> float:
    """Mean over the group's components of the per-component SNR (undefined entries skipped)."""
    vals = snr(samples[:, layout.group_slice(group)])
    vals = vals[np.isfinite(vals)]
    return float(vals.mean()) if vals.size else float("nan")


def _sweep_lines(specs):
    """``(kind, fixed_axis, fixed_value, swept_axis, [specs])`` for every line with >= 2 points."""
    lines = []
    for kind in dict.fromkeys(s.kind for s in specs):
        of_kind = [s for s in specs if s.kind == kind]
        for fixed, swept in (("m", "k"), ("k", "m")):
            for value in sorted({getattr(s, fixed) for s in of_kind}):
                line = sorted((s for s in of_kind if getattr(s, fixed) == value), key=lambda s: getattr(s, swept))
                if len({getattr(s, swept) for s in line}) >= 2:
                    lines.append((kind, fixed, value, swept, line))
    return lines


def _trend(values) -> int:
    d = np.diff(values)
    if np.all(d > 0):
        return 1
    if np.all(d < 0):
        return -1
    return 0


def _mk(fixed: str, value: int) -> dict:
    return {"M": value, "K": "*"} if fixed == "m" else {"M": "*", "K": value}


def run_snr_sweep(cfg: ExperimentConfig, samples=None) -> CsvTable:
    """Per-component mean, std and SNR for every swept estimator, then group summaries.

    ``group`` rows hold the group-average SNR at one (M, K).  ``slope`` rows
    hold the log-log slope of that average along one sweep in ``snr`` and the
    fit's RMS residual in ``std``; the swept axis shows ``*``.  Under the
    high-variance preset ``trend`` rows (+1 increasing, -1 decreasing, 0
    neither) replace the slopes.
    """
    specs = specs_for(cfg)
    samples = samples or run_replicates(cfg, specs)
    layout = param_layout(cfg.dim)
    labels, local = layout.labels(), layout.local_index()
    table = _table("snr")
    two = cfg.replicates >= 2
    for s in specs:
        x = samples[s]
        mean = x.mean(axis=0)
        std = x.std(axis=0, ddof=1) if two else np.full(layout.size, np.nan)
        ratio = snr(x) if two else np.full(layout.size, np.nan)
        se = std / np.sqrt(x.shape[0])
        for j in range(layout.size):
            table.add(
                row="data", estimator=s.label, M=s.m, K=s.k, group=labels[j], index=int(local[j]),
                mean=mean[j], std=std[j], snr=ratio[j], stderr_mean=se[j],
            )
    if not two:
        return table
    agg = {(s, g): group_snr(samples[s], layout, g) for s in specs for g in GROUP_SLICES}
    for s in specs:
        for g in GROUP_SLICES:
            table.add(row="group", estimator=s.label, M=s.m, K=s.k, group=g, snr=agg[(s, g)])
    for kind, fixed, value, swept, line in _sweep_lines(specs):
        xs = [getattr(s, swept) for s in line]
        for g in GROUP_SLICES:
            ys = [agg[(s, g)] for s in line]
            if cfg.fits_slopes:
                fit = fit_loglog_slope(xs, ys)
                table.add(row="slope", estimator=line[0].label, group=g, snr=fit.slope, std=fit.residual, **_mk(fixed, value))
            else:
                table.add(row="trend", estimator=line[0].label, group=g, snr=_trend(ys), **_mk(fixed, value))
    return table


def run_dsnr_sweep(cfg: ExperimentConfig, target_policy: str | None = None, samples=None) -> CsvTable:
    """Directional SNR per estimator and parameter group, plus a random-vector baseline.

    ``empirical`` measures against each estimator's own mean; ``fixed_k1000``
    against the mean of IWAE with ``K = 1000``; ``random_baseline`` against a
    random unit direction.  ``baseline`` rows give the DSNR of standard normal
    vectors of the group's size.
    """
    policy = target_policy or cfg.target_policy
    if policy not in TARGET_POLICIES:
        raise ValueError(f"unknown target policy {policy!r}; expected one of {TARGET_POLICIES}")
    specs = specs_for(cfg)
    needed = list(specs)
    reference = EstimatorSpec.iwae(1000)
    if policy == "fixed_k1000" and reference not in needed:
        needed.append(reference)
    samples = samples or run_replicates(cfg, needed)
    layout = param_layout(cfg.dim)
    table = _table("dsnr")
    targets = {}
    for i, g in enumerate(GROUP_SLICES):
        size = layout.group_slice(g).stop - layout.group_slice(g).start
        if policy == "fixed_k1000":
            targets[g] = unit(samples[reference][:, layout.group_slice(g)].mean(axis=0))
        elif policy == "random_baseline":
            targets[g] = unit(substream(cfg.seed, "baseline", 1 + i).standard_normal(size))
        else:
            targets[g] = None
    for s in specs:
        for g in GROUP_SLICES:
            res = dsnr(samples[s][:, layout.group_slice(g)], targets[g])
            table.add(
                row="data", estimator=s.label, M=s.m, K=s.k, group=g, dsnr=res.value,
                iqr_low=res.iqr_low, iqr_high=res.iqr_high, n_degenerate=res.n_degenerate,
            )
    for i, g in enumerate(GROUP_SLICES):
        size = layout.group_slice(g).stop - layout.group_slice(g).start
        res = dsnr_random_baseline(size, cfg.replicates, substream(cfg.seed, "baseline", 100 + i))
        table.add(
            row="baseline", estimator="random", group=g, dsnr=res.value,
            iqr_low=res.iqr_low, iqr_high=res.iqr_high, n_degenerate=res.n_degenerate,
        )
    return table


def parse_track(track: str, dim: int) -> tuple[str, int, int]:
    """``"group:index"`` to ``(group, local index, flat index)``."""
    try:
        group, idx = track.split(":")
        idx = int(idx)
    except ValueError:
        raise ValueError(f"track must look like 'b:0' or 'mu:3', got {track!r}") from None
    if group not in GROUPS:
        raise ValueError(f"unknown group {group!r}; expected one of {GROUPS}")
    sl = param_layout(dim).group_slice(group)
    if not 0 <= idx < sl.stop - sl.start:
        raise ValueError(f"index {idx} out of range for group {group!r} of size {sl.stop - sl.start}")
    return group, idx, sl.start + idx


def run_hist(cfg: ExperimentConfig, samples=None) -> CsvTable:
    """Raw replicate values of one tracked component, then ``sign_fraction``/``mean``/``std`` rows."""
    group, idx, flat = parse_track(cfg.track, cfg.dim)
    specs = specs_for(cfg)
    samples = samples or run_replicates(cfg, specs)
    table = _table("hist")
    for s in specs:
        values = samples[s][:, flat]
        for v in values:
            table.add(row="sample", estimator=s.label, M=s.m, K=s.k, group=group, index=idx, value=v)
    if cfg.replicates >= 2:
        for s in specs:
            values = samples[s][:, flat]
            common = dict(estimator=s.label, M=s.m, K=s.k, group=group, index=idx)
            table.add(row="sign_fraction", value=sign_balance(values)[0], **common)
            table.add(row="mean", value=values.mean(), **common)
            table.add(row="std", value=values.std(ddof=1), **common)
    return table


def rmse_target(problem: Problem) -> np.ndarray:
    """Dataset average of the exact ``grad_mu log p(x)`` at the working point."""
    return grad_log_marginal(problem.theta, problem.data).mean(axis=0)


def run_rmse(cfg: ExperimentConfig, samples=None, problem: Problem | None = None) -> CsvTable:
    """RMSE of the generative-gradient estimate to the exact dataset-averaged score.

    ``slope`` rows fit K sweeps over ``K >= 100`` (all K if fewer than two
    qualify) and M sweeps over every M; ``variation`` rows give
    ``(max - min) / min`` of the RMSE along the sweep; ``trend`` rows give its
    direction (+1, -1 or 0).
    """
    problem = problem or build_problem(cfg)
    specs = specs_for(cfg)
    samples = samples or run_replicates(cfg, specs, problem)
    layout = param_layout(cfg.dim)
    target = rmse_target(problem)
    table = _table("rmse")
    values = {s: rmse_to(samples[s][:, layout.mu], target) for s in specs}
    for s in specs:
        table.add(row="data", estimator=s.label, M=s.m, K=s.k, rmse=values[s])
    for kind, fixed, value, swept, line in _sweep_lines(specs):
        xs = np.array([getattr(s, swept) for s in line])
        ys = np.array([values[s] for s in line])
        common = dict(estimator=line[0].label, **_mk(fixed, value))
        if cfg.fits_slopes:
            keep = xs >= 100 if swept == "k" and np.sum(xs >= 100) >= 2 else np.ones(xs.size, bool)
            table.add(row="slope", rmse=fit_loglog_slope(xs[keep], ys[keep]).slope, **common)
        table.add(row="variation", rmse=(ys.max() - ys.min()) / ys.min(), **common)
        table.add(row="trend", rmse=_trend(ys), **common)
    return table


def run_direction(cfg: ExperimentConfig, samples=None, problem: Problem | None = None) -> CsvTable:
    """Cosine of the mean IWAE inference gradient with the asymptotic direction, and its bias.

    One ``data`` row per K in ``k_list`` (``M = 1``).  The ``slope`` row holds
    the log-log slope of ``bias_norm`` over ``K >= 10`` and the same fit to
    the predicted leading-order bias in ``predicted_bias_norm``.
    """
    if cfg.replicates < 2:
        raise ValueError("the direction experiment needs at least 2 replicates")
    problem = problem or build_problem(cfg)
    specs = {k: EstimatorSpec.iwae(k) for k in sorted(set(cfg.k_list))}
    samples = samples or run_replicates(cfg, list(specs.values()), problem)
    by_k = {k: samples[s] for k, s in specs.items()}
    target = asymptotics.direction_target(
        problem.theta, problem.phi, problem.data, cfg.oracle_samples, problem.model, substream(cfg.seed, "oracle")
    )
    cosines = {row.k: row for row in asymptotics.direction_convergence(by_k, target.direction, blocks=min(20, cfg.replicates))}
    bias = asymptotics.bias_table(by_k, target.variance_gradient, rmse_target(problem))
    table = _table("direction")
    for row in bias.rows:
        c = cosines[row.k]
        table.add(
            row="data", estimator="iwae", M=1, K=row.k, cosine=c.cosine, cosine_stderr=c.stderr,
            step_stderr=c.step_stderr, bias_norm=row.norm, predicted_bias_norm=row.predicted_norm,
            theta_distance=row.theta_distance,
        )
    big = [r for r in bias.rows if r.k >= 10]
    if cfg.fits_slopes and len({r.k for r in big}) >= 2:
        ks = [r.k for r in big]
        table.add(
            row="slope", estimator="iwae", M=1, K="*",
            bias_norm=fit_loglog_slope(ks, [r.norm for r in big]).slope,
            predicted_bias_norm=fit_loglog_slope(ks, [r.predicted_norm for r in big]).slope,
        )
    return table


def default_triple_generators(rho: float = 0.5) -> list[asymptotics.TripleGenerator]:
    return [
        asymptotics.TripleGenerator("identical"),
        asymptotics.TripleGenerator("correlated", rho=rho),
        asymptotics.TripleGenerator("weight_residual"),
    ]


def run_lemma(cfg: ExperimentConfig, generators=None) -> CsvTable:
    """Moment identities for averages of i.i.d. triples; ``replicates`` is the trial count.

    ``product_variance`` uses the ``2K - 2`` cross coefficient and
    ``product_variance_paired`` the exact-pairing ``K - 1``.  ``summary`` rows
    report ``all`` (mean identity plus the first variance form) and
    ``all_paired``.
    """
    generators = generators or default_triple_generators(cfg.triple_rho)
    table = _table("lemma")
    for gi, gen in enumerate(generators):
        name = gen.kind if gen.kind != "correlated" else f"correlated(rho={gen.rho:g})"
        for k in sorted(set(cfg.k_list)):
            index = gi * 1_000_003 + k
            rep = asymptotics.lemma_moment_check(
                gen, k, cfg.replicates, substream(cfg.seed, "lemma_lhs", index), substream(cfg.seed, "lemma_rhs", index)
            )
            for c in rep.checks:
                table.add(
                    row="data", generator=name, K=k, identity=c.name, lhs=c.lhs, lhs_stderr=c.lhs_se,
                    rhs=c.rhs, rhs_stderr=c.rhs_se, exact=c.exact, z_score=c.z_score, passed=c.passed,
                )
            table.add(row="summary", generator=name, K=k, identity="all", passed=rep.passed)
            table.add(row="summary", generator=name, K=k, identity="all_paired", passed=rep.passed_paired)
    return table


def run_train(cfg: ExperimentConfig, problem: Problem | None = None) -> CsvTable:
    """Adam training trace for every swept estimator, all from the same seeds.

    Each run restarts ``substream(seed, "train")``, so every estimator sees
    the same initial point and the same minibatches.
    """
    problem = problem or build_problem(cfg)
    hyper = AdamHyperparams(step_size=cfg.step_size)
    table = _table("train")
    for s in specs_for(cfg):
        trace = train(
            s, problem.data, problem.model, cfg.steps, cfg.minibatch_size, hyper,
            substream(cfg.seed, "train"), log_every=cfg.log_every,
        )
        for r in trace.records:
            table.add(
                row="data", estimator=s.label, M=s.m, K=s.k, iteration=r.iteration, elbo=r.elbo_estimate,
                l2_generative=r.l2_generative_distance, l2_inference=r.l2_inference_distance,
            )
    return table


# subcommand -> (runner, schema name)
SUBCOMMANDS = {
    "snr-sweep": (run_snr_sweep, "snr"),
    "dsnr-sweep": (run_dsnr_sweep, "dsnr"),
    "hist": (run_hist, "hist"),
    "rmse": (run_rmse, "rmse"),
    "direction": (run_direction, "direction"),
    "lemma": (run_lemma, "lemma"),
    "train": (run_train, "train"),
}
