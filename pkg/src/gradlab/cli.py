"""``gradlab`` command line: run one experiment and write its CSV table."""

from __future__ import annotations

import argparse
import sys

from . import experiments
from .experiments import SCHEMAS, ExperimentConfig

# subcommand-specific defaults layered over the preset
SUBCOMMAND_DEFAULTS = {
    "snr-sweep": {},
    "dsnr-sweep": {},
    "hist": {"m_list": (1, 10, 100), "k_list": (1, 10, 100, 1000)},
    "rmse": {"m_list": (1, 10, 100), "k_list": (1, 10, 100, 300, 1000)},
    "direction": {"estimators": ("iwae",)},
    "lemma": {"k_list": (1, 2, 10), "replicates": 100_000},
    "train": {"estimators": ("vae", "iwae"), "m_list": (100,), "k_list": (100,)},
}

# train runs at desk scale unless a preset is asked for explicitly
TRAIN_CUSTOM = {"dim": 5, "n_data": 256}

HELP = {
    "snr-sweep": "per-component SNR of replicated batch gradients, with group slopes",
    "dsnr-sweep": "directional SNR per parameter group, with a random-vector baseline",
    "hist": "raw replicate values of one tracked component",
    "rmse": "RMSE of the generative gradient to the exact score",
    "direction": "cosine with the asymptotic inference direction and bias decay",
    "lemma": "moment identities for averages of i.i.d. triples",
    "train": "Adam training traces",
}


def _int_list(text: str) -> tuple[int, ...]:
    try:
        values = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("list must not be empty")
    return values


def _name_list(text: str) -> tuple[str, ...]:
    return tuple(v.strip().lower() for v in text.split(",") if v.strip())


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"seed must fit in an unsigned 64-bit integer, got {text}")
    return value


def _epilog(name: str) -> str:
    cols = ",".join(SCHEMAS[experiments.SUBCOMMANDS[name][1]])
    return f"CSV columns (after a '#schema=' line): {cols}"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gradlab", description="Gradient-estimator experiments on a linear Gaussian model.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="subcommand")
    for name, help_text in HELP.items():
        p = sub.add_parser(name, help=help_text, description=help_text, epilog=_epilog(name))
        p.add_argument("--preset", choices=tuple(experiments.PRESETS), default=None,
                       help="near-optimum (default; train defaults to custom D=5, N=256), high-variance or custom")
        p.add_argument("--seed", type=_seed, default=0)
        p.add_argument("--replicates", type=int, default=None)
        p.add_argument("--m-list", type=_int_list, default=None)
        p.add_argument("--k-list", type=_int_list, default=None)
        p.add_argument("--estimator", type=_name_list, default=None, help="one kind or a comma list")
        p.add_argument("--beta", type=float, default=None, help="CIWAE mixing weight")
        p.add_argument("--out", default="-", help="output path ('-' for stdout)")
        custom = p.add_argument_group("model (custom preset only)")
        custom.add_argument("--dim", type=int, default=None)
        custom.add_argument("--n-data", type=int, default=None)
        custom.add_argument("--proposal-variance", type=float, default=None)
        custom.add_argument("--offset-std", type=float, default=None)
        if name == "dsnr-sweep":
            p.add_argument("--target-policy", choices=experiments.TARGET_POLICIES, default=None)
        if name == "hist":
            p.add_argument("--track", default=None, help="component as group:index, e.g. b:0 or mu:3")
        if name == "direction":
            p.add_argument("--oracle-samples", type=int, default=None, help="draws per datapoint for the direction")
        if name == "lemma":
            p.add_argument("--rho", type=float, default=None, help="correlation of the correlated generator")
        if name == "train":
            p.add_argument("--steps", type=int, default=None)
            p.add_argument("--minibatch-size", type=int, default=None)
            p.add_argument("--step-size", type=float, default=None)
            p.add_argument("--log-every", type=int, default=None)
    return parser


_ARG_TO_FIELD = {
    "replicates": "replicates",
    "m_list": "m_list",
    "k_list": "k_list",
    "estimator": "estimators",
    "beta": "beta",
    "dim": "dim",
    "n_data": "n_data",
    "proposal_variance": "proposal_variance",
    "offset_std": "offset_std",
    "target_policy": "target_policy",
    "track": "track",
    "oracle_samples": "oracle_samples",
    "rho": "triple_rho",
    "steps": "steps",
    "minibatch_size": "minibatch_size",
    "step_size": "step_size",
    "log_every": "log_every",
}


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    overrides = dict(SUBCOMMAND_DEFAULTS[args.command])
    preset = args.preset
    if preset is None:
        preset = "custom" if args.command == "train" else "near-optimum"
        if args.command == "train":
            overrides.update(TRAIN_CUSTOM)
    for arg, fld in _ARG_TO_FIELD.items():
        value = getattr(args, arg, None)
        if value is not None:
            overrides[fld] = value
    return ExperimentConfig.from_preset(preset, seed=args.seed, **overrides)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
        table = experiments.SUBCOMMANDS[args.command][0](cfg)
        if args.out == "-":
            sys.stdout.write(table.render())
        else:
            table.write(args.out)
    except (ValueError, OSError, KeyError) as exc:
        print(f"gradlab: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
