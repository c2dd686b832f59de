"""Command-line driver: simulate, fit, sweep and classify."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .fit import fit
from .models import ModelId, UnsupportedModelError
from .priors import InitConfig, default_priors, load_config, parse_config
from .selection import ConvergenceConfig
from .simulate import (generate_sim1, generate_sim2, pca_transform, read_csv, with_known_fraction,
                       write_csv)
from .stiefel import McConfig
from .sweep import EXIT_INPUT, EXIT_NOT_CONVERGED, EXIT_OK, RunConfig, format_summary, run_sweep

DESIGNS = {"sim1": generate_sim1, "sim2": generate_sim2}

# config-file keys that override command-line flags (everything else is a prior)
_RUN_KEYS = {
    "seed": int, "G_max": int, "epsilon": float, "max_iters": int, "restarts": int,
    "models": str, "strategy": str, "n_samples": int, "burn_in": int, "max_restarts": int,
    "known_fraction": float, "data_seed": int,
}


def _add_common(p: argparse.ArgumentParser, models: bool = True) -> None:
    src = p.add_mutually_exclusive_group()
    src.add_argument("--input", type=Path, help="CSV file (optional header; 'label' and 'truth' columns)")
    src.add_argument("--design", choices=sorted(DESIGNS), help="built-in simulation design")
    p.add_argument("--data-seed", type=int, default=0, help="seed for --design data")
    p.add_argument("--pca", action="store_true", help="rotate onto principal components first")
    if models:
        p.add_argument("--models", default=",".join(m.value for m in ModelId),
                       help="comma-separated model names")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--G-max", dest="G_max", type=int, default=None)
    p.add_argument("--epsilon", type=float, default=ConvergenceConfig.epsilon)
    p.add_argument("--max-iters", dest="max_iters", type=int, default=ConvergenceConfig.max_iters)
    p.add_argument("--strategy", default=None, help="initialisation strategy")
    p.add_argument("--n-samples", dest="n_samples", type=int, default=McConfig.n_samples)
    p.add_argument("--burn-in", dest="burn_in", type=int, default=McConfig.burn_in)
    p.add_argument("--max-restarts", dest="max_restarts", type=int, default=McConfig.max_restarts)
    p.add_argument("--config", type=Path, help="key = value file; overrides flags and priors")
    p.add_argument("--output-dir", type=Path, default=None)
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vbgpcm", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write a simulated data set as CSV")
    p.add_argument("design", choices=sorted(DESIGNS))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("fit", help="fit a single model once")
    _add_common(p, models=False)
    p.add_argument("--model", required=True)

    p = sub.add_parser("sweep", help="fit models x restarts and summarise by DIC")
    _add_common(p)
    p.add_argument("--restarts", type=int, default=10)

    p = sub.add_parser("classify", help="semi-supervised fit using known labels")
    _add_common(p)
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--known-fraction", dest="known_fraction", type=float, default=None,
                   help="reveal this fraction of ground-truth labels as known")
    return parser


def _apply_config(args) -> None:
    if getattr(args, "config", None) is None:
        return
    raw = parse_config(args.config)
    for key, cast in _RUN_KEYS.items():
        if key in raw:
            setattr(args, key, cast(raw[key]))


def _load_data(args):
    if args.input is not None:
        data = read_csv(args.input)
    else:
        data = DESIGNS[args.design or "sim1"](args.data_seed)
    if args.pca:
        data = pca_transform(data)
    return data


def _conv(args) -> ConvergenceConfig:
    return ConvergenceConfig(epsilon=args.epsilon, max_iters=args.max_iters)


def _mc(args) -> McConfig:
    return McConfig(n_samples=args.n_samples, burn_in=args.burn_in,
                    max_restarts=args.max_restarts, seed=args.seed)


def _cmd_simulate(args) -> int:
    data = DESIGNS[args.design](args.seed)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(args.out, data)
    print(f"wrote {data.n} x {data.d} rows to {args.out}")
    return EXIT_OK


def _cmd_fit(args, data) -> int:
    model = ModelId.parse(args.model)
    G_max = args.G_max or 10
    priors = default_priors(data, model, G_max)
    init_kw = {}
    if args.config is not None:
        loaded, init_kw = load_config(args.config, base=priors)
        priors = loaded or priors
    init = InitConfig(**{"G_max": G_max, "strategy": args.strategy or "random-responsibilities",
                         **init_kw, "seed": args.seed})
    report = fit(data, model, priors=priors, cfg=init, conv=_conv(args), mc=_mc(args))
    print(f"{model.value}: G={report.G} DIC={report.dic:.3f} BIC={report.score.bic:.3f} "
          f"iterations={report.n_iter} converged={report.converged}")
    if args.output_dir is not None:
        args.output_dir.mkdir(parents=True, exist_ok=True)
        (args.output_dir / f"fit_{model.value}.json").write_text(report.to_json() + "\n")
    return EXIT_OK if report.converged else EXIT_NOT_CONVERGED


def _cmd_sweep(args, data, classify: bool) -> int:
    strategy = args.strategy
    G_max = args.G_max
    if classify:
        if args.known_fraction is not None:
            data = with_known_fraction(data, args.known_fraction, seed=args.seed)
        if data.labels is None or not data.known.any():
            raise ValueError("classify needs a 'label' column or --known-fraction with ground truth")
        G_max = G_max or int(data.labels.max())
        strategy = strategy or "provided-labels"
    cfg = RunConfig(
        data=data, models=args.models.split(","), restarts=args.restarts,
        G_max=G_max or 10, seed=args.seed, conv=_conv(args), mc=_mc(args),
        prior_config=args.config, strategy=strategy or "random-responsibilities",
        classify=classify, output_dir=args.output_dir,
    )
    result = run_sweep(cfg)
    print(format_summary(result.summary))
    return result.exit_code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "simulate":
            return _cmd_simulate(args)
        _apply_config(args)
        data = _load_data(args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        if args.command == "fit":
            return _cmd_fit(args, data)
        return _cmd_sweep(args, data, classify=args.command == "classify")
    except (ValueError, UnsupportedModelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
