"""Command-line entry point.

Subcommands:

    run      full train/test grid with nulls and reports
    synth    generate a synthetic hierarchical dataset (manifest format)
    verify   check the exact transfer identities on synthetic data
    stats    recompute statistics.csv from a saved run directory
    melspec  waveform file -> log-mel spectrogram file

Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.
Progress and warnings go to stderr; stdout carries one final summary line.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import pipeline
from .data import make_split, save_dataset
from .errors import ConfigError, DataError, NumericError, SpecreconError
from .lagridge import LagSpec
from .matrixio import read_matrix, write_matrix
from .melspec import MelConfig, compute_log_mel
from .synth import (
    CANONICAL_ORDERING_CONFIG,
    SourceConfig,
    generate,
    transfer_ordering_experiment,
    verify_transfer_identities,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _log(message: str) -> None:
    print(message, file=sys.stderr)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="specrecon",
        description="Spectrogram reconstruction decoders and cross-condition transfer analysis.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run the full train/test condition grid")
    run_p.add_argument("--config", help="JSON file with run settings (flags override it)")
    run_p.add_argument("--manifest", help="dataset manifest path")
    run_p.add_argument("--outdir", help="output directory")
    run_p.add_argument("--decoders", choices=["linear", "nonlinear", "both"])
    run_p.add_argument("--lag-ms", type=float, dest="lag_ms")
    run_p.add_argument("--alpha-grid", dest="alpha_grid",
                       help="comma-separated ridge strengths")
    run_p.add_argument("--split", help="train,val,test fractions, e.g. 0.8,0.1,0.1")
    run_p.add_argument("--seed", type=int, help="split seed")
    run_p.add_argument("--no-standardize", action="store_true")
    run_p.add_argument("--no-nulls", action="store_true")
    run_p.add_argument("--null-kind", choices=["shuffled_pairing", "circular_shift"])
    run_p.add_argument("--null-realizations", type=int)
    run_p.add_argument("--null-seed", type=int)
    run_p.add_argument("--permutation-resamples", type=int)
    run_p.add_argument("--nn-hidden", type=int)
    run_p.add_argument("--nn-kernel", type=int)
    run_p.add_argument("--nn-epochs", type=int)
    run_p.add_argument("--nn-learning-rate", type=float)
    run_p.add_argument("--nn-batch", type=int)
    run_p.add_argument("--nn-seed", type=int)

    synth_p = sub.add_parser("synth", help="generate a synthetic hierarchical dataset")
    synth_p.add_argument("--out", required=True, help="directory for manifest and matrices")
    synth_p.add_argument("--sentences", type=int, default=20)
    synth_p.add_argument("--samples", type=int, default=200)
    synth_p.add_argument("--channels", type=int, default=16)
    synth_p.add_argument("--bands", type=int, default=4)
    synth_p.add_argument("--seed", type=int, default=0)
    synth_p.add_argument("--angle", type=float, default=90.0,
                         help="overlap angle in degrees between component subspaces")
    synth_p.add_argument("--amp", default="1,1,1",
                         help="planning,articulatory,sensory amplitudes")
    synth_p.add_argument("--target-noise", type=float, default=0.5)
    synth_p.add_argument("--channel-noise", type=float, default=0.2)
    synth_p.add_argument("--format", choices=[".csv", ".f64"], default=".f64")

    verify_p = sub.add_parser("verify", help="check exact transfer identities on synthetic data")
    verify_p.add_argument("--seed", type=int, default=0)
    verify_p.add_argument("--seeds", type=int, default=3, help="number of seeds to check")
    verify_p.add_argument("--tolerance", type=float, default=1e-10)
    verify_p.add_argument("--ordering", action="store_true",
                          help="also run the transfer ordering experiment")

    stats_p = sub.add_parser("stats", help="recompute statistics from a saved run directory")
    stats_p.add_argument("--report-dir", required=True)
    stats_p.add_argument("--permutation-resamples", type=int, default=10_000)
    stats_p.add_argument("--seed", type=int, default=0)

    mel_p = sub.add_parser("melspec", help="compute a log-mel spectrogram from a waveform file")
    mel_p.add_argument("--input", required=True,
                       help="waveform as a 1xN or Nx1 matrix file (.csv or .f64)")
    mel_p.add_argument("--output", required=True, help="spectrogram matrix file (.csv or .f64)")
    mel_p.add_argument("--sample-rate", type=float, required=True)
    mel_p.add_argument("--window", type=int, default=400)
    mel_p.add_argument("--hop", type=int, default=160)
    mel_p.add_argument("--bands", type=int, default=16)
    mel_p.add_argument("--floor", type=float, default=1e-10)
    return parser


def _run_config_from_args(args: argparse.Namespace) -> pipeline.RunConfig:
    doc: dict = {}
    if args.config:
        doc = pipeline.RunConfig.from_file(args.config).to_dict()
    overrides = {
        "manifest": args.manifest,
        "output_dir": args.outdir,
        "decoders": args.decoders,
        "lag_window_ms": args.lag_ms,
        "null_kind": args.null_kind,
        "null_realizations": args.null_realizations,
        "null_seed": args.null_seed,
        "permutation_resamples": args.permutation_resamples,
        "split_seed": args.seed,
    }
    for key, value in overrides.items():
        if value is not None:
            doc[key] = value
    if args.alpha_grid is not None:
        try:
            doc["alpha_grid"] = [float(a) for a in args.alpha_grid.split(",") if a]
        except ValueError:
            raise ConfigError(f"bad --alpha-grid value {args.alpha_grid!r}")
    if args.split is not None:
        parts = args.split.split(",")
        if len(parts) != 3:
            raise ConfigError(f"--split needs three comma-separated fractions, got {args.split!r}")
        doc["split_fractions"] = [float(p) for p in parts]
    if args.no_standardize:
        doc["standardize"] = False
    if args.no_nulls:
        doc["with_nulls"] = False
    net = doc.get("net", {}) or {}
    for flag, key in (
        ("nn_hidden", "hidden"),
        ("nn_kernel", "kernel"),
        ("nn_epochs", "epochs"),
        ("nn_learning_rate", "learning_rate"),
        ("nn_batch", "batch_trials"),
        ("nn_seed", "seed"),
    ):
        value = getattr(args, flag)
        if value is not None:
            net[key] = value
    if net:
        doc["net"] = net
    if "manifest" not in doc or "output_dir" not in doc:
        raise ConfigError("run needs --manifest and --outdir (or a config file providing them)")
    return pipeline.RunConfig.from_dict(doc)


def _cmd_run(args: argparse.Namespace) -> int:
    config = _run_config_from_args(args)
    outdir = pipeline.run(config, log=_log)
    print(f"run complete: reports in {outdir}")
    return EXIT_OK


def _cmd_synth(args: argparse.Namespace) -> int:
    amps = args.amp.split(",")
    if len(amps) != 3:
        raise ConfigError(f"--amp needs three comma-separated values, got {args.amp!r}")
    config = SourceConfig(
        amp_planning=float(amps[0]),
        amp_articulatory=float(amps[1]),
        amp_sensory=float(amps[2]),
        overlap_angle_deg=args.angle,
        target_noise=args.target_noise,
        channel_noise=args.channel_noise,
        n_bands=args.bands,
    )
    dataset, sources = generate(config, args.sentences, args.samples, args.channels, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = save_dataset(dataset, out / "manifest.json", matrix_format=args.format)
    comp_dir = out / "sources"
    comp_dir.mkdir(exist_ok=True)
    for name, comp in (
        ("planning", sources.planning),
        ("articulatory", sources.articulatory),
        ("sensory", sources.sensory),
    ):
        for s_idx, sid in enumerate(sources.sentence_ids):
            for rep in range(config.n_repetitions):
                write_matrix(
                    comp_dir / f"{name}_s{sid:04d}_r{rep}{args.format}",
                    comp[s_idx, rep],
                )
    (out / "generator.json").write_text(
        json.dumps(
            {
                "seed": args.seed,
                "n_sentences": args.sentences,
                "n_samples": args.samples,
                "n_channels": args.channels,
                "overlap_angle_deg": config.overlap_angle_deg,
                "amplitudes": [config.amp_planning, config.amp_articulatory, config.amp_sensory],
                "target_noise": config.target_noise,
                "channel_noise": config.channel_noise,
            },
            indent=1,
        )
        + "\n",
        encoding="utf-8",
    )
    _log(f"wrote {len(dataset.pairs)} pairs and ground-truth sources under {out}")
    print(f"synthetic dataset written: {manifest}")
    return EXIT_OK


def _cmd_verify(args: argparse.Namespace) -> int:
    from .lagridge import fit_ridge, stack_pairs
    from .data import ConditionLabel

    worst = 0.0
    for seed in range(args.seed, args.seed + args.seeds):
        dataset, sources = generate(SourceConfig(), 8, 120, 12, seed)
        lagspec = LagSpec(lags=(0, 1, 2))
        split = make_split(dataset, (0.75, 0.0, 0.25), seed)
        train_pairs = dataset.select(
            condition=ConditionLabel.MIMED, sentence_ids=split.train_ids
        )
        design, targets = stack_pairs(train_pairs, lagspec)
        decoder = fit_ridge(design, targets, 1.0, lagspec, trained_on=ConditionLabel.MIMED)
        report = verify_transfer_identities(decoder, sources)
        worst = max(worst, report.sensory_identity_dev, report.articulatory_identity_dev)
        _log(
            f"seed {seed}: sensory identity dev {report.sensory_identity_dev:.3e}, "
            f"articulatory identity dev {report.articulatory_identity_dev:.3e}"
        )
    ok = worst < args.tolerance
    if args.ordering:
        result = transfer_ordering_experiment(CANONICAL_ORDERING_CONFIG, seed=args.seed)
        _log(
            "ordering: mimed->mimed "
            f"{result.mimed_to_mimed:.3f}, mimed->vocalized {result.mimed_to_vocalized:.3f}, "
            f"mimed->imagined {result.mimed_to_imagined:.3f}"
        )
        ok = ok and result.ordering_holds
    print(
        f"verify {'passed' if ok else 'FAILED'}: max identity deviation {worst:.3e} "
        f"(tolerance {args.tolerance:g})"
    )
    if not ok:
        raise NumericError("transfer identity verification failed")
    return EXIT_OK


def _cmd_stats(args: argparse.Namespace) -> int:
    out = pipeline.recompute_statistics(
        args.report_dir, n_resamples=args.permutation_resamples, seed=args.seed
    )
    print(f"statistics written: {out}")
    return EXIT_OK


def _cmd_melspec(args: argparse.Namespace) -> int:
    wav = read_matrix(args.input)
    if 1 not in wav.shape:
        raise DataError(
            f"{args.input}: expected a 1xN or Nx1 waveform matrix, got {wav.shape}"
        )
    config = MelConfig(window=args.window, hop=args.hop, n_bands=args.bands, floor=args.floor)
    spec = compute_log_mel(wav.ravel(), args.sample_rate, config)
    write_matrix(args.output, spec.data)
    print(
        f"log-mel spectrogram written: {args.output} "
        f"({spec.n_bands} bands x {spec.n_samples} frames)"
    )
    return EXIT_OK


_COMMANDS = {
    "run": _cmd_run,
    "synth": _cmd_synth,
    "verify": _cmd_verify,
    "stats": _cmd_stats,
    "melspec": _cmd_melspec,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        _log(f"config error: {exc}")
        return EXIT_CONFIG
    except DataError as exc:
        _log(f"data error: {exc}")
        return EXIT_DATA
    except NumericError as exc:
        _log(f"numeric failure: {exc}")
        return EXIT_NUMERIC
    except SpecreconError as exc:  # pragma: no cover - defensive
        _log(f"error: {exc}")
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
