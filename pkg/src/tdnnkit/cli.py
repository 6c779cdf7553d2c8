"""Command-line entry point: gen-corpus, featurize, train, eval,
bench-convergence, inspect.

Exit codes: 0 on success, 1 on usage errors (usage text on stderr), 2 on
runtime errors (single line ``ERROR:<category>: message`` on stderr).
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, replace
from pathlib import Path

from . import __version__
from .corpus import (
    CorpusConfig,
    generate_corpus,
    parse_corpus_config,
    read_manifest,
    split_manifest,
    write_manifest,
)
from .errors import ConfigurationError, DataError, ToolkitError
from .features import (
    FEATURE_FILE_VERSION,
    FeatureConfig,
    append_embedding,
    apply_cmvn,
    compute_mfcc,
    read_raw_pcm,
    read_wav,
    speaker_embedding,
    write_features,
)
from .scoring import format_eval_report, score_corpus
from .tdnn import (
    CHECKPOINT_VERSION,
    PRESET_NAMES,
    build_plan,
    flop_count,
    load_checkpoint,
    make_preset,
    param_count,
    parse_network_spec,
    receptive_field,
    save_checkpoint,
)
from .training import (
    TrainConfig,
    bench_convergence,
    format_bench_report,
    format_convergence_report,
    greedy_layerwise_train,
    parse_train_config,
    train,
)

DESK_UNITS = 48

LOG_LEVELS = ("quiet", "info", "debug")


@dataclass(frozen=True)
class GlobalConfig:
    """Cross-command settings: seeding, worker threads, verbosity."""

    seed: int = 0
    threads: int = 1
    log_level: str = "info"

    def __post_init__(self):
        if self.threads < 1:
            raise ConfigurationError("threads must be at least 1")
        if self.log_level not in LOG_LEVELS:
            raise ConfigurationError(f"log_level must be one of {LOG_LEVELS}")


def _say(gcfg: GlobalConfig, message: str) -> None:
    if gcfg.log_level != "quiet":
        print(message)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="tdnnkit", description=__doc__)
    parser.add_argument("--version", action="store_true", help="print versions and exit")
    parser.add_argument("--log-level", choices=list(LOG_LEVELS), default="info")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("gen-corpus", help="generate a synthetic corpus")
    p.add_argument("--config", help="corpus config file (key = value lines)")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--num-utterances", type=int, help="override the config size")
    p.add_argument("--mode", choices=["features", "audio"], help="override the payload mode")
    p.add_argument(
        "--split-fraction", type=float,
        help="also write manifest.train.tsv / manifest.heldout.tsv at this train fraction",
    )
    p.add_argument("--split-seed", type=int, default=0)

    p = sub.add_parser("featurize", help="extract MFCC features from audio")
    p.add_argument("--in", dest="in_path", required=True, help="WAV file (or raw PCM with --raw-rate)")
    p.add_argument("--out", dest="out_path", required=True, help="output feature file")
    p.add_argument("--raw-rate", type=int, help="treat input as raw s16le mono PCM at this rate")
    p.add_argument("--cmvn", action="store_true", help="apply per-utterance mean/variance normalization")
    p.add_argument("--embed-dim", type=int, help="append a speaker-statistics embedding of this size")
    p.add_argument("--embed-seed", type=int, default=0)

    p = sub.add_parser("train", help="train a network on a feature corpus")
    p.add_argument("--arch", required=True, help="preset name or network spec file")
    p.add_argument("--corpus", required=True, help="training manifest")
    p.add_argument("--heldout", required=True, help="held-out manifest")
    p.add_argument("--config", help="train config file (key = value lines)")
    p.add_argument("--out", dest="out_path", required=True, help="output checkpoint")
    p.add_argument("--report", help="convergence report TSV")
    p.add_argument("--units", type=int, help="override preset hidden width")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--max-epochs", type=int, help="override the config epoch budget")
    p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser("eval", help="score a checkpoint on a corpus")
    p.add_argument("--model", required=True, help="checkpoint file")
    p.add_argument("--corpus", required=True, help="manifest to score")
    p.add_argument("--out", dest="out_path", help="report TSV")

    p = sub.add_parser("bench-convergence", help="race a TDNN against its matched FFNN")
    p.add_argument("--corpus", required=True, help="corpus directory (contains manifest.tsv)")
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--target-acc", type=float, default=0.9)
    p.add_argument("--out", dest="out_path", help="benchmark report file")
    p.add_argument("--config", help="train config file shared by both arms")
    p.add_argument("--units", type=int, default=DESK_UNITS)
    p.add_argument("--train-fraction", type=float, default=0.9)
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser("inspect", help="print preset architecture accounting")
    p.add_argument("--arch", choices=list(PRESET_NAMES), help="one preset (default: all)")
    p.add_argument("--units", type=int, help="override hidden width")
    p.add_argument("--classes", type=int, default=8)
    p.add_argument("--frames", type=int, default=100, help="output frames for the MAC count")

    return parser


def _read_text(path) -> str:
    with open(path) as fh:
        return fh.read()


def _cmd_gen_corpus(args, gcfg: GlobalConfig) -> None:
    cfg = parse_corpus_config(_read_text(args.config)) if args.config else CorpusConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.num_utterances is not None:
        overrides["num_utterances"] = args.num_utterances
    if args.mode is not None:
        overrides["mode"] = args.mode
    if overrides:
        cfg = replace(cfg, **overrides)
    manifest, _ = generate_corpus(cfg, args.out_dir)
    out_dir = Path(args.out_dir)
    if args.split_fraction is not None:
        train_m, heldout_m = split_manifest(manifest, args.split_fraction, args.split_seed)
        write_manifest(out_dir / "manifest.train.tsv", train_m)
        write_manifest(out_dir / "manifest.heldout.tsv", heldout_m)
        _say(
            gcfg,
            f"wrote {len(manifest)} utterances to {out_dir} "
            f"(train {len(train_m)}, heldout {len(heldout_m)})",
        )
    else:
        _say(gcfg, f"wrote {len(manifest)} utterances to {out_dir}")


def _cmd_featurize(args, gcfg: GlobalConfig) -> None:
    if args.raw_rate is not None:
        audio = read_raw_pcm(args.in_path, args.raw_rate)
    else:
        audio = read_wav(args.in_path)
    feats = compute_mfcc(audio, FeatureConfig(), utt_id=Path(args.in_path).stem)
    if args.cmvn:
        feats = apply_cmvn(feats)
    if args.embed_dim is not None:
        emb = speaker_embedding(feats, dim=args.embed_dim, seed=args.embed_seed)
        feats = append_embedding(feats, emb)
    write_features(args.out_path, feats)
    _say(gcfg, f"wrote {feats.num_frames} frames x {feats.dims} dims to {args.out_path}")


def _infer_data_shape(manifests):
    """Feature dim and class count implied by the labelled data."""
    from .corpus import load_utterance

    input_dim = None
    num_classes = 0
    for manifest in manifests:
        if len(manifest) == 0:
            raise DataError("empty manifest")
        for entry in manifest.entries:
            utt = load_utterance(manifest, entry)
            if utt.frames is None:
                raise DataError(f"{entry.utt_id}: featurize audio corpora before training")
            if input_dim is None:
                input_dim = utt.frames.dims
            num_classes = max(num_classes, int(utt.labels.max()) + 1)
    return input_dim, max(num_classes, 2)


def _resolve_arch(arch: str, units, input_dim: int, num_classes: int):
    if arch.lower() in PRESET_NAMES:
        return make_preset(arch, units=units, input_dim=input_dim, num_classes=num_classes)
    spec = parse_network_spec(_read_text(arch))
    if spec.input_dim != input_dim:
        raise ConfigurationError(
            f"spec file input_dim {spec.input_dim} does not match corpus dim {input_dim}"
        )
    return spec


def _cmd_train(args, gcfg: GlobalConfig) -> None:
    cfg = parse_train_config(_read_text(args.config)) if args.config else TrainConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.max_epochs is not None:
        cfg = replace(cfg, max_epochs=args.max_epochs)
    train_manifest = read_manifest(args.corpus)
    heldout_manifest = read_manifest(args.heldout)
    input_dim, num_classes = _infer_data_shape([train_manifest, heldout_manifest])
    spec = _resolve_arch(args.arch, args.units, input_dim, num_classes)
    runner = greedy_layerwise_train if cfg.layerwise_schedule is not None else train
    model, report = runner(spec, cfg, train_manifest, heldout_manifest, threads=gcfg.threads)
    save_checkpoint(args.out_path, model.spec, model.params)
    if args.report:
        with open(args.report, "w") as fh:
            fh.write(format_convergence_report(report))
    last = report.history[-1]
    reached = report.updates_to_target if report.updates_to_target is not None else "not reached"
    _say(
        gcfg,
        f"trained {args.arch}: {last.updates} updates, heldout_acc={last.heldout_acc:.4f}, "
        f"heldout_loss={last.heldout_loss:.4f}, updates_to_target={reached}",
    )


def _cmd_eval(args, gcfg: GlobalConfig) -> None:
    spec, params = load_checkpoint(args.model)
    manifest = read_manifest(args.corpus)
    report = score_corpus(spec, params, manifest)
    text = format_eval_report(report)
    if args.out_path:
        with open(args.out_path, "w") as fh:
            fh.write(text)
    _say(
        gcfg,
        f"cer={report.cer:.4f} frame_acc={report.frame_accuracy:.4f} "
        f"S={report.substitutions} D={report.deletions} I={report.insertions} "
        f"ref_len={report.ref_length}",
    )


def desk_bench_config(target_acc: float = 0.9) -> TrainConfig:
    """Desk-scale defaults for the convergence benchmark."""
    return TrainConfig(
        learning_rate=0.005,
        momentum=0.9,
        batch_frames=256,
        max_epochs=10,
        target_metric="frame_acc",
        target_value=target_acc,
        evals_per_epoch=16,
        stop_at_target=True,
    )


def _cmd_bench(args, gcfg: GlobalConfig) -> None:
    manifest = read_manifest(Path(args.corpus) / "manifest.tsv")
    train_m, heldout_m = split_manifest(manifest, args.train_fraction, args.split_seed)
    input_dim, num_classes = _infer_data_shape([train_m, heldout_m])
    tdnn_spec = make_preset(
        "tdnn-b", units=args.units, input_dim=input_dim, num_classes=num_classes
    )
    if args.config:
        cfg = parse_train_config(_read_text(args.config))
        cfg = replace(cfg, target_metric="frame_acc", target_value=args.target_acc)
    else:
        cfg = desk_bench_config(args.target_acc)
    result = bench_convergence(
        tdnn_spec, cfg, train_m, heldout_m, seeds=range(args.seeds), threads=gcfg.threads
    )
    text = format_bench_report(result, cfg.target_metric, cfg.target_value)
    if args.out_path:
        with open(args.out_path, "w") as fh:
            fh.write(text)
    med_u = result.median_update_ratio
    med_w = result.median_wallclock_ratio
    _say(
        gcfg,
        "median update_ratio="
        + (f"{med_u:.4f}" if med_u is not None else "not_comparable")
        + " median wallclock_ratio="
        + (f"{med_w:.4f}" if med_w is not None else "not_comparable"),
    )


def _cmd_inspect(args, gcfg: GlobalConfig) -> None:
    names = [args.arch] if args.arch else list(PRESET_NAMES)
    for name in names:
        spec = make_preset(name, units=args.units, num_classes=args.classes)
        left, right = receptive_field(spec)
        plan = build_plan(spec, args.frames)
        print(
            f"arch={name} layers={spec.depth} units={spec.layers[0].units} "
            f"input_dim={spec.input_dim} classes={spec.num_classes} "
            f"left={left} right={right} params={param_count(spec)} "
            f"macs_{args.frames}f={flop_count(spec, plan)}"
        )


_COMMANDS = {
    "gen-corpus": _cmd_gen_corpus,
    "featurize": _cmd_featurize,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "bench-convergence": _cmd_bench,
    "inspect": _cmd_inspect,
}


def dispatch(argv) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"tdnnkit: error: {exc}", file=sys.stderr)
        return 1
    if args.version:
        print(
            f"tdnnkit {__version__} "
            f"(feature format v{FEATURE_FILE_VERSION}, checkpoint format v{CHECKPOINT_VERSION})"
        )
        return 0
    if args.command is None:
        parser.print_usage(sys.stderr)
        print("tdnnkit: error: a subcommand is required", file=sys.stderr)
        return 1
    gcfg = GlobalConfig(
        seed=getattr(args, "seed", None) or 0,
        threads=getattr(args, "threads", 1),
        log_level=args.log_level,
    )
    try:
        _COMMANDS[args.command](args, gcfg)
    except ToolkitError as exc:
        print(f"ERROR:{exc.category}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"ERROR:io: {exc}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
