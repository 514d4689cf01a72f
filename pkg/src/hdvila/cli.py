"""Command-line surface for alignment, training, evaluation, and reports.

Thread capping has to happen before the numeric stack loads, so this
module imports only the standard library (and the pure-stdlib config
parser) at the top; everything heavy is imported inside the command
handlers after the environment is set.

Exit codes: 0 success, 2 configuration or input error, 3 numeric failure.
"""

import argparse
import os
import sys
from pathlib import Path
from typing import List, Optional

from .config import ConfigError, load_config

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS")


def configure_threads(value: Optional[str] = None) -> int:
    """Apply HDVILA_THREADS to the BLAS thread knobs; 0 leaves them alone.

    Must run before numpy is first imported anywhere in the process.
    """
    raw = os.environ.get("HDVILA_THREADS", "0") if value is None else value
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"HDVILA_THREADS must be an integer, got {raw!r}")
    if n < 0:
        raise ConfigError(f"HDVILA_THREADS must be >= 0, got {n}")
    if n > 0:
        for var in _THREAD_VARS:
            os.environ[var] = str(n)
    return n


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hdvila",
        description="Hybrid-resolution video-language pretraining toolkit.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="run configuration INI file")
        p.add_argument("--seed", type=int, default=None, help="override the configured seed")

    p = sub.add_parser("align", help="parse subtitle files and emit aligned clips")
    common(p)
    p.add_argument("--in", dest="in_dir", default=None, help="subtitle directory (default: config)")
    p.add_argument("--format", choices=("srt", "vtt", "auto"), default="auto")
    p.add_argument("--out", default=None, help="output clips JSONL (default: config)")

    p = sub.add_parser("stats", help="summarize a clips JSONL file")
    common(p)
    p.add_argument("--in", dest="in_path", default=None, help="clips JSONL (default: config)")

    p = sub.add_parser("train", help="run the two-stage training loop")
    common(p)
    p.add_argument("--resume", default=None, help="checkpoint to continue from")

    p = sub.add_parser("eval-retrieval", help="evaluate retrieval from a checkpoint")
    common(p)
    p.add_argument("--checkpoint", required=True, help="checkpoint file to evaluate")

    p = sub.add_parser("grad-check", help="finite-difference check of every op and the full forward")
    common(p, config_required=False)

    p = sub.add_parser("synth-preview", help="render a preview of the synthetic data stream")
    common(p)
    return parser


def _load(args) -> "RunConfig":
    return load_config(args.config, seed=args.seed)


def _cmd_align(args) -> int:
    from .subtitles import align_subtitles, parse_srt, parse_webvtt, write_clips_jsonl

    config = _load(args)
    in_dir = Path(args.in_dir) if args.in_dir else Path(config.subtitles_dir)
    out_path = Path(args.out) if args.out else Path(config.clips_path)
    if not in_dir.is_dir():
        raise ConfigError(f"subtitle directory not found: {in_dir}")
    suffixes = {"srt": (".srt",), "vtt": (".vtt",), "auto": (".srt", ".vtt")}[args.format]
    clips = []
    files = sorted(p for p in in_dir.iterdir() if p.suffix.lower() in suffixes)
    if not files:
        raise ConfigError(f"no {'/'.join(suffixes)} files in {in_dir}")
    for path in files:
        text = path.read_text(encoding="utf-8")
        cues = parse_srt(text) if path.suffix.lower() == ".srt" else parse_webvtt(text)
        clips.extend(align_subtitles(cues, video_id=path.stem))
    out_path.parent.mkdir(parents=True, exist_ok=True)
    count = write_clips_jsonl(clips, out_path)
    print(f"{count} clips from {len(files)} files -> {out_path}")
    return EXIT_OK


def _cmd_stats(args) -> int:
    from .report import stats_report
    from .subtitles import corpus_stats, read_clips_jsonl, render_stats_table

    config = _load(args)
    in_path = Path(args.in_path) if args.in_path else Path(config.clips_path)
    if not in_path.is_file():
        raise ConfigError(f"clips file not found: {in_path}")
    clips = read_clips_jsonl(in_path)
    print(render_stats_table(corpus_stats(clips)))
    for path in stats_report(clips, Path(config.out_dir) / "report"):
        print(f"wrote {path}")
    return EXIT_OK


def _cmd_train(args) -> int:
    from .report import training_report
    from .training import train

    config = _load(args)
    result = train(config, resume=args.resume)
    print(f"{result.steps} steps, {len(result.checkpoints)} checkpoints")
    print(f"metrics -> {result.metrics_path}")
    print(f"last checkpoint -> {result.last_checkpoint}")
    for path in training_report(result.metrics_path, Path(config.out_dir) / "report"):
        print(f"wrote {path}")
    return EXIT_OK


def _cmd_eval_retrieval(args) -> int:
    from .metrics import metrics_json
    from .report import retrieval_report
    from .training import eval_retrieval, load_bundle

    config = _load(args)
    bundle, _ = load_bundle(config, args.checkpoint)
    metrics = eval_retrieval(config, bundle)
    print(metrics_json(metrics))
    for path in retrieval_report(metrics, Path(config.out_dir) / "report"):
        print(f"wrote {path}")
    return EXIT_OK


def _cmd_grad_check(args) -> int:
    from .gradsuite import render_grad_table, run_grad_suite, toy_grad_config
    from .report import gradcheck_report

    config = _load(args) if args.config else toy_grad_config()
    results = run_grad_suite(config)
    table = render_grad_table(results)
    print(table, end="")
    out_dir = Path(config.out_dir) / "report"
    for path in gradcheck_report(results, out_dir):
        print(f"wrote {path}")
    if not all(r.passed for r in results):
        return EXIT_NUMERIC
    return EXIT_OK


def _cmd_synth_preview(args) -> int:
    import numpy as np

    from .report import synth_report
    from .synthetic import generate_synthetic

    config = _load(args)
    rng = np.random.default_rng(np.random.SeedSequence((config.seed, 1)))
    count = min(8, config.train_samples)
    samples = generate_synthetic(
        rng, count, config.n_classes, config.frames_per_segment, config.lr_height, config.lr_width
    )
    for sample in samples:
        print(f"{sample.index}\t{sample.class_id}\t{sample.caption}")
    for path in synth_report(samples, Path(config.out_dir) / "report"):
        print(f"wrote {path}")
    return EXIT_OK


_COMMANDS = {
    "align": _cmd_align,
    "stats": _cmd_stats,
    "train": _cmd_train,
    "eval-retrieval": _cmd_eval_retrieval,
    "grad-check": _cmd_grad_check,
    "synth-preview": _cmd_synth_preview,
}


def main(argv: Optional[List[str]] = None) -> int:
    try:
        configure_threads()
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    args = _build_parser().parse_args(argv)

    from .checkpoint import CheckpointError
    from .subtitles import SubtitleError

    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, CheckpointError, SubtitleError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ArithmeticError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
