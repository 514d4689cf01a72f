"""Report rendering: every entry point writes a delimited table and a figure.

Figures go through the Agg backend so reports render identically on
headless machines. Each function returns the paths it wrote, table first.
"""

import json
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .subtitles import AlignedClip, corpus_stats, render_stats_table

PathLike = Union[str, Path]


def _ensure_dir(out_dir: PathLike) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _save(fig, path: Path) -> None:
    fig.savefig(path, dpi=110, bbox_inches="tight")
    plt.close(fig)


def stats_report(clips: Sequence[Union[AlignedClip, dict]], out_dir: PathLike) -> List[Path]:
    """Corpus summary table plus a clip-duration histogram."""
    out = _ensure_dir(out_dir)
    stats = corpus_stats(clips)
    rows = [
        ("clip_count", f"{stats.clip_count}"),
        ("avg_clip_seconds", f"{stats.avg_clip_seconds:.4f}"),
        ("avg_sentence_words", f"{stats.avg_sentence_words:.4f}"),
        ("total_hours", f"{stats.total_hours:.6f}"),
    ]
    for cat in sorted(stats.category_counts):
        rows.append((f"clips[{cat}]", f"{stats.category_counts[cat]}"))
    table_path = out / "stats.tsv"
    table_path.write_text(
        "metric\tvalue\n" + "".join(f"{k}\t{v}\n" for k, v in rows), encoding="utf-8"
    )
    (out / "stats.txt").write_text(render_stats_table(stats) + "\n", encoding="utf-8")

    durations = []
    for clip in clips:
        if isinstance(clip, dict):
            durations.append(float(clip["end"]) - float(clip["start"]))
        else:
            durations.append(clip.duration)
    fig, ax = plt.subplots(figsize=(6, 4))
    if durations:
        ax.hist(durations, bins=min(30, max(5, len(durations) // 2)), color="#4878cf")
    ax.set_xlabel("clip duration (s)")
    ax.set_ylabel("clips")
    ax.set_title(f"{stats.clip_count} clips, mean {stats.avg_clip_seconds:.1f}s")
    fig_path = out / "stats.png"
    _save(fig, fig_path)
    return [table_path, fig_path]


def sweep_report(rows, out_dir: PathLike) -> List[Path]:
    """Frame-count table over neighbor settings plus a per-clip frame plot."""
    from .sweep import render_sweep_table

    out = _ensure_dir(out_dir)
    table_path = out / "sweep.tsv"
    table_path.write_text(render_sweep_table(rows), encoding="utf-8")

    ns = [r.n_neighbors for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(ns, [r.frames_per_clip for r in rows], "o-", label="frames per clip")
    ax.plot(ns, [r.hr_per_segment * r.segment_count for r in rows], "s--", label="high-res frames")
    ax.plot(ns, [r.lr_per_segment * r.segment_count for r in rows], "d--", label="low-res frames")
    ax.set_xlabel("neighbors per side")
    ax.set_ylabel("frames")
    ax.set_xticks(ns)
    ax.legend()
    ax.set_title("hybrid sampling cost")
    fig_path = out / "sweep.png"
    _save(fig, fig_path)
    return [table_path, fig_path]


def gradcheck_report(results, out_dir: PathLike) -> List[Path]:
    """Gradient check table plus a log-scale error bar chart."""
    from .gradsuite import render_grad_table

    out = _ensure_dir(out_dir)
    table_path = out / "gradcheck.tsv"
    table_path.write_text(render_grad_table(results), encoding="utf-8")

    names = [r.name for r in results]
    errors = [max(r.error, 1e-12) for r in results]
    colors = ["#4878cf" if r.passed else "#d1495b" for r in results]
    fig, ax = plt.subplots(figsize=(7, 0.28 * len(names) + 1.5))
    ax.barh(range(len(names)), errors, color=colors)
    ax.set_yticks(range(len(names)))
    ax.set_yticklabels(names, fontsize=7)
    ax.set_xscale("log")
    if results:
        ax.axvline(results[0].tolerance, color="#333333", linestyle=":", label="tolerance")
        ax.legend()
    ax.invert_yaxis()
    ax.set_xlabel("max relative error")
    ax.set_title("finite-difference agreement")
    fig_path = out / "gradcheck.png"
    _save(fig, fig_path)
    return [table_path, fig_path]


def training_report(metrics_path: PathLike, out_dir: PathLike) -> List[Path]:
    """Per-stage summary table plus the loss curve from a metrics stream."""
    out = _ensure_dir(out_dir)
    records = []
    with open(metrics_path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))

    stages = sorted({r["stage"] for r in records})
    lines = ["stage\tsteps\tfirst_loss\tfinal_loss\tmin_loss\tfinal_lr"]
    for stage in stages:
        rows = [r for r in records if r["stage"] == stage]
        losses = [r["loss"] for r in rows]
        lines.append(
            f"{stage}\t{len(rows)}\t{losses[0]:.6f}\t{losses[-1]:.6f}"
            f"\t{min(losses):.6f}\t{rows[-1]['lr']:.8f}"
        )
    table_path = out / "train_summary.tsv"
    table_path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    fig, ax = plt.subplots(figsize=(7, 4))
    for stage in stages:
        rows = [r for r in records if r["stage"] == stage]
        ax.plot([r["step"] for r in rows], [r["loss"] for r in rows], label=f"stage {stage}")
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    if stages:
        ax.legend()
    ax2 = ax.twinx()
    ax2.plot([r["step"] for r in records], [r["lr"] for r in records], color="#999999", lw=0.8)
    ax2.set_ylabel("learning rate", color="#999999")
    ax.set_title("training loss")
    fig_path = out / "loss_curve.png"
    _save(fig, fig_path)
    return [table_path, fig_path]


def retrieval_report(metrics: Dict[str, float], out_dir: PathLike) -> List[Path]:
    """Retrieval metric table plus a recall bar chart."""
    out = _ensure_dir(out_dir)
    table_path = out / "retrieval.tsv"
    table_path.write_text(
        "metric\tvalue\n" + "".join(f"{k}\t{metrics[k]:.6f}\n" for k in sorted(metrics)),
        encoding="utf-8",
    )

    recalls = [(k, v) for k, v in sorted(metrics.items()) if k.startswith("r")]
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.bar([k for k, _ in recalls], [v for _, v in recalls], color="#4878cf")
    ax.set_ylabel("recall (%)")
    ax.set_ylim(0, 100)
    title = "retrieval"
    if "medr" in metrics:
        title += f" (median rank {metrics['medr']:g})"
    ax.set_title(title)
    fig_path = out / "retrieval.png"
    _save(fig, fig_path)
    return [table_path, fig_path]


def synth_report(samples, out_dir: PathLike, max_samples: int = 8) -> List[Path]:
    """Sample table plus a frame montage of the synthetic clips."""
    out = _ensure_dir(out_dir)
    shown = list(samples)[:max_samples]
    lines = ["index\tclass_id\tcaption\tframes\theight\twidth"]
    for s in shown:
        n, _, h, w = s.frames.shape
        lines.append(f"{s.index}\t{s.class_id}\t{s.caption}\t{n}\t{h}\t{w}")
    table_path = out / "preview.tsv"
    table_path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    n_rows = max(1, len(shown))
    n_cols = min(4, shown[0].n_frames) if shown else 1
    fig, axes = plt.subplots(n_rows, n_cols, figsize=(2.2 * n_cols, 1.6 * n_rows), squeeze=False)
    for i in range(n_rows):
        for j in range(n_cols):
            ax = axes[i][j]
            ax.axis("off")
            if i < len(shown) and j < shown[i].n_frames:
                frame = np.clip(shown[i].frames[j].transpose(1, 2, 0), 0.0, 1.0)
                ax.imshow(frame, interpolation="nearest")
                if j == 0:
                    ax.set_title(shown[i].caption, fontsize=7, loc="left")
    fig_path = out / "preview.png"
    _save(fig, fig_path)
    return [table_path, fig_path]
