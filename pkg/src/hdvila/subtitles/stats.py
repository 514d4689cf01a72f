"""Corpus statistics over emitted clips and a summary-table renderer."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, Optional, Union

from .clips import AlignedClip


@dataclass
class CorpusStats:
    clip_count: int
    avg_clip_seconds: float
    avg_sentence_words: float
    total_hours: float
    category_counts: Dict[str, int] = field(default_factory=dict)
    empty: bool = False


def _as_record(clip: Union[AlignedClip, dict]) -> dict:
    if isinstance(clip, AlignedClip):
        return {
            "video_id": clip.video_id,
            "start": clip.start,
            "end": clip.end,
            "n_words": len(clip.sentence.tokens),
        }
    return clip


def corpus_stats(
    clips: Iterable[Union[AlignedClip, dict]],
    categories: Optional[Dict[str, str]] = None,
) -> CorpusStats:
    """Exact means over the clip stream; an empty stream sets ``empty``."""
    count = 0
    total_seconds = 0.0
    total_words = 0
    by_category: Dict[str, int] = {}
    for clip in clips:
        rec = _as_record(clip)
        count += 1
        total_seconds += rec["end"] - rec["start"]
        total_words += rec["n_words"]
        cat = categories.get(rec["video_id"], "uncategorized") if categories else "all"
        by_category[cat] = by_category.get(cat, 0) + 1
    if count == 0:
        return CorpusStats(0, 0.0, 0.0, 0.0, {}, empty=True)
    return CorpusStats(
        clip_count=count,
        avg_clip_seconds=total_seconds / count,
        avg_sentence_words=total_words / count,
        total_hours=total_seconds / 3600.0,
        category_counts=by_category,
    )


def render_stats_table(stats: CorpusStats) -> str:
    """Fixed three-column summary: clip count, mean duration, mean words."""
    header = f"{'#Video clips':>14}  {'Avg len(sec)':>12}  {'Sent len':>8}"
    row = (
        f"{stats.clip_count:>14,}  {stats.avg_clip_seconds:>12.1f}  "
        f"{stats.avg_sentence_words:>8.1f}"
    )
    lines = [header, row]
    if stats.empty:
        lines.append("(empty clip stream)")
    if stats.category_counts and set(stats.category_counts) != {"all"}:
        lines.append("")
        for cat in sorted(stats.category_counts):
            lines.append(f"{cat}: {stats.category_counts[cat]:,}")
    return "\n".join(lines)
