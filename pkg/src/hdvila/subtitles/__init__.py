"""Subtitle ingestion: parse cue files, segment sentences, align, emit clips."""

from typing import List, Optional, Sequence

from .cues import Cue, SubtitleError, format_srt, format_webvtt, normalize_cues, parse_srt, parse_webvtt
from .words import TimedWord, normalize_token, words_with_times
from .sentences import Punctuator, Sentence, rule_punctuator, segment_sentences
from .align import dtw_align, dtw_cost, dtw_cost_many
from .clips import AlignedClip, clip_to_json, emit_clips, read_clips_jsonl, write_clips_jsonl
from .stats import CorpusStats, corpus_stats, render_stats_table

__all__ = [
    "AlignedClip",
    "CorpusStats",
    "Cue",
    "Punctuator",
    "Sentence",
    "SubtitleError",
    "TimedWord",
    "align_subtitles",
    "clip_to_json",
    "corpus_stats",
    "dtw_align",
    "dtw_cost",
    "dtw_cost_many",
    "emit_clips",
    "format_srt",
    "format_webvtt",
    "normalize_cues",
    "normalize_token",
    "parse_srt",
    "parse_webvtt",
    "read_clips_jsonl",
    "render_stats_table",
    "rule_punctuator",
    "segment_sentences",
    "words_with_times",
    "write_clips_jsonl",
]


def align_subtitles(
    cues: Sequence[Cue],
    video_id: str,
    punctuator: Optional[Punctuator] = None,
    min_duration: float = 1.0,
) -> List[AlignedClip]:
    """Full pipeline for one file: cues -> sentences -> spans -> clips."""
    cues = normalize_cues(cues)
    if not cues:
        return []
    transcript = " ".join(c.text for c in cues if c.text.strip())
    sentences = segment_sentences(transcript, punctuator=punctuator)
    if not sentences:
        return []
    timed = words_with_times(cues)
    if not timed:
        return []
    spans, _ = dtw_align(sentences, timed)
    return emit_clips(zip(spans, sentences), video_id, min_duration=min_duration)
