"""Clip emission from aligned sentence spans, plus the JSONL exchange format."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Sequence, Tuple, Union

from .sentences import Sentence


@dataclass(frozen=True)
class AlignedClip:
    """One video clip paired with the sentence spoken over it."""

    start: float
    end: float
    sentence: Sentence
    video_id: str

    @property
    def duration(self) -> float:
        return self.end - self.start

    @property
    def text(self) -> str:
        return " ".join(self.sentence.tokens)


def _merge_sentences(a: Sentence, b: Sentence) -> Sentence:
    span = (min(a.source_span[0], b.source_span[0]), max(a.source_span[1], b.source_span[1]))
    return Sentence(a.tokens + b.tokens, span)


def emit_clips(
    aligned: Iterable[Tuple[Tuple[float, float], Sentence]],
    video_id: str,
    min_duration: float = 1.0,
) -> List[AlignedClip]:
    """One clip per sentence; clips shorter than ``min_duration`` merge forward.

    A short tail with no following sentence merges backward into the last
    emitted clip; if nothing was emitted and the tail still has positive
    duration it is emitted as-is, otherwise dropped.
    """
    clips: List[AlignedClip] = []
    pend_start = None
    pend_end = None
    pend_sentence = None
    for (start, end), sentence in aligned:
        if pend_sentence is not None:
            start = pend_start
            sentence = _merge_sentences(pend_sentence, sentence)
        if end - start < min_duration:
            pend_start, pend_end, pend_sentence = start, end, sentence
            continue
        clips.append(AlignedClip(start, end, sentence, video_id))
        pend_start = pend_end = pend_sentence = None
    if pend_sentence is not None:
        if clips:
            last = clips[-1]
            clips[-1] = AlignedClip(
                last.start,
                max(last.end, pend_end),
                _merge_sentences(last.sentence, pend_sentence),
                video_id,
            )
        elif pend_end > pend_start:
            clips.append(AlignedClip(pend_start, pend_end, pend_sentence, video_id))
    return clips


def clip_to_json(clip: Union[AlignedClip, dict]) -> str:
    """Serialize one clip; floats carry exactly 3 decimal places."""
    if isinstance(clip, AlignedClip):
        record = {
            "video_id": clip.video_id,
            "start": clip.start,
            "end": clip.end,
            "text": clip.text,
            "n_words": len(clip.sentence.tokens),
        }
    else:
        record = clip
    return (
        "{"
        f'"video_id": {json.dumps(record["video_id"])}, '
        f'"start": {record["start"]:.3f}, '
        f'"end": {record["end"]:.3f}, '
        f'"text": {json.dumps(record["text"])}, '
        f'"n_words": {record["n_words"]}'
        "}"
    )


def write_clips_jsonl(clips: Iterable[Union[AlignedClip, dict]], path: Union[str, Path]) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for clip in clips:
            fh.write(clip_to_json(clip) + "\n")
            count += 1
    return count


def read_clips_jsonl(path: Union[str, Path]) -> List[dict]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records
