"""Subtitle cue model plus SRT/WebVTT parsing and serialization."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import List, Sequence, Union


class SubtitleError(ValueError):
    """Malformed subtitle input; the message names the offending line."""


@dataclass(frozen=True)
class Cue:
    """One timed caption: ``start``/``end`` in seconds, raw display text."""

    start: float
    end: float
    text: str


_TAG = re.compile(r"<[^>]*>")
_SRT_TIME = re.compile(r"^(\d{2,}):([0-5]\d):([0-5]\d),(\d{3})$")
_VTT_TIME = re.compile(r"^(?:(\d{2,}):)?([0-5]\d):([0-5]\d)\.(\d{3})$")


def _to_text(data: Union[bytes, str]) -> str:
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return data.lstrip("﻿")


def _parse_time(token: str, pattern: re.Pattern, line_no: int) -> float:
    m = pattern.match(token)
    if m is None:
        raise SubtitleError(f"line {line_no}: malformed timestamp {token!r}")
    hours = int(m.group(1)) if m.group(1) is not None else 0
    return hours * 3600.0 + int(m.group(2)) * 60.0 + int(m.group(3)) + int(m.group(4)) / 1000.0


def _clean_text(lines: Sequence[str]) -> str:
    joined = " ".join(_TAG.sub("", line).strip() for line in lines)
    return " ".join(joined.split())


def _finish_cue(start: float, end: float, lines: Sequence[str], line_no: int, out: List[Cue]) -> None:
    if start >= end:
        raise SubtitleError(f"line {line_no}: cue start {start} is not before end {end}")
    if out and start < out[-1].start:
        raise SubtitleError(f"line {line_no}: cue out of order (starts at {start}s)")
    out.append(Cue(start, end, _clean_text(lines)))


def parse_srt(data: Union[bytes, str]) -> List[Cue]:
    """Parse SRT text: index line, ``HH:MM:SS,mmm --> HH:MM:SS,mmm``, text."""
    text = _to_text(data)
    cues: List[Cue] = []
    block: List[tuple] = []  # (line_no, line)
    for line_no, raw in enumerate([*text.splitlines(), ""], start=1):
        line = raw.strip()
        if line:
            block.append((line_no, line))
            continue
        if not block:
            continue
        idx = 0
        if "-->" not in block[0][1]:
            idx = 1  # numeric index line
        if idx >= len(block) or "-->" not in block[idx][1]:
            raise SubtitleError(f"line {block[0][0]}: expected a timing line in cue block")
        timing_no, timing = block[idx]
        left, _, right = timing.partition("-->")
        start = _parse_time(left.strip(), _SRT_TIME, timing_no)
        end = _parse_time(right.strip().split()[0] if right.strip() else "", _SRT_TIME, timing_no)
        _finish_cue(start, end, [l for _, l in block[idx + 1 :]], timing_no, cues)
        block = []
    return cues


def parse_webvtt(data: Union[bytes, str]) -> List[Cue]:
    """Parse WebVTT text; NOTE/STYLE/REGION blocks are skipped, cue settings ignored."""
    text = _to_text(data)
    lines = text.splitlines()
    if not lines or not lines[0].strip().startswith("WEBVTT"):
        raise SubtitleError("line 1: missing WEBVTT header")
    cues: List[Cue] = []
    block: List[tuple] = []
    for line_no, raw in enumerate([*lines[1:], ""], start=2):
        line = raw.strip()
        if line:
            block.append((line_no, line))
            continue
        if not block:
            continue
        first = block[0][1]
        if first.startswith(("NOTE", "STYLE", "REGION")):
            block = []
            continue
        idx = 0
        if "-->" not in first:
            idx = 1  # optional cue identifier line
        if idx >= len(block) or "-->" not in block[idx][1]:
            raise SubtitleError(f"line {block[0][0]}: expected a timing line in cue block")
        timing_no, timing = block[idx]
        left, _, right = timing.partition("-->")
        start = _parse_time(left.strip(), _VTT_TIME, timing_no)
        end_token = right.strip().split()[0] if right.strip() else ""
        end = _parse_time(end_token, _VTT_TIME, timing_no)
        _finish_cue(start, end, [l for _, l in block[idx + 1 :]], timing_no, cues)
        block = []
    return cues


def _format_time(seconds: float, sep: str) -> str:
    ms = round(seconds * 1000)
    h, rem = divmod(ms, 3_600_000)
    m, rem = divmod(rem, 60_000)
    s, ms = divmod(rem, 1000)
    return f"{h:02d}:{m:02d}:{s:02d}{sep}{ms:03d}"


def format_srt(cues: Sequence[Cue]) -> str:
    blocks = [
        f"{i}\n{_format_time(c.start, ',')} --> {_format_time(c.end, ',')}\n{c.text}\n"
        for i, c in enumerate(cues, start=1)
    ]
    return "\n".join(blocks)


def format_webvtt(cues: Sequence[Cue]) -> str:
    blocks = [
        f"{_format_time(c.start, '.')} --> {_format_time(c.end, '.')}\n{c.text}\n" for c in cues
    ]
    return "WEBVTT\n\n" + "\n".join(blocks)


def normalize_cues(cues: Sequence[Cue]) -> List[Cue]:
    """Trim overlaps so consecutive cues never intersect; drop cues emptied by the trim."""
    out: List[Cue] = []
    for i, cue in enumerate(cues):
        end = cue.end
        if i + 1 < len(cues):
            end = min(end, cues[i + 1].start)
        if end > cue.start:
            out.append(Cue(cue.start, end, cue.text))
    return out
