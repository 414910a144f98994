"""Manifest construction from timestamped ASR output and frame directories.

Turn boundaries ARE the ASR segment boundaries: one segment per original
utterance, so the dialogue round count T equals the ASR segment count.
Frame references are opaque path strings following the external
frame-dump naming convention "<video_id>/<ms_timestamp>.jpg"; this module
only lists directories, it never decodes media.
"""
from __future__ import annotations

import re
from pathlib import Path
from typing import Optional, Sequence

from .errors import (
    EmptyTranscript,
    LengthMismatch,
    NoFramesAvailable,
    SchemaError,
    ValidationError,
)
from .model import Character, Segment, VideoManifest, validate_manifest
from .serialize import decode_manifest, dump_json, encode_manifest, load_json

DEFAULT_SPEAKING_RATE_WPS = 2.5

_FRAME_NAME = re.compile(r"^(\d+)\.jpe?g$")


def load_manifest(path: Path) -> VideoManifest:
    """Read and validate a manifest file; invalid data never escapes."""
    doc = load_json(Path(path))
    if not isinstance(doc, dict):
        raise SchemaError("manifest file must hold a JSON object")
    manifest = decode_manifest(doc)
    violations = validate_manifest(manifest)
    if violations:
        raise ValidationError(violations)
    return manifest


def save_manifest(manifest: VideoManifest, path: Path) -> None:
    violations = validate_manifest(manifest)
    if violations:
        raise ValidationError(violations)
    dump_json(encode_manifest(manifest), Path(path))


def scan_frame_dir(frame_dir: Path) -> list[tuple[float, str]]:
    """All frames in the dump directory as (timestamp seconds, ref), sorted."""
    frames = []
    for entry in Path(frame_dir).iterdir():
        match = _FRAME_NAME.match(entry.name)
        if match:
            frames.append((int(match.group(1)) / 1000.0, str(entry)))
    frames.sort()
    return frames


def _synthetic_frames(video_id: str, start_s: float, end_s: float) -> list[str]:
    """Placeholder refs at ~1 fps for manifests built without a frame dump."""
    refs = []
    ms = int(start_s * 1000)
    end_ms = int(end_s * 1000)
    while ms < end_ms:
        refs.append(f"{video_id}/{ms}.jpg")
        ms += 1000
    return refs or [f"{video_id}/{int(start_s * 1000)}.jpg"]


def build_manifest(
    asr_segments: Sequence[tuple[float, float, str]],
    speaker_labels: Sequence[int],
    frame_dir: Optional[Path],
    video_id: str,
    duration_s: float,
    speaking_rate_wps: float = DEFAULT_SPEAKING_RATE_WPS,
) -> VideoManifest:
    """One manifest segment per ASR segment, roster from the speaker labels.

    Without a frame directory, synthetic per-second frame refs are emitted
    so downstream frame selection still has identifiers to hand to a
    scripted vision backend.
    """
    if len(asr_segments) != len(speaker_labels):
        raise LengthMismatch(
            f"{len(asr_segments)} ASR segments vs {len(speaker_labels)} speaker labels"
        )
    if not asr_segments:
        raise EmptyTranscript("ASR transcript contains no segments")

    distinct = sorted(set(speaker_labels))
    if distinct != list(range(1, len(distinct) + 1)):
        raise ValidationError(
            [f"speaker labels must be contiguous ids from 1, found {distinct}"]
        )
    roster = tuple(Character(i, f"speaker {i}") for i in distinct)

    frames = scan_frame_dir(frame_dir) if frame_dir is not None else None
    ordered = sorted(zip(asr_segments, speaker_labels), key=lambda pair: pair[0][0])

    segments = []
    violations = []
    for index, ((start_s, end_s, text), speaker_id) in enumerate(ordered, start=1):
        if frames is not None:
            refs = [ref for ts, ref in frames if start_s <= ts <= end_s]
            if not refs:
                violations.append(f"segment {index}: no frames in [{start_s}, {end_s}]")
        else:
            refs = _synthetic_frames(video_id, start_s, end_s)
        segments.append(
            Segment(
                index=index,
                start_s=start_s,
                end_s=end_s,
                speaker_id=speaker_id,
                frame_refs=tuple(refs),
                original_utterance=text,
            )
        )
    if violations:
        raise ValidationError(violations)

    if frames is not None:
        first_frame_ref = frames[0][1]
    else:
        first_frame_ref = segments[0].frame_refs[0]

    manifest = VideoManifest(
        video_id=video_id,
        duration_s=duration_s,
        roster=roster,
        segments=tuple(segments),
        first_frame_ref=first_frame_ref,
        metadata=(("speaking_rate_wps", str(speaking_rate_wps)),),
    )
    violations = validate_manifest(manifest)
    if violations:
        raise ValidationError(violations)
    return manifest


def select_frames(segment: Segment, max_frames: int) -> list[str]:
    """Uniformly sampled frame refs, always including the temporally middle one."""
    if max_frames < 1:
        raise ValueError("max_frames must be >= 1")
    refs = segment.frame_refs
    n = len(refs)
    if n == 0:
        raise NoFramesAvailable(f"segment {segment.index} has no frames")
    middle = (n - 1) // 2
    k = min(max_frames, n)
    if k == 1:
        return [refs[middle]]
    indices = [round(j * (n - 1) / (k - 1)) for j in range(k)]
    if middle not in indices:
        closest = min(range(k), key=lambda j: abs(indices[j] - middle))
        indices[closest] = middle
    unique = sorted(set(indices))
    return [refs[i] for i in unique]
