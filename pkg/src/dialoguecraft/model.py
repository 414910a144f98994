"""Core value objects for theme-conditioned video dialogue generation.

Every type here is an immutable (frozen) dataclass so instances can be
shared freely across concurrent tasks; updates always build new copies.
Round indices are 1-based; round 0 denotes the pre-dialogue initial state.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

METRIC_IDS = ("TR", "GQ", "LC", "CD", "VC", "SC")

MEMORY_ORIGINAL = "original"
MEMORY_GENERATED = "generated"

VERDICT_ACCEPT = "accept"
VERDICT_REVISE = "revise"


@dataclass(frozen=True)
class Theme:
    """A user-specified theme the new dialogue must revolve around."""

    text: str

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("theme text must be nonempty")


@dataclass(frozen=True)
class Character:
    """One speaking character in the video roster."""

    id: int
    label: str
    visual_descriptor: Optional[str] = None


@dataclass(frozen=True)
class Segment:
    """A time slice of the video owned by one speaker turn.

    Invariants (ordering, bounds, roster membership) are checked by
    validate_manifest rather than here, so malformed segments remain
    constructible for validation and testing.
    """

    index: int
    start_s: float
    end_s: float
    speaker_id: int
    frame_refs: tuple[str, ...] = ()
    original_utterance: str = ""


@dataclass(frozen=True)
class VideoManifest:
    """The sliced video: roster, per-turn segments, and frame references."""

    video_id: str
    duration_s: float
    roster: tuple[Character, ...]
    segments: tuple[Segment, ...]
    first_frame_ref: str
    metadata: tuple[tuple[str, str], ...] = ()

    @property
    def role_count(self) -> int:
        return len(self.roster)

    @property
    def turn_count(self) -> int:
        return len(self.segments)

    def metadata_dict(self) -> dict[str, str]:
        return dict(self.metadata)


@dataclass(frozen=True)
class Plot:
    """The freshly created storyline the dialogue follows."""

    summary: str
    theme: Theme

    def __post_init__(self):
        if not self.summary.strip():
            raise ValueError("plot summary must be nonempty")


@dataclass(frozen=True)
class Role:
    """The role assigned to one character for the new dialogue."""

    character_id: int
    name: str
    description: str


@dataclass(frozen=True)
class MemoryEntry:
    """One remembered utterance: either original dialogue or a generated turn."""

    kind: str
    round: int
    speaker_id: int
    sentence: str

    def __post_init__(self):
        if self.kind not in (MEMORY_ORIGINAL, MEMORY_GENERATED):
            raise ValueError(f"unknown memory kind {self.kind!r}")
        if self.kind == MEMORY_GENERATED and self.round < 1:
            raise ValueError("generated entries require round >= 1")
        if self.kind == MEMORY_ORIGINAL and self.round != 0:
            raise ValueError("original entries carry round 0")


@dataclass(frozen=True)
class AgentState:
    """A dialogue participant's role plus its accumulated memory."""

    role: Role
    memory: tuple[MemoryEntry, ...] = ()
    round: int = 0

    def __post_init__(self):
        generated = [e.round for e in self.memory if e.kind == MEMORY_GENERATED]
        if generated != list(range(1, len(generated) + 1)):
            raise ValueError("generated memory rounds must be exactly 1..t in order")
        if generated and generated[-1] > self.round:
            raise ValueError("memory cannot run ahead of the agent's round")

    def with_entry(self, entry: MemoryEntry) -> "AgentState":
        """Return a copy advanced to the entry's round with the entry appended."""
        return replace(self, memory=self.memory + (entry,), round=entry.round)

    def generated_rounds(self) -> set[int]:
        return {e.round for e in self.memory if e.kind == MEMORY_GENERATED}


@dataclass(frozen=True)
class Perception:
    """Behavior and emotion text extracted from a turn's frames."""

    behavior: str
    emotion: str
    frame_refs_used: tuple[str, ...] = ()

    @property
    def degraded(self) -> bool:
        return not self.behavior and not self.emotion


@dataclass(frozen=True)
class Suggestion:
    """The coordinator's verdict on a draft: accept, or revise with critique."""

    verdict: str
    text: str
    checks: tuple[tuple[str, bool], ...]

    def __post_init__(self):
        if self.verdict not in (VERDICT_ACCEPT, VERDICT_REVISE):
            raise ValueError(f"unknown verdict {self.verdict!r}")
        if self.verdict == VERDICT_REVISE and not self.text.strip():
            raise ValueError("revise verdict requires suggestion text")
        if self.verdict == VERDICT_ACCEPT:
            if self.text:
                raise ValueError("accept verdict carries no suggestion text")
            if not all(ok for _, ok in self.checks):
                raise ValueError("accept verdict requires all checks to pass")

    def checks_dict(self) -> dict[str, bool]:
        return dict(self.checks)


CHECK_NAMES = ("theme_contextual", "pairwise_continuity", "global_coherence", "length_fits")


def make_checks(theme_contextual: bool, pairwise_continuity: bool,
                global_coherence: bool, length_fits: bool) -> tuple[tuple[str, bool], ...]:
    values = (theme_contextual, pairwise_continuity, global_coherence, length_fits)
    return tuple(zip(CHECK_NAMES, values))


@dataclass(frozen=True)
class DialogueTurn:
    """One generated sentence, with its perception and revision history."""

    round: int
    speaker_id: int
    sentence: str
    perception: Perception
    revisions: tuple[tuple[str, Suggestion], ...] = ()
    iterations_used: int = 1

    def __post_init__(self):
        if self.iterations_used < 1:
            raise ValueError("iterations_used must be >= 1")


@dataclass(frozen=True)
class Transcript:
    """The full generated dialogue for one manifest."""

    theme: Theme
    plot: Plot
    roles: tuple[Role, ...]
    turns: tuple[DialogueTurn, ...]
    manifest_ref: str
    method: str = "pipeline"


@dataclass(frozen=True)
class MetricScore:
    """A single judge verdict: integer rubric score plus comment."""

    metric_id: str
    score: int
    comment: str

    def __post_init__(self):
        if self.metric_id not in METRIC_IDS:
            raise ValueError(f"unknown metric {self.metric_id!r}")
        if self.score not in (1, 2, 3, 4, 5):
            raise ValueError(f"score {self.score} outside 1..5")
        if not self.comment.strip():
            raise ValueError("comment must be nonempty")


@dataclass(frozen=True)
class EvalReport:
    """Per-metric judge scores for one transcript.

    average is present only when all six metrics succeeded; failed metric
    ids are recorded in excluded and never imputed.
    """

    transcript_ref: str
    per_metric: tuple[tuple[str, MetricScore], ...]
    average: Optional[float] = None
    excluded: tuple[str, ...] = ()

    def __post_init__(self):
        if self.average is not None:
            scores = [s.score for _, s in self.per_metric]
            if not scores or not math.isclose(
                self.average, sum(scores) / len(scores), abs_tol=1e-9
            ):
                raise ValueError("average must equal the mean of the scores")

    def per_metric_dict(self) -> dict[str, MetricScore]:
        return dict(self.per_metric)

    @classmethod
    def from_scores(cls, transcript_ref: str, scores: dict[str, MetricScore],
                    excluded: tuple[str, ...] = ()) -> "EvalReport":
        ordered = tuple((m, scores[m]) for m in METRIC_IDS if m in scores)
        average = None
        if not excluded and len(ordered) == len(METRIC_IDS):
            average = sum(s.score for _, s in ordered) / len(ordered)
        return cls(transcript_ref, ordered, average, tuple(excluded))


def validate_manifest(manifest: VideoManifest) -> list[str]:
    """Check all manifest invariants; violations are returned, never raised."""
    violations: list[str] = []
    if manifest.role_count < 1:
        violations.append("roster: must contain at least one character")
    ids = [c.id for c in manifest.roster]
    if sorted(ids) != list(range(1, len(ids) + 1)):
        violations.append("roster: character ids must be unique and contiguous from 1")
    if manifest.turn_count < 1:
        violations.append("segments: must contain at least one segment")
    if not manifest.first_frame_ref:
        violations.append("first_frame_ref: must be present")

    known_ids = set(ids)
    prev_end = None
    for pos, seg in enumerate(manifest.segments, start=1):
        if seg.index != pos:
            violations.append(f"segment {pos}: index {seg.index} out of order")
        if not seg.start_s < seg.end_s:
            violations.append(f"segment {pos}: start_s must be < end_s")
        if seg.end_s > manifest.duration_s:
            violations.append(f"segment {pos}: end_s exceeds manifest duration")
        if prev_end is not None and seg.start_s < prev_end:
            violations.append(f"segment {pos}: overlaps previous segment in time")
        if seg.speaker_id not in known_ids:
            violations.append(f"segment {pos}: speaker_id {seg.speaker_id} not in roster")
        prev_end = seg.end_s
    return violations


def manifest_stats(manifest: VideoManifest) -> dict[str, float]:
    """Roster size, turn count, and duration; used for corpus sanity checks."""
    return {
        "roles": manifest.role_count,
        "turns": manifest.turn_count,
        "duration_s": manifest.duration_s,
    }
