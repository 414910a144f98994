"""The three-stage dialogue generation pipeline.

Stage 1 creates a plot and assigns each character a fresh role from the
theme, the opening frame, and the original dialogue. Stage 2 predicts
each turn conditioned on the speaker's perceived behavior and emotion.
Stage 3 critiques every draft and requests regeneration with concrete
suggestions, bounded by the iteration budget. Accepted turns are
broadcast into every agent's memory.
"""
from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .backends import (
    CallLog,
    ChatBackend,
    ChatMessage,
    ChatRequest,
    EmbeddingBackend,
    VisionBackend,
    VisionRequest,
    render_prompt,
)
from .errors import (
    AuthError,
    BackendError,
    EmptyGeneration,
    MalformedResponseError,
    ParseError,
    RoundMismatch,
    ValidationError,
)
from .ingest import DEFAULT_SPEAKING_RATE_WPS, select_frames
from .model import (
    MEMORY_GENERATED,
    MEMORY_ORIGINAL,
    VERDICT_ACCEPT,
    VERDICT_REVISE,
    AgentState,
    Character,
    DialogueTurn,
    MemoryEntry,
    Perception,
    Plot,
    Role,
    Segment,
    Suggestion,
    Theme,
    Transcript,
    VideoManifest,
    make_checks,
    validate_manifest,
)
from .prompts import load_template

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PipelineConfig:
    max_iterations: int = 3
    generation_temperature: float = 0.7
    max_frames_per_turn: int = 8
    memory_token_budget: int = 2048
    speaking_rate_wps: float = DEFAULT_SPEAKING_RATE_WPS

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.generation_temperature < 0:
            raise ValueError("generation_temperature must be >= 0")
        if self.max_frames_per_turn < 1:
            raise ValueError("max_frames_per_turn must be >= 1")
        if self.memory_token_budget < 1:
            raise ValueError("memory_token_budget must be >= 1")
        if self.speaking_rate_wps <= 0:
            raise ValueError("speaking_rate_wps must be positive")


@dataclass
class BackendSuite:
    """All model clients for one run, sharing a single call log."""

    llm: ChatBackend
    vision: VisionBackend
    embedding: Optional[EmbeddingBackend] = None
    call_log: CallLog = field(default_factory=CallLog)

    def __post_init__(self):
        self.llm.call_log = self.call_log
        self.vision.call_log = self.call_log
        if self.embedding is not None:
            self.embedding.call_log = self.call_log


# -- shared response parsing -------------------------------------------------

_FENCE = re.compile(r"^```[a-z]*\s*|\s*```$", re.MULTILINE)


def parse_json_object(raw: str) -> dict:
    """Extract the first JSON object from a model response, fences stripped."""
    text = _FENCE.sub("", raw).strip()
    start = text.find("{")
    if start < 0:
        raise ParseError("no JSON object in response")
    decoder = json.JSONDecoder()
    try:
        obj, _ = decoder.raw_decode(text[start:])
    except ValueError as exc:
        raise ParseError(f"invalid JSON in response: {exc}") from exc
    if not isinstance(obj, dict):
        raise ParseError("response JSON is not an object")
    return obj


def word_count(text: str) -> int:
    return len(text.split())


def length_budget(segment: Segment, speaking_rate_wps: float) -> int:
    """Max words that fit the segment's time span; never below 3."""
    return max(3, math.ceil(speaking_rate_wps * (segment.end_s - segment.start_s)))


# -- stage 1 -----------------------------------------------------------------

def describe_first_frame(manifest: VideoManifest, vision_backend: VisionBackend) -> str:
    prompt = render_prompt(load_template("first_frame"), {})
    description = vision_backend.perceive(
        VisionRequest(frame_refs=(manifest.first_frame_ref,), prompt=prompt)
    )
    if not description.strip():
        raise MalformedResponseError("empty first-frame description")
    return description


def _format_original_dialogue(entries: Sequence[MemoryEntry]) -> str:
    if not entries:
        return "(none)"
    return "\n".join(f"speaker {e.speaker_id}: {e.sentence}" for e in entries)


def generate_plot_and_roles(
    theme: Theme,
    first_frame_description: str,
    original_dialogue: Sequence[MemoryEntry],
    roster: Sequence[Character],
    llm_backend: ChatBackend,
    temperature: float = 0.7,
) -> tuple[Plot, tuple[Role, ...]]:
    """One structured model call assigning a plot and exactly one role per character."""
    if not roster:
        raise ValueError("roster must be nonempty")
    prompt = render_prompt(
        load_template("plot_roles"),
        {
            "theme": theme.text,
            "frame_description": first_frame_description,
            "original_dialogue": _format_original_dialogue(original_dialogue),
            "characters": "\n".join(f"- id {c.id}: {c.label}" for c in roster),
        },
    )
    request = ChatRequest(messages=(ChatMessage("user", prompt),), temperature=temperature)

    last_error: Optional[ParseError] = None
    for attempt in range(2):
        raw = llm_backend.chat(request)
        try:
            return _parse_plot_roles(raw, theme, roster)
        except ParseError as exc:
            last_error = exc
            request = ChatRequest(
                messages=request.messages
                + (
                    ChatMessage("assistant", raw),
                    ChatMessage(
                        "user",
                        f"That response was not usable ({exc}). "
                        "Reply again with only the JSON object in the required shape.",
                    ),
                ),
                temperature=temperature,
            )
    raise last_error  # type: ignore[misc]


def _parse_plot_roles(raw: str, theme: Theme, roster: Sequence[Character]):
    doc = parse_json_object(raw)
    summary = doc.get("plot")
    if not isinstance(summary, str) or not summary.strip():
        raise ParseError("missing or empty plot field")
    roles_doc = doc.get("roles")
    if not isinstance(roles_doc, list):
        raise ParseError("missing roles list")
    roles = {}
    for item in roles_doc:
        if not isinstance(item, dict):
            raise ParseError("role entries must be objects")
        try:
            cid = int(item["character_id"])
            role = Role(cid, str(item["name"]), str(item.get("description", "")))
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad role entry: {exc}") from exc
        if cid in roles:
            raise ParseError(f"duplicate role for character {cid}")
        roles[cid] = role
    expected = {c.id for c in roster}
    if set(roles) != expected:
        raise ParseError(
            f"roles cover characters {sorted(roles)}, expected {sorted(expected)}"
        )
    ordered = tuple(roles[c.id] for c in roster)
    return Plot(summary.strip(), theme), ordered


def init_agents(
    plot: Plot,
    roles: Sequence[Role],
    original_dialogue: Sequence[MemoryEntry],
) -> list[AgentState]:
    """Round-0 states: original dialogue in memory, no generated entries yet."""
    original = tuple(e for e in original_dialogue if e.kind == MEMORY_ORIGINAL)
    return [AgentState(role=role, memory=original, round=0) for role in roles]


# -- stage 2 -----------------------------------------------------------------

def perceive_turn(
    segment: Segment,
    speaker: Character,
    vision_backend: VisionBackend,
    config: PipelineConfig,
) -> Perception:
    """Two granularity-specific vision calls over the segment's sampled frames.

    On vision failure the turn proceeds degraded (empty strings) rather
    than aborting the run; authentication failures still propagate.
    """
    frames = tuple(select_frames(segment, config.max_frames_per_turn))
    label = speaker.visual_descriptor or speaker.label
    try:
        behavior = vision_backend.perceive(
            VisionRequest(
                frame_refs=frames,
                prompt=render_prompt(
                    load_template("perceive_behavior"), {"character_label": label}
                ),
            )
        )
        emotion = vision_backend.perceive(
            VisionRequest(
                frame_refs=frames,
                prompt=render_prompt(
                    load_template("perceive_emotion"), {"character_label": label}
                ),
            )
        )
    except AuthError:
        raise
    except BackendError as exc:
        logger.warning("perception degraded for segment %d: %s", segment.index, exc)
        return Perception("", "", frames)
    return Perception(behavior.strip(), emotion.strip(), frames)


def _memory_lines(state: AgentState, token_budget: int) -> list[str]:
    """Render memory under the budget: oldest originals drop first, then
    oldest generated entries, but never the most recent two rounds."""
    entries = list(state.memory)
    protected_rounds = {state.round, state.round - 1}

    def words(entry: MemoryEntry) -> int:
        return word_count(entry.sentence) + 2  # speaker tag overhead

    total = sum(words(e) for e in entries)
    while total > token_budget:
        droppable = next(
            (e for e in entries if e.kind == MEMORY_ORIGINAL), None
        ) or next(
            (
                e
                for e in entries
                if e.kind == MEMORY_GENERATED and e.round not in protected_rounds
            ),
            None,
        )
        if droppable is None:
            break
        entries.remove(droppable)
        total -= words(droppable)

    lines = []
    for e in entries:
        tag = "original" if e.kind == MEMORY_ORIGINAL else f"round {e.round}"
        lines.append(f"[{tag}] speaker {e.speaker_id}: {e.sentence}")
    return lines


def _extract_answer(raw: str) -> str:
    """Plan-and-Solve parsing: only the final answer field leaves the model."""
    try:
        doc = parse_json_object(raw)
        answer = doc.get("answer")
        if isinstance(answer, str):
            return answer.strip()
    except ParseError:
        pass
    match = re.search(r"answer\s*[:\-]\s*(.+)", raw, re.IGNORECASE | re.DOTALL)
    if match:
        return match.group(1).strip().strip('"')
    return raw.strip()


def predict_turn(
    state: AgentState,
    perception: Perception,
    prev_sentence: Optional[str],
    suggestion: Optional[Suggestion],
    theme: Theme,
    plot: Plot,
    llm_backend: ChatBackend,
    config: PipelineConfig,
) -> str:
    """One draft utterance for the current round, plan-then-answer prompted."""
    memory_lines = _memory_lines(state, config.memory_token_budget)

    perception_block = ""
    if perception.behavior or perception.emotion:
        perception_block = (
            "\nWhat you are visibly doing right now: "
            f"{perception.behavior or '(unknown)'}\n"
            f"How you visibly feel right now: {perception.emotion or '(unknown)'}\n"
        )
    previous_block = ""
    if prev_sentence is not None:
        previous_block = f"\nThe previous speaker just said: {prev_sentence}\n"
    suggestion_block = ""
    if suggestion is not None and suggestion.text:
        suggestion_block = (
            "\nYour earlier attempt was rejected with this revision suggestion, "
            f"address it: {suggestion.text}\n"
        )

    prompt = render_prompt(
        load_template("predict_turn"),
        {
            "role_name": state.role.name,
            "role_description": state.role.description,
            "theme": theme.text,
            "plot": plot.summary,
            "memory_block": "\n".join(memory_lines) or "(no dialogue yet)",
            "perception_block": perception_block,
            "previous_block": previous_block,
            "suggestion_block": suggestion_block,
        },
    )
    request = ChatRequest(
        messages=(ChatMessage("user", prompt),),
        temperature=config.generation_temperature,
    )
    for attempt in range(2):
        answer = _extract_answer(llm_backend.chat(request))
        if answer:
            return answer
    raise EmptyGeneration("model produced no utterance after retry")


# -- stage 3 -----------------------------------------------------------------

def critique_turn(
    theme: Theme,
    plot: Plot,
    draft: str,
    prev_sentence: Optional[str],
    history: Sequence[str],
    segment: Segment,
    config: PipelineConfig,
    llm_backend: ChatBackend,
) -> Suggestion:
    """Local-to-global review of a draft, plus the deterministic length check."""
    if not draft.strip():
        raise ValueError("cannot critique an empty draft")

    prompt = render_prompt(
        load_template("critique"),
        {
            "theme": theme.text,
            "plot": plot.summary,
            "history": "\n".join(history) or "(none yet)",
            "previous": prev_sentence if prev_sentence is not None else "(none)",
            "draft": draft,
        },
    )
    request = ChatRequest(messages=(ChatMessage("user", prompt),), temperature=0.0)

    last_error: Optional[ParseError] = None
    doc = None
    for attempt in range(2):
        raw = llm_backend.chat(request)
        try:
            doc = _parse_critique(raw)
            break
        except ParseError as exc:
            last_error = exc
            request = ChatRequest(
                messages=request.messages
                + (
                    ChatMessage("assistant", raw),
                    ChatMessage(
                        "user",
                        f"That response was not usable ({exc}). "
                        "Reply again with only the JSON object in the required shape.",
                    ),
                ),
                temperature=0.0,
            )
    if doc is None:
        raise last_error  # type: ignore[misc]

    budget = length_budget(segment, config.speaking_rate_wps)
    length_fits = word_count(draft) <= budget
    checks = make_checks(
        doc["theme_contextual"], doc["pairwise_continuity"], doc["global_coherence"],
        length_fits,
    )
    if all(ok for _, ok in checks):
        return Suggestion(VERDICT_ACCEPT, "", checks)

    parts = []
    if doc["suggestion"].strip():
        parts.append(doc["suggestion"].strip())
    if not length_fits:
        parts.append(
            f"The line is {word_count(draft)} words but only {budget} fit the "
            "speaking time; shorten it."
        )
    if not parts:
        parts.append("Revise the line to satisfy the failed checks.")
    return Suggestion(VERDICT_REVISE, " ".join(parts), checks)


def _parse_critique(raw: str) -> dict:
    doc = parse_json_object(raw)
    out = {}
    for key in ("theme_contextual", "pairwise_continuity", "global_coherence"):
        value = doc.get(key)
        if not isinstance(value, bool):
            raise ParseError(f"critique field {key!r} missing or not boolean")
        out[key] = value
    suggestion = doc.get("suggestion", "")
    if not isinstance(suggestion, str):
        raise ParseError("critique suggestion must be a string")
    if not all(out.values()) and not suggestion.strip():
        raise ParseError("failed checks require a nonempty suggestion")
    out["suggestion"] = suggestion
    return out


def broadcast_update(
    states: Sequence[AgentState], turn: DialogueTurn
) -> list[AgentState]:
    """Append the accepted turn to every agent's memory and advance rounds."""
    for state in states:
        if state.round != turn.round - 1:
            raise RoundMismatch(
                f"turn round {turn.round} does not follow agent round {state.round}"
            )
    entry = MemoryEntry(MEMORY_GENERATED, turn.round, turn.speaker_id, turn.sentence)
    return [state.with_entry(entry) for state in states]


# -- orchestration -----------------------------------------------------------

def original_dialogue_entries(manifest: VideoManifest) -> list[MemoryEntry]:
    return [
        MemoryEntry(MEMORY_ORIGINAL, 0, seg.speaker_id, seg.original_utterance)
        for seg in manifest.segments
        if seg.original_utterance.strip()
    ]


def run_dialogue(
    manifest: VideoManifest,
    theme: Theme,
    config: PipelineConfig,
    backends: BackendSuite,
    recorder=None,
    preset: Optional[tuple[Plot, tuple[Role, ...], list[AgentState]]] = None,
    seed_prev_sentence: Optional[str] = None,
    seed_history: Sequence[str] = (),
) -> Transcript:
    """Full end-to-end run over every manifest segment.

    preset (plot, roles, states) lets callers reuse an existing Stage-1
    result, e.g. for held-out prediction; the seed arguments then supply
    the visible dialogue preceding round 1 of this manifest.
    """
    violations = validate_manifest(manifest)
    if violations:
        raise ValidationError(violations)
    characters = {c.id: c for c in manifest.roster}

    if preset is None:
        originals = original_dialogue_entries(manifest)
        description = describe_first_frame(manifest, backends.vision)
        plot, roles = generate_plot_and_roles(
            theme, description, originals, manifest.roster, backends.llm,
            config.generation_temperature,
        )
        states = init_agents(plot, roles, originals)
    else:
        plot, roles, states = preset
        states = list(states)

    turns: list[DialogueTurn] = []
    try:
        for segment in manifest.segments:
            round_index = segment.index
            speaker = characters[segment.speaker_id]
            speaker_state = next(
                s for s in states if s.role.character_id == segment.speaker_id
            )
            perception = perceive_turn(segment, speaker, backends.vision, config)
            prev_sentence = turns[-1].sentence if turns else seed_prev_sentence
            history = list(seed_history) + [t.sentence for t in turns]

            suggestion: Optional[Suggestion] = None
            revisions: list[tuple[str, Suggestion]] = []
            draft = ""
            iterations_used = config.max_iterations
            for iteration in range(1, config.max_iterations + 1):
                draft = predict_turn(
                    speaker_state, perception, prev_sentence, suggestion,
                    theme, plot, backends.llm, config,
                )
                verdict = critique_turn(
                    theme, plot, draft, prev_sentence, history, segment,
                    config, backends.llm,
                )
                if verdict.verdict == VERDICT_ACCEPT:
                    iterations_used = iteration
                    break
                revisions.append((draft, verdict))
                suggestion = verdict

            turn = DialogueTurn(
                round=round_index,
                speaker_id=segment.speaker_id,
                sentence=draft,
                perception=perception,
                revisions=tuple(revisions),
                iterations_used=iterations_used,
            )
            states = broadcast_update(states, turn)
            turns.append(turn)
    except Exception as exc:
        if recorder is not None:
            recorder.write_partial(theme, plot, roles, turns, states, exc)
        raise

    return Transcript(
        theme=theme,
        plot=plot,
        roles=roles if isinstance(roles, tuple) else tuple(roles),
        turns=tuple(turns),
        manifest_ref=manifest.video_id,
        method="pipeline",
    )
