"""One-shot comparison generators and the held-out prediction harness.

The one-shot baselines pack everything into a single generation request,
in contrast to the pipeline's per-turn loop; that structural difference
(1 call vs >= T calls) is asserted in tests via the call log.
"""
from __future__ import annotations

import re
from dataclasses import replace
from typing import Optional, Sequence

from .backends import ChatBackend, ChatMessage, ChatRequest
from .errors import BackendUnavailable, ParseError
from .ingest import select_frames
from .model import (
    MEMORY_ORIGINAL,
    DialogueTurn,
    MemoryEntry,
    Perception,
    Plot,
    Role,
    Segment,
    Theme,
    Transcript,
    VideoManifest,
)
from .pipeline import (
    BackendSuite,
    PipelineConfig,
    describe_first_frame,
    generate_plot_and_roles,
    init_agents,
    original_dialogue_entries,
    run_dialogue,
)


def _segments_block(
    manifest: VideoManifest,
    roles: Sequence[Role],
    perception_texts: Sequence[tuple[str, str]],
) -> str:
    names = {r.character_id: r.name for r in roles}
    lines = []
    for seg, (behavior, emotion) in zip(manifest.segments, perception_texts):
        lines.append(
            f"turn {seg.index} ({names[seg.speaker_id]}): "
            f"behavior: {behavior or '(unknown)'}; emotion: {emotion or '(unknown)'}"
        )
    return "\n".join(lines)


def _parse_turn_lines(
    raw: str,
    manifest: VideoManifest,
    roles: Sequence[Role],
    perception_texts: Sequence[tuple[str, str]],
) -> tuple[DialogueTurn, ...]:
    """Grammar: one "<RoleName>: <sentence>" line per turn, in segment order."""
    by_name = {r.name.lower(): r.character_id for r in roles}
    lines = [line.strip() for line in raw.splitlines() if line.strip()]
    parsed = []
    for line in lines:
        match = re.match(r"^(.+?):\s*(.+)$", line)
        if match and match.group(1).strip().lower() in by_name:
            parsed.append((by_name[match.group(1).strip().lower()], match.group(2).strip()))
    if len(parsed) != len(manifest.segments):
        raise ParseError(
            f"expected {len(manifest.segments)} speaker lines, parsed {len(parsed)}"
        )
    turns = []
    for seg, (speaker_id, sentence), (behavior, emotion) in zip(
        manifest.segments, parsed, perception_texts
    ):
        if speaker_id != seg.speaker_id:
            raise ParseError(
                f"turn {seg.index}: speaker {speaker_id} does not match "
                f"segment speaker {seg.speaker_id}"
            )
        turns.append(
            DialogueTurn(
                round=seg.index,
                speaker_id=speaker_id,
                sentence=sentence,
                perception=Perception(behavior, emotion),
                revisions=(),
                iterations_used=1,
            )
        )
    return tuple(turns)


def _one_shot(
    manifest: VideoManifest,
    theme: Theme,
    plot: Plot,
    roles: Sequence[Role],
    perception_texts: Sequence[tuple[str, str]],
    original_dialogue: Sequence[str],
    backend: ChatBackend,
    attachments: tuple[str, ...],
    method: str,
    temperature: float,
) -> Transcript:
    from .prompts import load_template
    from .backends import render_prompt

    prompt = render_prompt(
        load_template("text_baseline"),
        {
            "theme": theme.text,
            "plot": plot.summary,
            "roles_block": "\n".join(
                f"- {r.name} (character {r.character_id}): {r.description}" for r in roles
            ),
            "original_dialogue": "\n".join(original_dialogue) or "(none)",
            "segments_block": _segments_block(manifest, roles, perception_texts),
            "turn_count": str(len(manifest.segments)),
        },
    )
    request = ChatRequest(
        messages=(ChatMessage("user", prompt),),
        temperature=temperature,
        attachments=attachments,
    )
    last_error: Optional[ParseError] = None
    for attempt in range(2):
        raw = backend.chat(request)
        try:
            turns = _parse_turn_lines(raw, manifest, roles, perception_texts)
            return Transcript(
                theme=theme,
                plot=plot,
                roles=tuple(roles),
                turns=turns,
                manifest_ref=manifest.video_id,
                method=method,
            )
        except ParseError as exc:
            last_error = exc
            request = ChatRequest(
                messages=request.messages
                + (
                    ChatMessage("assistant", raw),
                    ChatMessage(
                        "user",
                        f"That response was not usable ({exc}). Output exactly "
                        f"{len(manifest.segments)} lines, each "
                        '"<Role Name>: <sentence>", in turn order.',
                    ),
                ),
                temperature=temperature,
                attachments=attachments,
            )
    raise last_error  # type: ignore[misc]


def text_baseline(
    manifest: VideoManifest,
    theme: Theme,
    plot: Plot,
    roles: Sequence[Role],
    perception_texts: Sequence[tuple[str, str]],
    original_dialogue: Sequence[str],
    llm_backend: ChatBackend,
    temperature: float = 0.7,
) -> Transcript:
    """All turns generated in one call from textualized perception."""
    return _one_shot(
        manifest, theme, plot, roles, perception_texts, original_dialogue,
        llm_backend, (), "text_baseline", temperature,
    )


def image_baseline(
    manifest: VideoManifest,
    theme: Theme,
    plot: Plot,
    roles: Sequence[Role],
    perception_texts: Sequence[tuple[str, str]],
    original_dialogue: Sequence[str],
    vision_chat_backend: ChatBackend,
    temperature: float = 0.7,
) -> Transcript:
    """As text_baseline, plus one key frame (the middle one) per segment."""
    if not getattr(vision_chat_backend, "supports_images", False):
        raise BackendUnavailable("backend does not accept image attachments")
    key_frames = tuple(select_frames(seg, 1)[0] for seg in manifest.segments)
    return _one_shot(
        manifest, theme, plot, roles, perception_texts, original_dialogue,
        vision_chat_backend, key_frames, "image_baseline", temperature,
    )


# -- held-out prediction harness ---------------------------------------------

def last_k_prediction(
    manifest: VideoManifest,
    k: int,
    method: str,
    backends: BackendSuite,
    config: PipelineConfig,
    perception_texts: Optional[Sequence[tuple[str, str]]] = None,
) -> list[str]:
    """Predict the final k original utterances from the preceding context.

    The plot and roles come from the FULL original dialogue; the generator
    then sees only the first T-k utterances. Held-out sentences are
    stripped from every prompt surface, including memory initialization.
    """
    total = len(manifest.segments)
    if not 1 <= k < total:
        raise ValueError(f"k must satisfy 1 <= k < {total}, got {k}")
    if method not in ("pipeline", "text_baseline"):
        raise ValueError(f"unknown method {method!r}")

    theme = Theme("faithful continuation of the original conversation")
    full_originals = original_dialogue_entries(manifest)
    description = describe_first_frame(manifest, backends.vision)
    plot, roles = generate_plot_and_roles(
        theme, description, full_originals, manifest.roster, backends.llm,
        config.generation_temperature,
    )

    visible_segments = manifest.segments[: total - k]
    held_out_segments = manifest.segments[total - k:]
    visible_sentences = [
        seg.original_utterance for seg in visible_segments if seg.original_utterance.strip()
    ]

    if method == "pipeline":
        visible_entries = [
            MemoryEntry(MEMORY_ORIGINAL, 0, seg.speaker_id, seg.original_utterance)
            for seg in visible_segments
            if seg.original_utterance.strip()
        ]
        states = init_agents(plot, roles, visible_entries)
        tail_manifest = _tail_manifest(manifest, held_out_segments)
        transcript = run_dialogue(
            tail_manifest,
            theme,
            config,
            backends,
            preset=(plot, roles, states),
            seed_prev_sentence=visible_sentences[-1] if visible_sentences else None,
            seed_history=visible_sentences,
        )
        return [turn.sentence for turn in transcript.turns]

    tail_manifest = _tail_manifest(manifest, held_out_segments)
    if perception_texts is None:
        perception_texts = [("", "")] * k
    transcript = text_baseline(
        tail_manifest,
        theme,
        plot,
        roles,
        perception_texts,
        visible_sentences,
        backends.llm,
        config.generation_temperature,
    )
    return [turn.sentence for turn in transcript.turns]


def _tail_manifest(
    manifest: VideoManifest, held_out: Sequence[Segment]
) -> VideoManifest:
    """The held-out rounds as a standalone manifest, re-indexed from 1 and
    with the ground-truth utterances blanked so they cannot leak."""
    segments = tuple(
        replace(
            seg,
            index=i,
            original_utterance="",
        )
        for i, seg in enumerate(held_out, start=1)
    )
    return replace(manifest, segments=segments, video_id=f"{manifest.video_id}#tail")
