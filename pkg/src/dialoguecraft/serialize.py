"""Versioned JSON encoding for manifests, transcripts, and reports.

Every on-disk document carries a top-level "schema_version" and "kind";
decode rejects unknown versions up front so stale files fail loudly.
decode(encode(x)) == x for every core type.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any

from .errors import SchemaError
from .model import (
    AgentState,
    Character,
    DialogueTurn,
    EvalReport,
    MemoryEntry,
    MetricScore,
    Perception,
    Plot,
    Role,
    Segment,
    Suggestion,
    Theme,
    Transcript,
    VideoManifest,
)

SCHEMA_VERSION = 1


def _check_header(doc: dict, kind: str) -> None:
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
    if doc.get("kind") != kind:
        raise SchemaError(f"expected kind {kind!r}, found {doc.get('kind')!r}")


# -- manifest ----------------------------------------------------------------

def encode_manifest(m: VideoManifest) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "manifest",
        "video_id": m.video_id,
        "duration_s": m.duration_s,
        "roster": [
            {"id": c.id, "label": c.label, "visual_descriptor": c.visual_descriptor}
            for c in m.roster
        ],
        "segments": [
            {
                "index": s.index,
                "start_s": s.start_s,
                "end_s": s.end_s,
                "speaker_id": s.speaker_id,
                "frame_refs": list(s.frame_refs),
                "original_utterance": s.original_utterance,
            }
            for s in m.segments
        ],
        "first_frame_ref": m.first_frame_ref,
        "metadata": dict(m.metadata),
    }


def decode_manifest(doc: dict) -> VideoManifest:
    _check_header(doc, "manifest")
    return VideoManifest(
        video_id=doc["video_id"],
        duration_s=doc["duration_s"],
        roster=tuple(
            Character(c["id"], c["label"], c.get("visual_descriptor"))
            for c in doc["roster"]
        ),
        segments=tuple(
            Segment(
                index=s["index"],
                start_s=s["start_s"],
                end_s=s["end_s"],
                speaker_id=s["speaker_id"],
                frame_refs=tuple(s.get("frame_refs", ())),
                original_utterance=s.get("original_utterance", ""),
            )
            for s in doc["segments"]
        ),
        first_frame_ref=doc["first_frame_ref"],
        metadata=tuple(sorted(doc.get("metadata", {}).items())),
    )


# -- transcript --------------------------------------------------------------

def _encode_suggestion(s: Suggestion) -> dict:
    return {"verdict": s.verdict, "text": s.text, "checks": dict(s.checks)}


def _decode_suggestion(doc: dict) -> Suggestion:
    return Suggestion(doc["verdict"], doc["text"], tuple(doc["checks"].items()))


def _encode_turn(t: DialogueTurn) -> dict:
    return {
        "round": t.round,
        "speaker_id": t.speaker_id,
        "sentence": t.sentence,
        "perception": {
            "behavior": t.perception.behavior,
            "emotion": t.perception.emotion,
            "frame_refs_used": list(t.perception.frame_refs_used),
        },
        "revisions": [
            {"draft": draft, "suggestion": _encode_suggestion(sug)}
            for draft, sug in t.revisions
        ],
        "iterations_used": t.iterations_used,
    }


def _decode_turn(doc: dict) -> DialogueTurn:
    p = doc["perception"]
    return DialogueTurn(
        round=doc["round"],
        speaker_id=doc["speaker_id"],
        sentence=doc["sentence"],
        perception=Perception(p["behavior"], p["emotion"], tuple(p.get("frame_refs_used", ()))),
        revisions=tuple(
            (r["draft"], _decode_suggestion(r["suggestion"])) for r in doc["revisions"]
        ),
        iterations_used=doc["iterations_used"],
    )


def encode_transcript(t: Transcript) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "transcript",
        "theme": t.theme.text,
        "plot": t.plot.summary,
        "roles": [
            {"character_id": r.character_id, "name": r.name, "description": r.description}
            for r in t.roles
        ],
        "turns": [_encode_turn(turn) for turn in t.turns],
        "manifest_ref": t.manifest_ref,
        "method": t.method,
    }


def decode_transcript(doc: dict) -> Transcript:
    _check_header(doc, "transcript")
    theme = Theme(doc["theme"])
    return Transcript(
        theme=theme,
        plot=Plot(doc["plot"], theme),
        roles=tuple(
            Role(r["character_id"], r["name"], r["description"]) for r in doc["roles"]
        ),
        turns=tuple(_decode_turn(t) for t in doc["turns"]),
        manifest_ref=doc["manifest_ref"],
        method=doc.get("method", "pipeline"),
    )


# -- evaluation report -------------------------------------------------------

def encode_report(r: EvalReport) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "eval_report",
        "transcript_ref": r.transcript_ref,
        "per_metric": {
            m: {"score": s.score, "comment": s.comment} for m, s in r.per_metric
        },
        "average": r.average,
        "excluded": list(r.excluded),
    }


def decode_report(doc: dict) -> EvalReport:
    _check_header(doc, "eval_report")
    per_metric = tuple(
        (m, MetricScore(m, v["score"], v["comment"]))
        for m, v in doc["per_metric"].items()
    )
    return EvalReport(
        transcript_ref=doc["transcript_ref"],
        per_metric=per_metric,
        average=doc.get("average"),
        excluded=tuple(doc.get("excluded", ())),
    )


# -- agent state (used in partial-run artifacts) -----------------------------

def encode_agent_state(s: AgentState) -> dict:
    return {
        "role": {
            "character_id": s.role.character_id,
            "name": s.role.name,
            "description": s.role.description,
        },
        "memory": [
            {"kind": e.kind, "round": e.round, "speaker_id": e.speaker_id, "sentence": e.sentence}
            for e in s.memory
        ],
        "round": s.round,
    }


def decode_agent_state(doc: dict) -> AgentState:
    r = doc["role"]
    return AgentState(
        role=Role(r["character_id"], r["name"], r["description"]),
        memory=tuple(
            MemoryEntry(e["kind"], e["round"], e["speaker_id"], e["sentence"])
            for e in doc["memory"]
        ),
        round=doc["round"],
    )


# -- file helpers ------------------------------------------------------------

def dump_json(doc: dict, path: Path) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_json(path: Path) -> Any:
    return json.loads(path.read_text(encoding="utf-8"))
