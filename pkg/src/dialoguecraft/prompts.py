"""Loader for the prompt templates shipped with the package.

Templates live as plain UTF-8 files under templates/ and are addressed
by template_id, so prompt iteration never needs a code change.
"""
from __future__ import annotations

from importlib import resources

from .backends import PromptTemplate

# Required placeholders per template; extra placeholders in a file are
# still substituted, but these must be present for the pipeline to work.
_REQUIRED: dict[str, frozenset[str]] = {
    "first_frame": frozenset(),
    "plot_roles": frozenset({"theme", "frame_description", "original_dialogue", "characters"}),
    "perceive_behavior": frozenset({"character_label"}),
    "perceive_emotion": frozenset({"character_label"}),
    "predict_turn": frozenset({
        "role_name", "role_description", "theme", "plot",
        "memory_block", "perception_block", "previous_block", "suggestion_block",
    }),
    "critique": frozenset({"theme", "plot", "history", "previous", "draft"}),
    "text_baseline": frozenset({
        "theme", "plot", "roles_block", "original_dialogue", "segments_block", "turn_count",
    }),
    "judge_TR": frozenset({"theme", "dialogue"}),
    "judge_GQ": frozenset({"theme", "dialogue"}),
    "judge_LC": frozenset({"theme", "dialogue"}),
    "judge_CD": frozenset({"theme", "dialogue", "original_dialogue"}),
    "judge_VC": frozenset({"theme", "dialogue", "perceptions"}),
    "judge_SC": frozenset({"theme", "dialogue", "perceptions"}),
}


def load_template(template_id: str) -> PromptTemplate:
    if template_id not in _REQUIRED:
        raise KeyError(f"unknown template {template_id!r}")
    body = (
        resources.files("dialoguecraft")
        .joinpath("templates", f"{template_id}.txt")
        .read_text(encoding="utf-8")
    )
    return PromptTemplate(template_id, body, _REQUIRED[template_id])


def judge_templates() -> dict[str, PromptTemplate]:
    """The six rubric templates keyed by metric id."""
    return {m: load_template(f"judge_{m}") for m in ("TR", "GQ", "LC", "CD", "VC", "SC")}
