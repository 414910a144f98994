"""Six-metric rubric judging of generated transcripts, plus aggregation.

Every judge call runs at temperature 0. A sample whose verdict cannot be
parsed (after one re-ask) is excluded from aggregates and counted; it is
never imputed, since imputation would silently bias the means.
"""
from __future__ import annotations

import csv
import json
import re
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .backends import ChatBackend, ChatMessage, ChatRequest, PromptTemplate, render_prompt
from .errors import ParseError, ValidationError
from .model import METRIC_IDS, EvalReport, MetricScore, Theme, Transcript
from .prompts import judge_templates

TEXT_METRICS = ("TR", "GQ", "LC", "CD")
VIDEO_METRICS = ("VC", "SC")


@dataclass
class JudgeConfig:
    backend: ChatBackend
    temperature: float = 0.0
    rubric_templates: dict[str, PromptTemplate] = field(default_factory=judge_templates)

    def __post_init__(self):
        if self.temperature != 0:
            raise ValueError("judge temperature must be 0")


@dataclass(frozen=True)
class EvalContext:
    """Side information the rubrics need beyond the transcript itself."""

    original_dialogue: tuple[str, ...] = ()
    perception_texts: tuple[tuple[str, str], ...] = ()  # (behavior, emotion) per turn


def _dialogue_block(transcript: Transcript) -> str:
    names = {r.character_id: r.name for r in transcript.roles}
    return "\n".join(
        f"{names.get(t.speaker_id, f'speaker {t.speaker_id}')}: {t.sentence}"
        for t in transcript.turns
    )


def _perception_block(perceptions: Sequence[tuple[str, str]]) -> str:
    lines = []
    for i, (behavior, emotion) in enumerate(perceptions, start=1):
        lines.append(f"turn {i}: behavior: {behavior or '(unknown)'}; "
                     f"emotion: {emotion or '(unknown)'}")
    return "\n".join(lines)


def context_from_transcript(transcript: Transcript,
                            original_dialogue: Sequence[str] = ()) -> EvalContext:
    """Build a context from the perceptions already embedded in the turns."""
    return EvalContext(
        original_dialogue=tuple(original_dialogue),
        perception_texts=tuple(
            (t.perception.behavior, t.perception.emotion) for t in transcript.turns
        ),
    )


def parse_score_comment(raw: str) -> tuple[int, str]:
    """Strict fielded parse first, then a lenient first-integer scan.

    Both paths reject scores outside 1..5 and empty comments.
    """
    try:
        doc = _loose_json(raw)
    except ParseError:
        doc = None
    if doc is not None:
        score = doc.get("score")
        comment = doc.get("comment")
        if isinstance(score, bool) or not isinstance(score, int):
            raise ParseError("score field is not an integer")
        if score not in (1, 2, 3, 4, 5):
            raise ParseError(f"score {score} outside 1..5")
        if not isinstance(comment, str) or not comment.strip():
            raise ParseError("comment field missing or empty")
        return score, comment.strip()

    match = re.search(r"\b(\d+)\b", raw)
    if not match:
        raise ParseError("no score found in response")
    score = int(match.group(1))
    if score not in (1, 2, 3, 4, 5):
        raise ParseError(f"score {score} outside 1..5")
    comment = raw[match.end():].strip().lstrip(".,:;-— ").strip()
    if not comment:
        raise ParseError("no comment accompanies the score")
    return score, comment


def _loose_json(raw: str) -> dict:
    text = re.sub(r"^```[a-z]*\s*|\s*```$", "", raw.strip(), flags=re.MULTILINE).strip()
    start = text.find("{")
    if start < 0:
        raise ParseError("no JSON object")
    try:
        obj, _ = json.JSONDecoder().raw_decode(text[start:])
    except ValueError as exc:
        raise ParseError(str(exc)) from exc
    if not isinstance(obj, dict):
        raise ParseError("not an object")
    return obj


def evaluate_metric(
    transcript: Transcript,
    context: EvalContext,
    metric_id: str,
    judge: JudgeConfig,
) -> MetricScore:
    """One rubric call at temperature 0, with a single re-ask on parse failure."""
    if metric_id not in METRIC_IDS:
        raise ValueError(f"unknown metric {metric_id!r}")
    if metric_id == "CD" and not context.original_dialogue:
        raise ValidationError(["CD requires the original dialogue in the context"])
    if metric_id in VIDEO_METRICS and not context.perception_texts:
        raise ValidationError([f"{metric_id} requires perception texts in the context"])

    bindings = {
        "theme": transcript.theme.text,
        "dialogue": _dialogue_block(transcript),
    }
    if metric_id == "CD":
        bindings["original_dialogue"] = "\n".join(context.original_dialogue)
    if metric_id in VIDEO_METRICS:
        bindings["perceptions"] = _perception_block(context.perception_texts)

    prompt = render_prompt(judge.rubric_templates[metric_id], bindings)
    request = ChatRequest(
        messages=(ChatMessage("user", prompt),), temperature=judge.temperature
    )
    last_error: Optional[ParseError] = None
    for attempt in range(2):
        raw = judge.backend.chat(request)
        try:
            score, comment = parse_score_comment(raw)
            return MetricScore(metric_id, score, comment)
        except ParseError as exc:
            last_error = exc
            request = ChatRequest(
                messages=request.messages
                + (
                    ChatMessage("assistant", raw),
                    ChatMessage(
                        "user",
                        f"That response was not usable ({exc}). Reply again with "
                        'only {"score": <integer 1-5>, "comment": "<text>"}.',
                    ),
                ),
                temperature=judge.temperature,
            )
    raise last_error  # type: ignore[misc]


def evaluate_all(
    transcript: Transcript, context: EvalContext, judge: JudgeConfig
) -> EvalReport:
    """All six metrics; the average is omitted whenever any metric failed."""
    scores: dict[str, MetricScore] = {}
    excluded: list[str] = []
    for metric_id in METRIC_IDS:
        try:
            scores[metric_id] = evaluate_metric(transcript, context, metric_id, judge)
        except (ParseError, ValidationError):
            excluded.append(metric_id)
    return EvalReport.from_scores(transcript.manifest_ref, scores, tuple(excluded))


# -- per-theme aggregation ---------------------------------------------------

@dataclass(frozen=True)
class ThemeAggregate:
    theme: Theme
    metric_id: str
    mean: float
    variance: float  # population variance
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("aggregate needs at least one sample")
        if self.variance < 0:
            raise ValueError("variance cannot be negative")


def aggregate_by_theme(
    reports: Sequence[tuple[Theme, EvalReport]]
) -> list[ThemeAggregate]:
    """Arithmetic mean and population variance per (theme, metric)."""
    if not reports:
        raise ValueError("no reports to aggregate")
    by_key: dict[tuple[str, str], list[int]] = {}
    themes: dict[str, Theme] = {}
    for theme, report in reports:
        themes[theme.text] = theme
        for metric_id, score in report.per_metric:
            by_key.setdefault((theme.text, metric_id), []).append(score.score)
    aggregates = []
    for (theme_text, metric_id), values in sorted(by_key.items()):
        aggregates.append(
            ThemeAggregate(
                theme=themes[theme_text],
                metric_id=metric_id,
                mean=statistics.fmean(values),
                variance=statistics.pvariance(values),
                n=len(values),
            )
        )
    return aggregates


def cross_theme_variance(aggregates: Sequence[ThemeAggregate]) -> dict[str, float]:
    """Population variance of the per-theme means, per metric."""
    by_metric: dict[str, list[float]] = {}
    for agg in aggregates:
        by_metric.setdefault(agg.metric_id, []).append(agg.mean)
    return {
        metric_id: statistics.pvariance(means) if len(means) > 1 else 0.0
        for metric_id, means in by_metric.items()
    }


# -- tabular output ----------------------------------------------------------

CSV_COLUMNS = ("TR", "GQ", "LC", "CD", "VC", "SC", "Average")


def write_report_csv(reports: Sequence[EvalReport], path: Path) -> None:
    """One row per report, mirroring the benchmark column layout."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(("transcript",) + CSV_COLUMNS)
        for report in reports:
            per_metric = report.per_metric_dict()
            row = [report.transcript_ref]
            for metric_id in METRIC_IDS:
                score = per_metric.get(metric_id)
                row.append(score.score if score else "failed")
            row.append(f"{report.average:.2f}" if report.average is not None else "")
            writer.writerow(row)


def write_theme_csv(
    aggregates: Sequence[ThemeAggregate], path: Path
) -> None:
    """Per-theme mean/variance rows plus a cross-theme variance footer."""
    by_theme: dict[str, dict[str, ThemeAggregate]] = {}
    for agg in aggregates:
        by_theme.setdefault(agg.theme.text, {})[agg.metric_id] = agg
    cross = cross_theme_variance(aggregates)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(("theme", "stat") + CSV_COLUMNS[:-1] + ("n",))
        for theme_text in sorted(by_theme):
            row_means: list = [theme_text, "mean"]
            row_vars: list = [theme_text, "variance"]
            n = 0
            for metric_id in METRIC_IDS:
                agg = by_theme[theme_text].get(metric_id)
                row_means.append(f"{agg.mean:.4f}" if agg else "")
                row_vars.append(f"{agg.variance:.4f}" if agg else "")
                n = max(n, agg.n if agg else 0)
            writer.writerow(row_means + [n])
            writer.writerow(row_vars + [n])
        footer: list = ["(all)", "cross_theme_variance"]
        for metric_id in METRIC_IDS:
            value = cross.get(metric_id)
            footer.append(f"{value:.4f}" if value is not None else "")
        writer.writerow(footer + [""])
