"""Command-line interface.

Exit codes: 0 success, 2 usage, 3 validation, 4 backend, 5 parse.
Failures print a machine-readable error JSON on stderr. Commands refuse
to overwrite existing outputs unless --force is given.
"""
from __future__ import annotations

import json
import os
import shutil
import subprocess
import sys
from pathlib import Path
from typing import Optional

import click

from . import baselines, ingest, judging, metrics
from .backends import CallLog
from .config import (
    load_fixture,
    load_run_config,
    make_live_suite,
    make_scripted_judge_backend,
    make_scripted_suite,
)
from .errors import (
    AuthError,
    BackendError,
    DialogueCraftError,
    EmptyGeneration,
    EmptyTranscript,
    LengthMismatch,
    NoFramesAvailable,
    ParseError,
    SchemaError,
    ToolNotFound,
    ValidationError,
)
from .model import Theme, validate_manifest
from .pipeline import run_dialogue
from .rundir import RunRecorder
from .serialize import decode_report, decode_transcript, dump_json, encode_report, load_json

EXIT_USAGE = 2
EXIT_VALIDATION = 3
EXIT_BACKEND = 4
EXIT_PARSE = 5

FRAME_DUMP_TOOL = "framedump"


def _exit_code(error: Exception) -> int:
    if isinstance(error, (ParseError, EmptyGeneration)):
        return EXIT_PARSE
    if isinstance(error, BackendError):
        return EXIT_BACKEND
    if isinstance(
        error,
        (ValidationError, SchemaError, LengthMismatch, EmptyTranscript,
         NoFramesAvailable, ToolNotFound),
    ):
        return EXIT_VALIDATION
    return EXIT_USAGE


def _fail(error: Exception) -> None:
    code = _exit_code(error)
    payload = {"error": type(error).__name__, "message": str(error), "exit_code": code}
    click.echo(json.dumps(payload), err=True)
    sys.exit(code)


def _guard(func, *args, **kwargs):
    try:
        return func(*args, **kwargs)
    except DialogueCraftError as exc:
        _fail(exc)
    except FileExistsError as exc:
        _fail(ValidationError([str(exc)]))
    except FileNotFoundError as exc:
        _fail(ValidationError([f"missing input: {exc}"]))


@click.group()
def main():
    """Theme-conditioned video dialogue generation and evaluation."""


# -- ingest ------------------------------------------------------------------

@main.command("ingest")
@click.option("--asr", "asr_path", type=click.Path(exists=True, path_type=Path),
              required=True, help="JSON list of {start, end, text} segments.")
@click.option("--labels", "labels_path", type=click.Path(exists=True, path_type=Path),
              required=True, help="JSON list of speaker ids, one per segment.")
@click.option("--video", "video_path", type=click.Path(path_type=Path), default=None,
              help="Source video; frames are dumped via the external tool.")
@click.option("--frames", "frames_dir", type=click.Path(path_type=Path), default=None,
              help="Directory of pre-extracted <ms>.jpg frames.")
@click.option("--video-id", required=True)
@click.option("--duration", type=float, required=True, help="Video duration in seconds.")
@click.option("--out", "out_path", type=click.Path(path_type=Path), required=True)
@click.option("--force", is_flag=True)
def cmd_ingest(asr_path, labels_path, video_path, frames_dir, video_id, duration,
               out_path, force):
    """Build and validate a manifest from ASR output and speaker labels."""

    def run():
        if out_path.exists() and not force:
            raise ValidationError([f"{out_path} exists; use --force to overwrite"])
        asr_doc = load_json(asr_path)
        labels = load_json(labels_path)
        if not isinstance(asr_doc, list) or not isinstance(labels, list):
            raise ValidationError(["ASR and labels files must hold JSON lists"])
        segments = [(float(s["start"]), float(s["end"]), str(s.get("text", "")))
                    for s in asr_doc]

        frame_dir = frames_dir
        if video_path is not None:
            if shutil.which(FRAME_DUMP_TOOL) is None:
                raise ToolNotFound(
                    f"frame-dump tool {FRAME_DUMP_TOOL!r} not found on PATH"
                )
            frame_dir = out_path.parent / video_id
            frame_dir.mkdir(parents=True, exist_ok=True)
            subprocess.run(
                [FRAME_DUMP_TOOL, str(video_path), str(frame_dir)], check=True
            )

        manifest = ingest.build_manifest(
            segments, [int(x) for x in labels], frame_dir, video_id, duration
        )
        ingest.save_manifest(manifest, out_path)
        click.echo(f"wrote {out_path} ({manifest.turn_count} turns, "
                   f"{manifest.role_count} roles)")

    _guard(run)


# -- generate ----------------------------------------------------------------

def _make_suite(scripted: Optional[Path], backend_config, call_log: CallLog):
    if scripted is not None:
        return make_scripted_suite(load_fixture(scripted), call_log)
    key = os.environ.get(backend_config.api_key_env_var, "").strip()
    if not key:
        raise AuthError(
            f"environment variable {backend_config.api_key_env_var} is not set"
        )
    return make_live_suite(backend_config, call_log)


def _generate_one(manifest, theme_text, method, pipeline_config, backend_config,
                  scripted, out_dir, force):
    call_log = CallLog()
    suite = _make_suite(scripted, backend_config, call_log)
    recorder = RunRecorder(out_dir, force=force)
    recorder.write_config(
        pipeline_config,
        {"theme": theme_text, "method": method, "scripted": scripted is not None},
    )
    theme = Theme(theme_text)
    try:
        if method == "pipeline":
            transcript = run_dialogue(manifest, theme, pipeline_config, suite, recorder)
        else:
            originals = [
                seg.original_utterance for seg in manifest.segments
                if seg.original_utterance.strip()
            ]
            from .pipeline import (
                describe_first_frame,
                generate_plot_and_roles,
                original_dialogue_entries,
                perceive_turn,
            )

            description = describe_first_frame(manifest, suite.vision)
            plot, roles = generate_plot_and_roles(
                theme, description, original_dialogue_entries(manifest),
                manifest.roster, suite.llm, pipeline_config.generation_temperature,
            )
            characters = {c.id: c for c in manifest.roster}
            perception_texts = []
            for seg in manifest.segments:
                p = perceive_turn(seg, characters[seg.speaker_id], suite.vision,
                                  pipeline_config)
                perception_texts.append((p.behavior, p.emotion))
            if method == "text":
                transcript = baselines.text_baseline(
                    manifest, theme, plot, roles, perception_texts, originals,
                    suite.llm, pipeline_config.generation_temperature,
                )
            else:
                transcript = baselines.image_baseline(
                    manifest, theme, plot, roles, perception_texts, originals,
                    suite.llm, pipeline_config.generation_temperature,
                )
        recorder.write_transcript(transcript)
    finally:
        recorder.write_calls(call_log)
    return recorder.run_dir


@main.command("generate")
@click.argument("manifest_path", type=click.Path(exists=True, path_type=Path))
@click.option("--theme", "themes", multiple=True, required=True,
              help="Theme text; repeat for a batch of runs.")
@click.option("--method", type=click.Choice(["pipeline", "text", "image"]),
              default="pipeline", show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path),
              default=None)
@click.option("--scripted", type=click.Path(exists=True, path_type=Path), default=None,
              help="Fixture file for offline scripted backends.")
@click.option("--out-dir", type=click.Path(path_type=Path), required=True)
@click.option("--force", is_flag=True)
def cmd_generate(manifest_path, themes, method, config_path, scripted, out_dir, force):
    """Generate a new dialogue for each theme; one run directory per theme."""

    def run():
        manifest = ingest.load_manifest(manifest_path)
        pipeline_config, backend_config, _ = load_run_config(config_path)
        for i, theme_text in enumerate(themes):
            if len(themes) == 1:
                run_dir = out_dir
            else:
                slug = "".join(
                    ch if ch.isalnum() else "-" for ch in theme_text.lower()
                ).strip("-")[:40]
                run_dir = out_dir / f"{i + 1:02d}_{slug}"
            final = _generate_one(
                manifest, theme_text, method, pipeline_config, backend_config,
                scripted, run_dir, force,
            )
            click.echo(f"run complete: {final}")

    _guard(run)


# -- evaluate ----------------------------------------------------------------

@main.command("evaluate")
@click.argument("run_dir", type=click.Path(exists=True, path_type=Path))
@click.option("--context", "context_path", type=click.Path(path_type=Path), default=None,
              help="JSON with original_dialogue and perception_texts.")
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path),
              default=None)
@click.option("--scripted", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), default=None)
@click.option("--force", is_flag=True)
def cmd_evaluate(run_dir, context_path, config_path, scripted, out_dir, force):
    """Score a run's transcript on the six-metric judge benchmark."""

    def run():
        transcript_path = run_dir / "transcript.json"
        if not transcript_path.is_file():
            raise ValidationError([f"no transcript.json in {run_dir}"])
        transcript = decode_transcript(load_json(transcript_path))

        if context_path is not None:
            doc = load_json(context_path)
            context = judging.EvalContext(
                original_dialogue=tuple(doc.get("original_dialogue", ())),
                perception_texts=tuple(
                    (p[0], p[1]) for p in doc.get("perception_texts", ())
                ),
            )
        else:
            context = judging.context_from_transcript(transcript)

        call_log = CallLog()
        if scripted is not None:
            backend = make_scripted_judge_backend(load_fixture(scripted), call_log)
        else:
            _, _, judge_backend_config = load_run_config(config_path)
            backend = _make_suite(None, judge_backend_config, call_log).llm
        judge = judging.JudgeConfig(backend=backend)

        report = judging.evaluate_all(transcript, context, judge)
        target = Path(out_dir) if out_dir is not None else run_dir
        target.mkdir(parents=True, exist_ok=True)
        eval_path = target / "eval.json"
        if eval_path.exists() and not force:
            raise ValidationError([f"{eval_path} exists; use --force to overwrite"])
        dump_json(encode_report(report), eval_path)
        judging.write_report_csv([report], target / "report.csv")

        succeeded = len(report.per_metric)
        for metric_id, score in report.per_metric:
            click.echo(f"{metric_id}: {score.score}  {score.comment}")
        for metric_id in report.excluded:
            click.echo(f"{metric_id}: failed")
        if report.average is not None:
            click.echo(f"Average: {report.average:.2f}")
        if succeeded == 0:
            raise ParseError("all six metrics failed")

    _guard(run)


# -- held-out prediction -----------------------------------------------------

@main.command("predict-last-k")
@click.argument("manifest_path", type=click.Path(exists=True, path_type=Path))
@click.option("--k", type=int, required=True)
@click.option("--method", type=click.Choice(["pipeline", "text_baseline"]),
              default="pipeline", show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path),
              default=None)
@click.option("--scripted", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--out", "out_path", type=click.Path(path_type=Path), required=True)
@click.option("--force", is_flag=True)
def cmd_predict_last_k(manifest_path, k, method, config_path, scripted, out_path, force):
    """Predict the held-out final K utterances and score them."""

    def run():
        manifest = ingest.load_manifest(manifest_path)
        if not 1 <= k < manifest.turn_count:
            raise click.UsageError(
                f"--k must satisfy 1 <= k < {manifest.turn_count}"
            )
        if out_path.exists() and not force:
            raise ValidationError([f"{out_path} exists; use --force to overwrite"])
        pipeline_config, backend_config, _ = load_run_config(config_path)
        call_log = CallLog()
        suite = _make_suite(scripted, backend_config, call_log)

        predictions = baselines.last_k_prediction(
            manifest, k, method, suite, pipeline_config
        )
        references = [
            seg.original_utterance for seg in manifest.segments[manifest.turn_count - k:]
        ]
        rows = []
        for predicted, reference in zip(predictions, references):
            semantic = metrics.bert_score(predicted, reference, suite.embedding)
            rows.append({
                "prediction": predicted,
                "reference": reference,
                "rouge_l": metrics.rouge_l(predicted, reference),
                "meteor": metrics.meteor(predicted, reference),
                "bert_score": semantic if semantic is not None else "unavailable",
            })
        dump_json(
            {"schema_version": 1, "kind": "last_k_predictions", "k": k,
             "method": method, "rows": rows},
            out_path,
        )
        for row in rows:
            click.echo(
                f"rouge_l={row['rouge_l']:.4f} meteor={row['meteor']:.4f} "
                f"bert_score={row['bert_score']}  {row['prediction']}"
            )

    _guard(run)


# -- aggregation -------------------------------------------------------------

@main.command("report")
@click.argument("run_dirs", nargs=-1, type=click.Path(exists=True, path_type=Path))
@click.option("--by-theme", is_flag=True, default=False)
@click.option("--out", "out_path", type=click.Path(path_type=Path), required=True)
@click.option("--force", is_flag=True)
def cmd_report(run_dirs, by_theme, out_path, force):
    """Aggregate eval.json files across runs into a CSV."""

    def run():
        if not run_dirs:
            raise click.UsageError("at least one run directory is required")
        if out_path.exists() and not force:
            raise ValidationError([f"{out_path} exists; use --force to overwrite"])
        pairs = []
        for run_dir in run_dirs:
            eval_path = Path(run_dir) / "eval.json"
            transcript_path = Path(run_dir) / "transcript.json"
            if not eval_path.is_file() or not transcript_path.is_file():
                raise ValidationError(
                    [f"{run_dir} lacks eval.json or transcript.json"]
                )
            report = decode_report(load_json(eval_path))
            transcript = decode_transcript(load_json(transcript_path))
            pairs.append((transcript.theme, report))

        if by_theme:
            aggregates = judging.aggregate_by_theme(pairs)
            judging.write_theme_csv(aggregates, out_path)
        else:
            judging.write_report_csv([report for _, report in pairs], out_path)
        click.echo(f"wrote {out_path}")

    _guard(run)


if __name__ == "__main__":
    main()
