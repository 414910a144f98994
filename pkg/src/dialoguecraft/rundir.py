"""Run-directory persistence: config snapshot, call log, and artifacts.

Layout per run:
    config.snapshot     - the exact configuration the run used (JSON)
    calls.log.jsonl     - one request/response pair per line
    transcript.json     - the generated dialogue (on success)
    partial.json        - progress at the point of failure (on abort)
    eval.json           - judge report (written by the evaluate command)
    report.csv          - tabular scores (written by the evaluate command)
"""
from __future__ import annotations

import dataclasses
import json
from pathlib import Path
from typing import Sequence

from .backends import CallLog
from .model import AgentState, DialogueTurn, Plot, Role, Theme, Transcript
from .serialize import (
    SCHEMA_VERSION,
    dump_json,
    encode_agent_state,
    encode_transcript,
)


class RunRecorder:
    """Owns one run directory; refuses to reuse an existing one without force."""

    def __init__(self, run_dir: Path, force: bool = False):
        self.run_dir = Path(run_dir)
        if self.run_dir.exists() and any(self.run_dir.iterdir()) and not force:
            raise FileExistsError(
                f"run directory {self.run_dir} already exists; pass force to overwrite"
            )
        self.run_dir.mkdir(parents=True, exist_ok=True)

    def write_config(self, config, extra: dict | None = None) -> None:
        doc = dataclasses.asdict(config) if dataclasses.is_dataclass(config) else dict(config)
        if extra:
            doc.update(extra)
        dump_json({"schema_version": SCHEMA_VERSION, "kind": "config", **doc},
                  self.run_dir / "config.snapshot")

    def write_transcript(self, transcript: Transcript) -> None:
        dump_json(encode_transcript(transcript), self.run_dir / "transcript.json")

    def write_calls(self, call_log: CallLog) -> None:
        call_log.dump_jsonl(self.run_dir / "calls.log.jsonl")

    def write_partial(
        self,
        theme: Theme,
        plot: Plot,
        roles: Sequence[Role],
        turns: Sequence[DialogueTurn],
        states: Sequence[AgentState],
        error: Exception,
    ) -> None:
        from .serialize import _encode_turn  # shared turn encoding

        doc = {
            "schema_version": SCHEMA_VERSION,
            "kind": "partial_run",
            "theme": theme.text,
            "plot": plot.summary,
            "roles": [
                {"character_id": r.character_id, "name": r.name, "description": r.description}
                for r in roles
            ],
            "completed_turns": [_encode_turn(t) for t in turns],
            "agent_states": [encode_agent_state(s) for s in states],
            "error": {"type": type(error).__name__, "message": str(error)},
        }
        dump_json(doc, self.run_dir / "partial.json")

    def write_error(self, error: Exception, exit_code: int) -> None:
        dump_json(
            {
                "schema_version": SCHEMA_VERSION,
                "kind": "error",
                "type": type(error).__name__,
                "message": str(error),
                "exit_code": exit_code,
            },
            self.run_dir / "error.json",
        )
