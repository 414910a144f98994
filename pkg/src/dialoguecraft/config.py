"""Human-editable run configuration and scripted-backend fixtures.

Both files are versioned YAML (JSON is valid YAML, so either works).
Secrets never appear here: live backends name an environment variable
and read the key at call time.
"""
from __future__ import annotations

from pathlib import Path
from typing import Optional

import yaml

from .backends import (
    BackendConfig,
    CallLog,
    HttpChatBackend,
    HttpVisionBackend,
    ScriptedChatBackend,
    ScriptedEmbeddingBackend,
    ScriptedVisionBackend,
    TransientFailure,
)
from .errors import SchemaError
from .pipeline import BackendSuite, PipelineConfig

CONFIG_VERSION = 1


def _load_versioned(path: Path, kind: str) -> dict:
    doc = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    if not isinstance(doc, dict):
        raise SchemaError(f"{kind} file must hold a mapping")
    version = doc.get("schema_version")
    if version != CONFIG_VERSION:
        raise SchemaError(
            f"unsupported {kind} schema_version {version!r} (expected {CONFIG_VERSION})"
        )
    return doc


def load_run_config(path: Optional[Path]) -> tuple[PipelineConfig, BackendConfig, BackendConfig]:
    """(pipeline config, generation backend, judge backend) from one file."""
    if path is None:
        return PipelineConfig(), BackendConfig(), BackendConfig()
    doc = _load_versioned(path, "config")
    pipeline = PipelineConfig(**doc.get("pipeline", {}))
    backend = BackendConfig(**doc.get("backend", {}))
    judge = BackendConfig(**doc.get("judge_backend", doc.get("backend", {})))
    return pipeline, backend, judge


def _scripted_chat_queue(items: list) -> list:
    queue: list = []
    for item in items:
        if isinstance(item, dict) and "transient" in item:
            queue.append(TransientFailure(str(item["transient"])))
        else:
            queue.append(str(item))
    return queue


def load_fixture(path: Path) -> dict:
    return _load_versioned(path, "fixture")


def make_scripted_suite(fixture: dict, call_log: Optional[CallLog] = None) -> BackendSuite:
    """Deterministic offline backends from a fixture document.

    Fixture keys: chat (response list; {transient: msg} entries fail once),
    vision ({queue: [...], keyed: [{frame, kind, text}]}), judge (response
    list for the evaluation backend), embedding ({dim: d}).
    """
    log = call_log or CallLog()
    chat = ScriptedChatBackend(_scripted_chat_queue(fixture.get("chat", [])), log)
    vision_doc = fixture.get("vision", {}) or {}
    keyed = {
        (entry["frame"], entry["kind"]): entry["text"]
        for entry in vision_doc.get("keyed", [])
    }
    vision = ScriptedVisionBackend(keyed, vision_doc.get("queue", []), log)
    embedding = None
    if "embedding" in fixture:
        embedding = ScriptedEmbeddingBackend(
            dim=int(fixture["embedding"].get("dim", 16)), call_log=log
        )
    return BackendSuite(llm=chat, vision=vision, embedding=embedding, call_log=log)


def make_scripted_judge_backend(fixture: dict, call_log: Optional[CallLog] = None):
    return ScriptedChatBackend(_scripted_chat_queue(fixture.get("judge", [])), call_log)


def make_live_suite(backend: BackendConfig, call_log: Optional[CallLog] = None) -> BackendSuite:
    log = call_log or CallLog()
    return BackendSuite(
        llm=HttpChatBackend(backend, log),
        vision=HttpVisionBackend(backend, log),
        embedding=None,
        call_log=log,
    )
