import json

import pytest

from dialoguecraft.backends import (
    CallLog,
    ScriptedChatBackend,
    ScriptedEmbeddingBackend,
    ScriptedVisionBackend,
)
from dialoguecraft.model import Character, Segment, Theme, VideoManifest
from dialoguecraft.pipeline import BackendSuite, PipelineConfig


def make_manifest(k=2, t=4, seg_len=4.0, video_id="vid", frames_per_segment=4,
                  utterances=None):
    roster = tuple(Character(i, f"person {i}") for i in range(1, k + 1))
    segments = []
    for index in range(1, t + 1):
        start = (index - 1) * seg_len
        end = index * seg_len
        refs = tuple(
            f"{video_id}/{int((start + j * seg_len / frames_per_segment) * 1000)}.jpg"
            for j in range(frames_per_segment)
        )
        text = utterances[index - 1] if utterances else f"original line {index}"
        segments.append(
            Segment(
                index=index,
                start_s=start,
                end_s=end,
                speaker_id=(index - 1) % k + 1,
                frame_refs=refs,
                original_utterance=text,
            )
        )
    return VideoManifest(
        video_id=video_id,
        duration_s=t * seg_len,
        roster=roster,
        segments=tuple(segments),
        first_frame_ref=f"{video_id}/0.jpg",
        metadata=(("speaking_rate_wps", "2.5"),),
    )


def plot_roles_response(k=2):
    roles = [
        {"character_id": i, "name": f"Role{i}", "description": f"role {i} description"}
        for i in range(1, k + 1)
    ]
    return json.dumps({"plot": "A brand new storyline.", "roles": roles})


def predict_response(sentence, plan="think it through"):
    return json.dumps({"plan": plan, "answer": sentence})


def critique_response(theme_ok=True, continuity_ok=True, coherence_ok=True, suggestion=""):
    return json.dumps(
        {
            "theme_contextual": theme_ok,
            "pairwise_continuity": continuity_ok,
            "global_coherence": coherence_ok,
            "suggestion": suggestion,
        }
    )


def vision_queue(t=4, first_frame="two people at a desk"):
    queue = [first_frame]
    for index in range(1, t + 1):
        queue.append(f"gesturing calmly in turn {index}")
        queue.append(f"cheerful in turn {index}")
    return queue


def all_accept_chat_queue(k=2, t=4):
    """Stage 1, then (predict, critique-accept) per turn."""
    queue = [plot_roles_response(k)]
    for index in range(1, t + 1):
        queue.append(predict_response(f"Generated line {index}."))
        queue.append(critique_response())
    return queue


def make_suite(chat_queue, t=4, embedding=True):
    log = CallLog()
    suite = BackendSuite(
        llm=ScriptedChatBackend(chat_queue, log),
        vision=ScriptedVisionBackend(queue=vision_queue(t), call_log=log),
        embedding=ScriptedEmbeddingBackend(dim=8, call_log=log) if embedding else None,
        call_log=log,
    )
    return suite


@pytest.fixture
def manifest():
    return make_manifest()


@pytest.fixture
def theme():
    return Theme("presidential election")


@pytest.fixture
def config():
    return PipelineConfig()
