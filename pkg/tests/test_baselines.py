import pytest

from dialoguecraft.backends import CallLog, ScriptedChatBackend
from dialoguecraft.baselines import (
    image_baseline,
    last_k_prediction,
    text_baseline,
)
from dialoguecraft.errors import BackendUnavailable, ParseError
from dialoguecraft.model import Plot, Role, Theme
from dialoguecraft.pipeline import PipelineConfig, run_dialogue
from conftest import (
    all_accept_chat_queue,
    critique_response,
    make_manifest,
    make_suite,
    plot_roles_response,
    predict_response,
)

THEME = Theme("presidential election")
PLOT = Plot("Two rivals on the trail.", THEME)
ROLES = (Role(1, "Candidate", "runs for office"), Role(2, "Reporter", "asks questions"))
PERCEPTIONS = tuple((f"gesture {i}", f"mood {i}") for i in range(1, 5))
ORIGINALS = tuple(f"original line {i}" for i in range(1, 5))


def good_lines():
    # speakers alternate 1, 2, 1, 2 in the default manifest
    return "\n".join(
        f"{ROLES[(i - 1) % 2].name}: Baseline line {i}." for i in range(1, 5)
    )


class TestTextBaseline:
    def test_well_formed_response(self, manifest):
        llm = ScriptedChatBackend([good_lines()])
        transcript = text_baseline(
            manifest, THEME, PLOT, ROLES, PERCEPTIONS, ORIGINALS, llm
        )
        assert transcript.method == "text_baseline"
        assert len(transcript.turns) == 4
        assert transcript.turns[0].sentence == "Baseline line 1."
        assert transcript.turns[0].speaker_id == 1
        assert transcript.turns[1].speaker_id == 2

    def test_role_names_matched_case_insensitively(self, manifest):
        raw = good_lines().replace("Candidate:", "CANDIDATE:")
        llm = ScriptedChatBackend([raw])
        transcript = text_baseline(
            manifest, THEME, PLOT, ROLES, PERCEPTIONS, ORIGINALS, llm
        )
        assert len(transcript.turns) == 4

    def test_chatter_lines_ignored(self, manifest):
        raw = "Here is the dialogue you asked for.\n" + good_lines() + "\nHope it helps!"
        llm = ScriptedChatBackend([raw])
        transcript = text_baseline(
            manifest, THEME, PLOT, ROLES, PERCEPTIONS, ORIGINALS, llm
        )
        assert len(transcript.turns) == 4

    def test_three_lines_for_four_turns_fails_after_reask(self, manifest):
        short = "\n".join(good_lines().splitlines()[:3])
        llm = ScriptedChatBackend([short, short])
        with pytest.raises(ParseError):
            text_baseline(manifest, THEME, PLOT, ROLES, PERCEPTIONS, ORIGINALS, llm)

    def test_reask_recovers(self, manifest):
        short = "\n".join(good_lines().splitlines()[:3])
        llm = ScriptedChatBackend([short, good_lines()])
        transcript = text_baseline(
            manifest, THEME, PLOT, ROLES, PERCEPTIONS, ORIGINALS, llm
        )
        assert len(transcript.turns) == 4

    def test_wrong_speaker_order_rejected(self, manifest):
        swapped = "\n".join(
            f"{ROLES[i % 2].name}: Line {i}." for i in range(1, 5)  # starts with Reporter
        )
        llm = ScriptedChatBackend([swapped, swapped])
        with pytest.raises(ParseError):
            text_baseline(manifest, THEME, PLOT, ROLES, PERCEPTIONS, ORIGINALS, llm)

    def test_single_generation_call(self, manifest):
        log = CallLog()
        llm = ScriptedChatBackend([good_lines()], log)
        text_baseline(manifest, THEME, PLOT, ROLES, PERCEPTIONS, ORIGINALS, llm)
        assert len([e for e in log.entries if e["kind"] == "chat"]) == 1

    def test_prompt_carries_perceptions_and_originals(self, manifest):
        log = CallLog()
        llm = ScriptedChatBackend([good_lines()], log)
        text_baseline(manifest, THEME, PLOT, ROLES, PERCEPTIONS, ORIGINALS, llm)
        prompt = log.entries[0]["request"]["messages"][0]["content"]
        assert "gesture 3" in prompt and "mood 2" in prompt
        assert "original line 1" in prompt
        assert "presidential election" in prompt


class TestImageBaseline:
    def test_one_key_frame_attachment_per_segment(self, manifest):
        log = CallLog()
        llm = ScriptedChatBackend([good_lines()], log)
        transcript = image_baseline(
            manifest, THEME, PLOT, ROLES, PERCEPTIONS, ORIGINALS, llm
        )
        assert transcript.method == "image_baseline"
        attachments = log.entries[0]["request"]["attachments"]
        assert len(attachments) == 4
        # middle frame of each 4-frame segment is index 1 (0-based (n-1)//2)
        assert attachments[0] == manifest.segments[0].frame_refs[1]

    def test_text_only_backend_refused(self, manifest):
        llm = ScriptedChatBackend([good_lines()])
        llm.supports_images = False
        with pytest.raises(BackendUnavailable):
            image_baseline(manifest, THEME, PLOT, ROLES, PERCEPTIONS, ORIGINALS, llm)


class TestCallCountContrast:
    def test_pipeline_uses_at_least_one_call_per_turn(self, manifest, theme, config):
        suite = make_suite(all_accept_chat_queue())
        run_dialogue(manifest, theme, config, suite)
        chat_calls = [e for e in suite.call_log.entries if e["kind"] == "chat"]
        # stage 1 + (predict + critique) per turn
        assert len(chat_calls) == 1 + 2 * len(manifest.segments)
        baseline_log = CallLog()
        llm = ScriptedChatBackend([good_lines()], baseline_log)
        text_baseline(manifest, theme, PLOT, ROLES, PERCEPTIONS, ORIGINALS, llm)
        assert len(baseline_log.entries) < len(chat_calls)


class TestLastKPrediction:
    def held_out_manifest(self):
        return make_manifest(
            utterances=[
                "visible opener",
                "visible reply",
                "HELDOUT-ALPHA secret",
                "HELDOUT-BETA secret",
            ]
        )

    def tail_chat_queue(self, k=2):
        queue = [plot_roles_response()]
        for index in range(1, k + 1):
            queue.append(predict_response(f"Predicted line {index}."))
            queue.append(critique_response())
        return queue

    def test_pipeline_method_returns_k_sentences(self, config):
        manifest = self.held_out_manifest()
        suite = make_suite(self.tail_chat_queue(), t=2)
        sentences = last_k_prediction(manifest, 2, "pipeline", suite, config)
        assert sentences == ["Predicted line 1.", "Predicted line 2."]

    def test_held_out_text_never_reaches_generation_prompts(self, config):
        manifest = self.held_out_manifest()
        suite = make_suite(self.tail_chat_queue(), t=2)
        last_k_prediction(manifest, 2, "pipeline", suite, config)
        chat_entries = [e for e in suite.call_log.entries if e["kind"] == "chat"]
        # Stage 1 sees the full original dialogue by design; every later
        # generation call must not contain the held-out ground truth.
        for entry in chat_entries[1:]:
            for message in entry["request"]["messages"]:
                assert "HELDOUT-ALPHA" not in message["content"]
                assert "HELDOUT-BETA" not in message["content"]
        # the visible prefix is still there to condition on
        later = " ".join(
            m["content"] for e in chat_entries[1:] for m in e["request"]["messages"]
        )
        assert "visible opener" in later

    def test_text_baseline_method(self, config):
        manifest = self.held_out_manifest()
        lines = "Role1: Tail line one.\nRole2: Tail line two."
        suite = make_suite([plot_roles_response(), lines], t=2)
        sentences = last_k_prediction(manifest, 2, "text_baseline", suite, config)
        assert sentences == ["Tail line one.", "Tail line two."]

    @pytest.mark.parametrize("k", [0, 4, 9])
    def test_k_out_of_range(self, config, k):
        manifest = self.held_out_manifest()
        with pytest.raises(ValueError):
            last_k_prediction(manifest, k, "pipeline", make_suite([]), config)

    def test_unknown_method(self, config):
        manifest = self.held_out_manifest()
        with pytest.raises(ValueError):
            last_k_prediction(manifest, 2, "image_baseline", make_suite([]), config)
