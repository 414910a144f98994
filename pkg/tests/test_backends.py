import pytest

from dialoguecraft.backends import (
    BackendConfig,
    CallLog,
    ChatMessage,
    ChatRequest,
    EmbeddingRequest,
    PromptTemplate,
    ScriptedChatBackend,
    ScriptedEmbeddingBackend,
    ScriptedVisionBackend,
    TransientFailure,
    VisionRequest,
    render_prompt,
)
from dialoguecraft.errors import (
    AuthError,
    MalformedResponseError,
    MissingBinding,
    TransportError,
)


def req(content="hi"):
    return ChatRequest(messages=(ChatMessage("user", content),))


class TestChatRetry:
    def test_scripted_passthrough(self):
        backend = ScriptedChatBackend(["hello"])
        assert backend.chat(req()) == "hello"

    def test_one_transient_then_ok(self):
        backend = ScriptedChatBackend(
            [TransientFailure(), "ok"],
            config=BackendConfig(max_retries=1, retry_backoff_s=0.0),
        )
        assert backend.chat(req()) == "ok"

    def test_retry_budget_exceeded(self):
        backend = ScriptedChatBackend(
            [TransientFailure(), TransientFailure(), "never"],
            config=BackendConfig(max_retries=1, retry_backoff_s=0.0),
        )
        with pytest.raises(TransportError):
            backend.chat(req())

    def test_auth_errors_never_retried(self):
        backend = ScriptedChatBackend(
            [AuthError("denied"), "would succeed"],
            config=BackendConfig(max_retries=3, retry_backoff_s=0.0),
        )
        with pytest.raises(AuthError):
            backend.chat(req())

    def test_call_log_records_exchange(self):
        log = CallLog()
        backend = ScriptedChatBackend(["reply"], log)
        backend.chat(req("question"))
        entries = log.entries
        assert len(entries) == 1
        assert entries[0]["kind"] == "chat"
        assert entries[0]["request"]["messages"][0]["content"] == "question"
        assert entries[0]["response"] == "reply"

    def test_determinism_across_identical_queues(self):
        queue = ["a", "b", "c"]
        first = [ScriptedChatBackend(list(queue)).chat(req(str(i))) for i in range(3)]
        second = [ScriptedChatBackend(list(queue)).chat(req(str(i))) for i in range(3)]
        assert first == second == ["a", "a", "a"]  # fresh backend each call


class TestScriptedVision:
    def test_keyed_lookup_by_frame_and_kind(self):
        backend = ScriptedVisionBackend(
            keyed={
                ("v/0.jpg", "behavior"): "waves both hands",
                ("v/0.jpg", "emotion"): "visibly excited",
            }
        )
        behavior = backend.perceive(
            VisionRequest(("v/0.jpg",), "Describe this person's behavior.")
        )
        emotion = backend.perceive(
            VisionRequest(("v/0.jpg",), "Describe this person's emotion.")
        )
        assert behavior == "waves both hands"
        assert emotion == "visibly excited"
        assert behavior != emotion

    def test_queue_fallback(self):
        backend = ScriptedVisionBackend(queue=["first", "second"])
        assert backend.perceive(VisionRequest(("x.jpg",), "anything")) == "first"
        assert backend.perceive(VisionRequest(("x.jpg",), "anything")) == "second"

    def test_exhausted_script_raises(self):
        backend = ScriptedVisionBackend()
        with pytest.raises(MalformedResponseError):
            backend.perceive(VisionRequest(("x.jpg",), "anything"))

    def test_empty_frame_list_rejected(self):
        with pytest.raises(ValueError):
            VisionRequest((), "prompt")


class TestEmbedding:
    def test_uniform_dimension(self):
        backend = ScriptedEmbeddingBackend(dim=8)
        vectors = backend.embed(EmbeddingRequest("three word text"))
        assert len(vectors) == 3
        assert all(len(v) == 8 for v in vectors)

    def test_deterministic_per_token(self):
        backend = ScriptedEmbeddingBackend(dim=8)
        a = backend.embed(EmbeddingRequest("alpha"))
        b = backend.embed(EmbeddingRequest("alpha"))
        assert a == b

    def test_empty_input_rejected(self):
        with pytest.raises(ValueError):
            EmbeddingRequest("")


class TestRenderPrompt:
    def test_basic_substitution(self):
        template = PromptTemplate("t", "Theme: {theme}", frozenset({"theme"}))
        assert render_prompt(template, {"theme": "Music"}) == "Theme: Music"

    def test_missing_binding_names_placeholder(self):
        template = PromptTemplate("t", "Theme: {theme}", frozenset({"theme"}))
        with pytest.raises(MissingBinding) as exc_info:
            render_prompt(template, {})
        assert exc_info.value.placeholder == "theme"

    def test_braces_in_bindings_pass_through(self):
        template = PromptTemplate("t", "Value: {value}", frozenset({"value"}))
        out = render_prompt(template, {"value": "literal {braces} stay"})
        assert out == "Value: literal {braces} stay"

    def test_idempotent_when_no_placeholders_remain(self):
        template = PromptTemplate("t", "plain text with {x}", frozenset({"x"}))
        once = render_prompt(template, {"x": "A"})
        again = render_prompt(PromptTemplate("t2", once), {})
        assert once == again

    def test_template_requires_declared_placeholders(self):
        with pytest.raises(ValueError):
            PromptTemplate("t", "no placeholders here", frozenset({"theme"}))


class TestConfigValidation:
    def test_negative_retries_rejected(self):
        with pytest.raises(ValueError):
            BackendConfig(max_retries=-1)

    def test_nonpositive_timeout_rejected(self):
        with pytest.raises(ValueError):
            BackendConfig(timeout_s=0)
