"""Exception hierarchy shared across the engine.

Exit-code mapping for the CLI lives in cli.py; errors here only carry
enough context to name what went wrong.
"""


class DialogueCraftError(Exception):
    """Base class for all engine errors."""


# -- backend / transport ----------------------------------------------------

class BackendError(DialogueCraftError):
    """Base for model-backend failures."""


class TransportError(BackendError):
    """Network-level failure that persisted past the retry budget."""


class AuthError(BackendError):
    """Authentication rejected; never retried."""


class MalformedResponseError(BackendError):
    """Backend answered, but the payload is unusable."""


class BackendUnavailable(BackendError):
    """No backend configured for the requested capability."""


class FrameNotFound(BackendError):
    """A frame reference did not resolve to a readable file."""


# -- prompting / parsing ----------------------------------------------------

class MissingBinding(DialogueCraftError):
    """A required template placeholder was not bound."""

    def __init__(self, placeholder: str):
        super().__init__(f"missing binding for placeholder {placeholder!r}")
        self.placeholder = placeholder


class ParseError(DialogueCraftError):
    """A model response did not match the expected structure."""


class EmptyGeneration(DialogueCraftError):
    """The model produced an empty utterance after the retry."""


# -- ingest / validation ----------------------------------------------------

class SchemaError(DialogueCraftError):
    """Unsupported or missing schema_version in an on-disk file."""


class ValidationError(DialogueCraftError):
    """Manifest or input data violated a structural invariant."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations) or "validation failed")


class LengthMismatch(DialogueCraftError):
    """Parallel input lists differ in length."""


class EmptyTranscript(DialogueCraftError):
    """An ASR transcript with zero segments cannot become a manifest."""


class NoFramesAvailable(DialogueCraftError):
    """A segment carries no frame references."""


class ToolNotFound(DialogueCraftError):
    """An external executable required by the CLI is missing."""


# -- pipeline ----------------------------------------------------------------

class RoundMismatch(DialogueCraftError):
    """A broadcast targeted agents whose round does not precede the turn's."""
