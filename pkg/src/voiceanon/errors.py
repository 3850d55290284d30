"""Exception types shared across the toolkit."""


class VoiceAnonError(Exception):
    """Base class for all toolkit errors."""


class FormatError(VoiceAnonError):
    """Malformed or unsupported file contents (e.g. non-PCM WAV)."""


class ParameterError(VoiceAnonError, ValueError):
    """A parameter is outside its documented range."""


class InputError(VoiceAnonError, ValueError):
    """Operation input violates a precondition (too short, empty, degenerate)."""


class NumericError(VoiceAnonError):
    """A numeric kernel failed to converge.

    Carries ``frame_index`` when the failure happened inside a framewise
    pipeline, so corpus-level errors can be traced to the offending frame.
    """

    def __init__(self, message: str, frame_index: int | None = None):
        super().__init__(message if frame_index is None
                         else f"{message} (frame {frame_index})")
        self.frame_index = frame_index


class ProtocolError(VoiceAnonError):
    """Manifest / trial bookkeeping violation (parse error, unpaired ids...)."""


class ConfigError(VoiceAnonError):
    """Invalid run configuration (bad method name, colliding seeds...)."""


class MetricUndefinedError(VoiceAnonError):
    """A metric has no defined value for the given inputs."""


class CorpusProcessingError(VoiceAnonError):
    """One or more utterances failed during corpus processing.

    ``failures`` is a list of (utterance_id, exception) pairs; every failure
    is collected before this is raised.
    """

    def __init__(self, failures):
        self.failures = list(failures)
        lines = ", ".join(f"{uid}: {err}" for uid, err in self.failures)
        super().__init__(f"{len(self.failures)} utterance(s) failed: {lines}")
