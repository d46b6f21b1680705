"""Exception types shared across the package."""


class HashnetError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(HashnetError):
    """Invalid configuration value; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message


class NarrativeLoadError(HashnetError):
    """Narrative document missing, malformed, or violating an invariant."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message


class BackendUnavailableError(HashnetError):
    """A remote backend failed all retry attempts for one request."""

    def __init__(self, agent_id: int, round_index: int, cause: str = ""):
        detail = f" ({cause})" if cause else ""
        super().__init__(f"backend unavailable for agent {agent_id} in round {round_index}{detail}")
        self.agent_id = agent_id
        self.round_index = round_index


class ReplayGapError(HashnetError):
    """A replay backend has no recorded response for (agent, round)."""

    def __init__(self, agent_id: int, round_index: int):
        super().__init__(f"no recorded response for agent {agent_id} in round {round_index}")
        self.agent_id = agent_id
        self.round_index = round_index


class ParseError(HashnetError):
    """A backend response contained no usable hashtag text."""


class TranscriptError(HashnetError):
    """A transcript file is malformed or violates transcript invariants."""


class MetricError(HashnetError):
    """A metric was requested on inputs outside its domain."""


class EmbedderUnavailableError(HashnetError):
    """The embedding provider could not produce vectors."""
