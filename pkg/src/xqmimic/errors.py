"""Exception types shared across the package.

Every domain error derives from :class:`XqError` so callers (CLI, HTTP
service) can map the whole family to structured error responses.
"""

from __future__ import annotations


class XqError(Exception):
    """Base class for all domain errors."""

    code = "error"


class IllegalMove(XqError):
    """A board action that is not legal in the given position.

    ``legal_moves`` optionally carries the coordinate texts of what was
    playable instead, for error payloads shown to a human.
    """

    code = "illegal_move"

    def __init__(self, message: str, legal_moves: tuple[str, ...] = ()):
        super().__init__(message)
        self.legal_moves = tuple(legal_moves)


class IllegalSequence(XqError):
    """A move sequence whose ``index``-th token cannot be applied."""

    code = "illegal_sequence"

    def __init__(self, index: int, message: str):
        super().__init__(f"move {index}: {message}")
        self.index = index


class ParseError(XqError):
    """Malformed move or record text; ``offset`` points at the bad spot."""

    code = "parse_error"

    def __init__(self, message: str, offset: int = 0):
        super().__init__(message)
        self.offset = offset


class UnknownToken(XqError):
    """Move token outside the enumerated vocabulary."""

    code = "unknown_token"


class IndexOutOfRange(XqError):
    """Class index outside ``0..|V|-1``."""

    code = "index_out_of_range"


class Unresolvable(XqError):
    """Token matches no piece/geometry in the given position."""

    code = "unresolvable"


class Ambiguous(XqError):
    """Token matches more than one piece and carries no usable disambiguator."""

    code = "ambiguous"


class LocallyIllegal(XqError):
    """Token resolves geometrically but the move violates position legality."""

    code = "locally_illegal"


class OutOfVocabulary(XqError):
    """A legal board action that the token scheme cannot express.

    Only arises in freak soldier formations (three on a file, or two
    files doubled at once); see ``movespace`` module notes.
    """

    code = "out_of_vocabulary"


class NoLegalMove(XqError):
    """Filtering was requested in a position with no legal move."""

    code = "no_legal_move"


class InvalidConfig(XqError):
    """Configuration value outside its allowed set."""

    code = "invalid_config"

    def __init__(self, message: str, fields: dict[str, object] | None = None):
        self.fields = dict(fields or {})
        if self.fields:
            detail = ", ".join(f"{k}={v}" for k, v in sorted(self.fields.items()))
            message = f"{message} ({detail})"
        super().__init__(message)


class DivergenceDetected(XqError):
    """Training loss became non-finite; carries the partial epoch history."""

    code = "divergence"

    def __init__(self, message: str, history: object = None):
        super().__init__(message)
        self.history = history


class ChecksumMismatch(XqError):
    """Checkpoint bytes fail their integrity check."""

    code = "checksum_mismatch"


class VocabularyMismatch(XqError):
    """Checkpoint was trained against a different move vocabulary."""

    code = "vocabulary_mismatch"


class UnknownModel(XqError):
    """Requested model id is not in the registry."""

    code = "unknown_model"


class UnknownSession(XqError):
    """Requested session id does not exist."""

    code = "unknown_session"


class NotYourTurn(XqError):
    """Human move submitted when it is the model's turn."""

    code = "not_your_turn"


class SessionFinished(XqError):
    """Move submitted to a session whose game is already decided."""

    code = "session_finished"
