"""Game-record parsing and serialization: the ingestion boundary.

Record files are UTF-8 text with LF endings.  Games are separated by
blank lines; each game is a header block followed by numbered move
pairs:

    RedElo: 1250
    BlackElo: 1540
    Result: 1-0
    Id: pk-000017
    1. C2=5 H8+7
    2. H2+3 R9+1

Move text is accepted in two spellings and normalized at parse time:
WXF-style tokens ("C2=5", "+R-3") and coordinate pairs ("h3e3", files
i..a left to right from Red, rank 10 written 0).  Records that fail to
replay are dropped with a diagnostic rather than aborting the parse;
only undecodable bytes are fatal.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from typing import Optional, Sequence

from . import movespace, rules
from .errors import ParseError, XqError
from .movespace import MoveToken
from .rules import GameState, MoveAction, Square


class GameResult(enum.Enum):
    RED_WINS = "1-0"
    BLACK_WINS = "0-1"
    DRAW = "1/2"
    UNKNOWN = "?"


@dataclass(frozen=True)
class GameRecord:
    red_elo: int
    black_elo: int
    result: GameResult
    moves: tuple[MoveToken, ...]
    source_id: str

    @property
    def length(self) -> int:
        return len(self.moves)


@dataclass(frozen=True)
class RecordFile:
    records: tuple[GameRecord, ...]

    def __len__(self) -> int:
        return len(self.records)


@dataclass(frozen=True)
class Diagnostic:
    """One dropped or suspect record, with enough context to find it."""

    source_id: str
    message: str
    ply: Optional[int] = None

    def __str__(self) -> str:
        where = f"{self.source_id}" + (f", move {self.ply}" if self.ply else "")
        return f"{where}: {self.message}"


_ICCS_RE = re.compile(r"^([a-i])(\d)([a-i])(\d)$")


def _iccs_square(letter: str, digit: str) -> Square:
    file = 9 - (ord(letter) - ord("a"))
    rank = 10 if digit == "0" else int(digit)
    return Square(file, rank)


def parse_move_text(text: str, state: GameState) -> MoveToken:
    """Normalize one move in either spelling to a resolved MoveToken.

    The state determines the mover and validates resolvability, so the
    returned token always denotes a legal move in ``state``.
    """
    return _parse_and_resolve(text, state)[0]


def _parse_and_resolve(text: str, state: GameState) -> tuple[MoveToken, MoveAction]:
    coord = _ICCS_RE.match(text)
    if coord is not None:
        frm = _iccs_square(coord.group(1), coord.group(2))
        to = _iccs_square(coord.group(3), coord.group(4))
        token = movespace.tokenize(MoveAction(frm, to), state)
    else:
        token = movespace.parse_token_text(text)
    return token, movespace.resolve(token, state)


def iccs_text(action: MoveAction) -> str:
    """Coordinate spelling of a move, inverse of the coordinate parser."""

    def sq(s: Square) -> str:
        return f"{chr(ord('a') + (9 - s.file))}{s.rank % 10}"

    return sq(action.from_sq) + sq(action.to_sq)


def move_pair_lines(moves: Sequence[MoveToken]) -> list[str]:
    lines = []
    for i in range(0, len(moves), 2):
        pair = " ".join(t.text for t in moves[i : i + 2])
        lines.append(f"{i // 2 + 1}. {pair}")
    return lines


def serialize_record(record: GameRecord) -> str:
    """Canonical text for one game; ``parse ∘ serialize`` is identity."""
    lines = [
        f"RedElo: {record.red_elo}",
        f"BlackElo: {record.black_elo}",
        f"Result: {record.result.value}",
        f"Id: {record.source_id}",
    ]
    lines.extend(move_pair_lines(record.moves))
    return "\n".join(lines) + "\n"


def serialize_record_file(records: Sequence[GameRecord]) -> str:
    return "\n".join(serialize_record(r) for r in records)


_HEADER_RE = re.compile(r"^(\w+):\s*(.*)$")
_MOVE_NUMBER_RE = re.compile(r"^\d+\.$")


def parse_record_file(data: bytes) -> tuple[RecordFile, list[Diagnostic]]:
    """Parse a record file tolerantly.

    Returns the replayable records plus one diagnostic per dropped
    game.  Raises ParseError only when the bytes are not UTF-8.
    """
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"record file is not UTF-8: {exc}") from None

    records: list[GameRecord] = []
    diagnostics: list[Diagnostic] = []
    for number, block in enumerate(_blocks(text), start=1):
        fallback_id = f"game-{number}"
        try:
            records.append(_parse_block(block, fallback_id))
        except _BlockError as exc:
            diagnostics.append(Diagnostic(exc.source_id or fallback_id, exc.message, exc.ply))
    return RecordFile(tuple(records)), diagnostics


class _BlockError(Exception):
    def __init__(self, message: str, source_id: Optional[str] = None, ply: Optional[int] = None):
        super().__init__(message)
        self.message = message
        self.source_id = source_id
        self.ply = ply


def _blocks(text: str) -> list[list[str]]:
    blocks: list[list[str]] = []
    current: list[str] = []
    for raw in text.splitlines():
        line = raw.strip()
        if line:
            current.append(line)
        elif current:
            blocks.append(current)
            current = []
    if current:
        blocks.append(current)
    return blocks


def _parse_block(lines: list[str], fallback_id: str) -> GameRecord:
    headers: dict[str, str] = {}
    move_words: list[str] = []
    for line in lines:
        header = _HEADER_RE.match(line)
        if header and not move_words and header.group(1) in (
            "RedElo", "BlackElo", "Result", "Id",
        ):
            headers[header.group(1)] = header.group(2).strip()
        else:
            move_words.extend(
                w for w in line.split() if not _MOVE_NUMBER_RE.match(w)
            )

    source_id = headers.get("Id", fallback_id)
    try:
        red_elo = int(headers["RedElo"])
        black_elo = int(headers["BlackElo"])
    except KeyError as exc:
        raise _BlockError(f"missing header {exc.args[0]}", source_id)
    except ValueError:
        raise _BlockError("Elo headers must be integers", source_id)
    try:
        result = GameResult(headers.get("Result", "?"))
    except ValueError:
        raise _BlockError(f"unknown result {headers.get('Result')!r}", source_id)

    if not move_words:
        raise _BlockError("game has no moves", source_id)

    state = rules.initial_state()
    tokens: list[MoveToken] = []
    for i, word in enumerate(move_words, start=1):
        try:
            token, action = _parse_and_resolve(word, state)
        except XqError as exc:
            raise _BlockError(f"{word!r}: {exc}", source_id, ply=i)
        state = rules.apply_move(state, action)
        tokens.append(token)
    return GameRecord(red_elo, black_elo, result, tuple(tokens), source_id)
