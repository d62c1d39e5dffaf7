"""The move-token label space: enumeration, encoding, and board resolution.

Move tokens are WXF-style and side-relative, so Red's and Black's
identically written moves share one class.  A token is four fields:

  - piece letter: K A E H R C P
  - either an origin file (1..9, counted from the mover's right) or a
    Front/Rear prefix when two like pieces double on one file
  - operator: ``+`` forward (toward the opponent), ``-`` backward,
    ``=`` traverse (same rank)
  - argument: step count for straight forward/backward moves of
    K/R/C/P; destination file for traverses and for A/E/H

``enumerate_vocabulary`` builds every token that some reachable
arrangement of pieces could produce, by direct case analysis over the
movement rules.  The count lands at 745; triple-soldier columns, which
trained-game data essentially never produces, are deliberately outside
the space (see ``tokenize``), which is where a commonly quoted figure
of 755 for this label space differs: that figure admits ten extra
middle-soldier forms.

File numbering is side-relative: a Red piece on board file f has token
file f, a Black piece has token file 10 - f.  Ranks never appear in
tokens; the operator plus argument pin the destination.
"""

from __future__ import annotations

import enum
import functools
import re
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence

import numpy as np

from . import rules
from .errors import (
    Ambiguous,
    IllegalSequence,
    IndexOutOfRange,
    LocallyIllegal,
    OutOfVocabulary,
    ParseError,
    UnknownToken,
    Unresolvable,
)
from .rules import GameState, MoveAction, PieceKind, Side, Square


class Tandem(enum.Enum):
    FRONT = "front"
    REAR = "rear"


class Operator(enum.Enum):
    FORWARD = "+"
    BACKWARD = "-"
    TRAVERSE = "="


_LETTERS = {
    PieceKind.GENERAL: "K",
    PieceKind.ADVISOR: "A",
    PieceKind.ELEPHANT: "E",
    PieceKind.HORSE: "H",
    PieceKind.CHARIOT: "R",
    PieceKind.CANNON: "C",
    PieceKind.SOLDIER: "P",
}
_LETTER_KIND = {v: k for k, v in _LETTERS.items()}

_KIND_ORDER = {kind: i for i, kind in enumerate(_LETTERS)}
_TANDEM_ORDER = {None: 0, Tandem.FRONT: 1, Tandem.REAR: 2}
_OP_ORDER = {Operator.FORWARD: 0, Operator.BACKWARD: 1, Operator.TRAVERSE: 2}

# Pieces whose forward/backward argument counts steps rather than naming
# the destination file.
_STRAIGHT = frozenset(
    {PieceKind.GENERAL, PieceKind.CHARIOT, PieceKind.CANNON, PieceKind.SOLDIER}
)


@dataclass(frozen=True)
class MoveToken:
    piece: PieceKind
    disambiguator: Optional[Tandem]
    origin_file: Optional[int]
    operator: Operator
    argument: int

    def __post_init__(self) -> None:
        if (self.disambiguator is None) == (self.origin_file is None):
            raise ValueError("exactly one of disambiguator/origin_file required")
        if self.origin_file is not None and not 1 <= self.origin_file <= 9:
            raise ValueError(f"origin_file out of range: {self.origin_file}")
        if not 1 <= self.argument <= 9:
            raise ValueError(f"argument out of range: {self.argument}")
        if self.operator is Operator.TRAVERSE:
            if self.piece in (PieceKind.ADVISOR, PieceKind.ELEPHANT, PieceKind.HORSE):
                raise ValueError(f"{self.piece.value} moves always change rank")
            if (
                self.piece is PieceKind.SOLDIER
                and self.origin_file is not None
                and abs(self.argument - self.origin_file) != 1
            ):
                raise ValueError("soldier traverse shifts exactly one file")

    @property
    def text(self) -> str:
        letter = _LETTERS[self.piece]
        if self.disambiguator is None:
            prefix = f"{letter}{self.origin_file}"
        else:
            sign = "+" if self.disambiguator is Tandem.FRONT else "-"
            prefix = f"{sign}{letter}"
        return f"{prefix}{self.operator.value}{self.argument}"

    def __str__(self) -> str:
        return self.text


def _sort_key(token: MoveToken) -> tuple:
    return (
        _KIND_ORDER[token.piece],
        _TANDEM_ORDER[token.disambiguator],
        token.origin_file or 0,
        _OP_ORDER[token.operator],
        token.argument,
    )


_TOKEN_RE = re.compile(r"^(?:([+-])([KAEHRCP])|([KAEHRCP])([1-9]))([+\-=])([1-9])$")


def parse_token_text(text: str) -> MoveToken:
    """Parse canonical token text such as ``C2=5`` or ``+H-3``."""
    match = _TOKEN_RE.match(text)
    if match is None:
        raise ParseError(f"not a move token: {text!r}")
    sign, tandem_letter, solo_letter, origin, op, arg = match.groups()
    try:
        if sign is not None:
            return MoveToken(
                piece=_LETTER_KIND[tandem_letter],
                disambiguator=Tandem.FRONT if sign == "+" else Tandem.REAR,
                origin_file=None,
                operator=Operator(op),
                argument=int(arg),
            )
        return MoveToken(
            piece=_LETTER_KIND[solo_letter],
            disambiguator=None,
            origin_file=int(origin),
            operator=Operator(op),
            argument=int(arg),
        )
    except ValueError as exc:
        raise ParseError(f"ill-formed token {text!r}: {exc}") from None


# ---------------------------------------------------------------------------
# Side-relative frame
# ---------------------------------------------------------------------------

def token_file(board_file: int, side: Side) -> int:
    """Board file → mover-relative file (an involution per side)."""
    return board_file if side is Side.RED else 10 - board_file


def board_file(tok_file: int, side: Side) -> int:
    return tok_file if side is Side.RED else 10 - tok_file


def _forward_sign(side: Side) -> int:
    return 1 if side is Side.RED else -1


# ---------------------------------------------------------------------------
# Vocabulary enumeration: constructive case analysis
# ---------------------------------------------------------------------------

def _solo_origins(kind: PieceKind) -> Iterator[Square]:
    """Squares a lone piece of this kind can ever occupy (Red frame)."""
    if kind is PieceKind.GENERAL:
        for f in (4, 5, 6):
            for r in (1, 2, 3):
                yield Square(f, r)
    elif kind is PieceKind.ADVISOR:
        for f, r in ((4, 1), (6, 1), (5, 2), (4, 3), (6, 3)):
            yield Square(f, r)
    elif kind is PieceKind.ELEPHANT:
        for f, r in ((3, 1), (7, 1), (1, 3), (5, 3), (9, 3), (3, 5), (7, 5)):
            yield Square(f, r)
    elif kind is PieceKind.SOLDIER:
        # Before crossing a soldier only ever stands on its starting file
        # at rank 4 or 5; after crossing, sideways steps reach any file.
        for r in (4, 5):
            for f in (1, 3, 5, 7, 9):
                yield Square(f, r)
        for r in range(6, 11):
            for f in range(1, 10):
                yield Square(f, r)
    else:
        for r in range(1, 11):
            for f in range(1, 10):
                yield Square(f, r)


def _solo_destinations(kind: PieceKind, sq: Square) -> Iterator[Square]:
    """Geometric destinations on an otherwise-empty board (Red frame)."""
    f, r = sq
    if kind is PieceKind.GENERAL:
        for df, dr in ((0, 1), (0, -1), (1, 0), (-1, 0)):
            if 4 <= f + df <= 6 and 1 <= r + dr <= 3:
                yield Square(f + df, r + dr)
    elif kind is PieceKind.ADVISOR:
        for df in (-1, 1):
            for dr in (-1, 1):
                if 4 <= f + df <= 6 and 1 <= r + dr <= 3:
                    yield Square(f + df, r + dr)
    elif kind is PieceKind.ELEPHANT:
        for df in (-2, 2):
            for dr in (-2, 2):
                if 1 <= f + df <= 9 and 1 <= r + dr <= 5:
                    yield Square(f + df, r + dr)
    elif kind is PieceKind.HORSE:
        for df, dr in ((1, 2), (-1, 2), (1, -2), (-1, -2), (2, 1), (-2, 1), (2, -1), (-2, -1)):
            if 1 <= f + df <= 9 and 1 <= r + dr <= 10:
                yield Square(f + df, r + dr)
    elif kind is PieceKind.SOLDIER:
        if r < 10:
            yield Square(f, r + 1)
        if r >= 6:
            for df in (-1, 1):
                if 1 <= f + df <= 9:
                    yield Square(f + df, r)
    else:  # chariot, cannon: full lines (captures never extend the line)
        for g in range(1, 10):
            if g != f:
                yield Square(g, r)
        for s in range(1, 11):
            if s != r:
                yield Square(f, s)


def _move_fields(kind: PieceKind, frm: Square, to: Square) -> tuple[Operator, int]:
    """Operator and argument for a Red-frame move of this kind."""
    dr = to.rank - frm.rank
    if dr == 0:
        return Operator.TRAVERSE, to.file
    op = Operator.FORWARD if dr > 0 else Operator.BACKWARD
    if kind in _STRAIGHT:
        return op, abs(dr)
    return op, to.file


def _solo_tokens() -> Iterator[MoveToken]:
    for kind in PieceKind:
        for sq in _solo_origins(kind):
            for to in _solo_destinations(kind, sq):
                op, arg = _move_fields(kind, sq, to)
                yield MoveToken(kind, None, sq.file, op, arg)


def _tandem_pairs(kind: PieceKind, file: int) -> Iterator[tuple[int, int]]:
    """(front_rank, rear_rank) pairs two like pieces can ever reach."""
    if kind is PieceKind.SOLDIER:
        # A second soldier only joins a file by a post-river sideways
        # step, so the front one has always crossed.
        rear_ranks = ([4, 5] if file % 2 == 1 else []) + list(range(6, 10))
        for rear in rear_ranks:
            for front in range(max(6, rear + 1), 11):
                yield front, rear
    else:
        for rear in range(1, 10):
            for front in range(rear + 1, 11):
                yield front, rear


def _tandem_mover_destinations(
    kind: PieceKind, mover: Square, partner: Square
) -> Iterator[Square]:
    """Destinations with only the partner present (screen or obstacle)."""
    if kind is PieceKind.HORSE:
        for to in _solo_destinations(kind, mover):
            df = to.file - mover.file
            if abs(df) == 2:
                leg = Square(mover.file + df // 2, mover.rank)
            else:
                leg = Square(mover.file, mover.rank + (to.rank - mover.rank) // 2)
            if leg != partner and to != partner:
                yield to
        return
    if kind is PieceKind.SOLDIER:
        for to in _solo_destinations(kind, mover):
            if to != partner:
                yield to
        return
    # Chariot and cannon share a file with the partner; along that file
    # the partner blocks slides, and for the cannon doubles as a screen.
    for to in _solo_destinations(kind, mover):
        if to == partner:
            continue
        if to.file != mover.file:
            yield to
            continue
        between = (
            min(mover.rank, to.rank) < partner.rank < max(mover.rank, to.rank)
        )
        if not between:
            yield to
        elif kind is PieceKind.CANNON:
            yield to  # capture over the partner screen


def _tandem_tokens() -> Iterator[MoveToken]:
    for kind in (PieceKind.HORSE, PieceKind.CHARIOT, PieceKind.CANNON, PieceKind.SOLDIER):
        for file in range(1, 10):
            for front_rank, rear_rank in _tandem_pairs(kind, file):
                front = Square(file, front_rank)
                rear = Square(file, rear_rank)
                for tag, mover, partner in (
                    (Tandem.FRONT, front, rear),
                    (Tandem.REAR, rear, front),
                ):
                    for to in _tandem_mover_destinations(kind, mover, partner):
                        op, arg = _move_fields(kind, mover, to)
                        yield MoveToken(kind, tag, None, op, arg)


@dataclass(frozen=True)
class MoveVocabulary:
    """Immutable, deterministically ordered token ↔ index bijection."""

    tokens: tuple[MoveToken, ...]

    @functools.cached_property
    def _index(self) -> dict[MoveToken, int]:
        return {token: i for i, token in enumerate(self.tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: MoveToken) -> bool:
        return token in self._index

    def encode(self, token: MoveToken) -> int:
        try:
            return self._index[token]
        except KeyError:
            raise UnknownToken(f"token not in vocabulary: {token}") from None

    def decode(self, index: int) -> MoveToken:
        if not 0 <= index < len(self.tokens):
            raise IndexOutOfRange(f"index {index} outside 0..{len(self.tokens) - 1}")
        return self.tokens[index]

    def manifest_text(self) -> str:
        """One canonical token per line; line number = index."""
        return "\n".join(t.text for t in self.tokens) + "\n"


@functools.lru_cache(maxsize=1)
def enumerate_vocabulary() -> MoveVocabulary:
    """Every token some reachable arrangement can produce, stably ordered."""
    tokens = set(_solo_tokens()) | set(_tandem_tokens())
    return MoveVocabulary(tuple(sorted(tokens, key=_sort_key)))


# ---------------------------------------------------------------------------
# Resolution: token → board action
# ---------------------------------------------------------------------------

def _own_squares(state: GameState, kind: PieceKind) -> list[Square]:
    side = state.side_to_move
    return [sq for sq, piece in state.pieces() if piece.side is side and piece.kind is kind]


def _destination(sq: Square, kind: PieceKind, op: Operator, arg: int, side: Side) -> Optional[Square]:
    """Arithmetic destination of a token applied at ``sq``, if on board."""
    fwd = _forward_sign(side)
    if op is Operator.TRAVERSE:
        g = board_file(arg, side)
        if kind in _STRAIGHT:
            if kind is PieceKind.GENERAL and abs(g - sq.file) != 1:
                return None
            if kind is PieceKind.SOLDIER and abs(g - sq.file) != 1:
                return None
            if g == sq.file:
                return None
            return Square(g, sq.rank)
        return None  # A/E/H always change rank
    sign = fwd if op is Operator.FORWARD else -fwd
    if kind in _STRAIGHT:
        if kind in (PieceKind.GENERAL, PieceKind.SOLDIER) and arg != 1:
            return None
        rank = sq.rank + sign * arg
        return Square(sq.file, rank) if 1 <= rank <= 10 else None
    g = board_file(arg, side)
    df = abs(g - sq.file)
    if kind is PieceKind.ADVISOR:
        step = 1
    elif kind is PieceKind.ELEPHANT:
        step = 2
    elif df in (1, 2):  # horse: long leg determines rank change
        step = 3 - df
    else:
        return None
    if kind is not PieceKind.HORSE and df != step:
        return None
    rank = sq.rank + sign * step
    return Square(g, rank) if 1 <= rank <= 10 else None


def _rank_order(squares: list[Square], side: Side) -> list[Square]:
    """Sort front (nearest the opponent) first."""
    return sorted(squares, key=lambda s: s.rank, reverse=side is Side.RED)


def resolve(token: MoveToken, state: GameState) -> MoveAction:
    """The unique board action ``token`` denotes for the side to move.

    Raises Unresolvable when no piece/geometry matches, Ambiguous when
    the token underdetermines the piece, and LocallyIllegal when the
    move exists geometrically but would expose the mover's general.
    """
    side = state.side_to_move
    squares = _own_squares(state, token.piece)

    if token.disambiguator is None:
        bf = board_file(token.origin_file, side)
        on_file = [sq for sq in squares if sq.file == bf]
        if not on_file:
            raise Unresolvable(f"no {token.piece.value} on file {token.origin_file}")
        if token.piece in (PieceKind.ADVISOR, PieceKind.ELEPHANT):
            # Operator and argument single out one of a doubled pair.
            matched = []
            for sq in on_file:
                to = _destination(sq, token.piece, token.operator, token.argument, side)
                if to is not None and _zone_ok(token.piece, side, to):
                    matched.append((sq, to))
            if not matched:
                raise Unresolvable(f"{token} matches no {token.piece.value} move")
            if len(matched) > 1:
                raise Ambiguous(f"{token} matches several pieces")
            origin, dest = matched[0]
        else:
            if len(on_file) > 1:
                raise Ambiguous(
                    f"{len(on_file)} {token.piece.value}s on file {token.origin_file}; use +/-"
                )
            origin = on_file[0]
            dest = _destination(origin, token.piece, token.operator, token.argument, side)
    else:
        doubled = _doubled_file(squares, token.piece)
        origin_pair = _rank_order(doubled, side)
        origin = origin_pair[0] if token.disambiguator is Tandem.FRONT else origin_pair[1]
        dest = _destination(origin, token.piece, token.operator, token.argument, side)

    if dest is None or not _zone_ok(token.piece, side, dest):
        raise Unresolvable(f"{token} has no on-board destination here")
    action = MoveAction(origin, dest)
    if action in rules.legal_moves(state):
        return action
    if action in rules.pseudo_legal_moves(state):
        raise LocallyIllegal(f"{token} would expose the general")
    raise Unresolvable(f"{token} is geometrically impossible here")


def _doubled_file(squares: list[Square], kind: PieceKind) -> list[Square]:
    by_file: dict[int, list[Square]] = {}
    for sq in squares:
        by_file.setdefault(sq.file, []).append(sq)
    multi = {f: sqs for f, sqs in by_file.items() if len(sqs) >= 2}
    if not multi:
        raise Unresolvable(f"no doubled {kind.value} file")
    if len(multi) > 1:
        raise Ambiguous(f"{kind.value}s doubled on several files")
    (sqs,) = multi.values()
    if len(sqs) > 2:
        raise Unresolvable(f"{len(sqs)} {kind.value}s on one file are not addressable")
    return sqs


def _zone_ok(kind: PieceKind, side: Side, to: Square) -> bool:
    """Palace and river confinement for the destination square."""
    if kind in (PieceKind.GENERAL, PieceKind.ADVISOR):
        if not 4 <= to.file <= 6:
            return False
        return to.rank <= 3 if side is Side.RED else to.rank >= 8
    if kind is PieceKind.ELEPHANT:
        return to.rank <= 5 if side is Side.RED else to.rank >= 6
    return True


# ---------------------------------------------------------------------------
# Tokenization: board action → token
# ---------------------------------------------------------------------------

def tokenize(action: MoveAction, state: GameState) -> MoveToken:
    """Inverse of :func:`resolve` for legal actions.

    Raises OutOfVocabulary for soldier formations the grammar cannot
    address uniquely: three on one file, or doubled pairs on two files.
    """
    piece = state.piece_at(action.from_sq)
    if piece is None or piece.side is not state.side_to_move:
        raise Unresolvable(f"no piece of the mover at {action.from_sq}")
    return _tokenize_given(action, piece.kind, piece.side, _own_squares(state, piece.kind))


def _tokenize_given(
    action: MoveAction, kind: PieceKind, side: Side, squares: list[Square]
) -> MoveToken:
    on_file = [sq for sq in squares if sq.file == action.from_sq.file]

    frm, to = action.from_sq, action.to_sq
    rel_dr = (to.rank - frm.rank) * _forward_sign(side)
    if rel_dr == 0:
        op = Operator.TRAVERSE
        arg = token_file(to.file, side)
    else:
        op = Operator.FORWARD if rel_dr > 0 else Operator.BACKWARD
        arg = abs(rel_dr) if kind in _STRAIGHT else token_file(to.file, side)

    needs_tandem = len(on_file) >= 2 and kind not in (PieceKind.ADVISOR, PieceKind.ELEPHANT)
    if needs_tandem:
        if len(on_file) > 2:
            raise OutOfVocabulary(f"three {kind.value}s on a file have no token form")
        others = {sq.file for sq in squares if sq.file != frm.file}
        doubled_elsewhere = any(
            sum(1 for sq in squares if sq.file == f) >= 2 for f in others
        )
        if doubled_elsewhere:
            raise OutOfVocabulary(f"{kind.value} pairs on two files have no token form")
        front = _rank_order(on_file, side)[0]
        tag = Tandem.FRONT if frm == front else Tandem.REAR
        return MoveToken(kind, tag, None, op, arg)
    return MoveToken(kind, None, token_file(frm.file, side), op, arg)


def locally_legal_mask(state: GameState, vocabulary: Optional[MoveVocabulary] = None) -> np.ndarray:
    """Boolean vector over the vocabulary: which classes are playable here.

    Freak soldier formations (see :func:`tokenize`) contribute no mask
    entry; for every position arising in recorded games the number of
    true entries equals the number of legal moves.
    """
    vocab = vocabulary or enumerate_vocabulary()
    mask = np.zeros(len(vocab), dtype=bool)
    side = state.side_to_move
    squares_by_kind: dict[PieceKind, list[Square]] = {}
    for sq, piece in state.pieces():
        if piece.side is side:
            squares_by_kind.setdefault(piece.kind, []).append(sq)
    for action in rules.legal_moves(state):
        piece = state.piece_at(action.from_sq)
        try:
            token = _tokenize_given(action, piece.kind, side, squares_by_kind[piece.kind])
            mask[vocab.encode(token)] = True
        except OutOfVocabulary:
            continue
    return mask


# ---------------------------------------------------------------------------
# Replay
# ---------------------------------------------------------------------------

def replay_states(tokens: Sequence[MoveToken]) -> list[GameState]:
    """States visited when playing ``tokens`` from the start; length l + 1.

    Raises IllegalSequence naming the first offending token index.
    """
    state = rules.initial_state()
    states = [state]
    for i, token in enumerate(tokens):
        try:
            action = resolve(token, state)
        except (Unresolvable, Ambiguous, LocallyIllegal) as exc:
            raise IllegalSequence(i, f"move {i + 1} ({token}): {exc}") from exc
        state = rules.apply_move(state, action)
        states.append(state)
    return states


def replay(tokens: Sequence[MoveToken]) -> GameState:
    """Final state after playing ``tokens`` from the initial position."""
    return replay_states(tokens)[-1]
