"""Xiangqi board state, move legality, and replay.

Coordinate convention (used everywhere in this package):
  - file: 1..9, left to right from Red's seat
  - rank: 1..10, rank 1 = Red's back rank, rank 10 = Black's back rank
  - the river lies between ranks 5 and 6
  - palaces: files 4..6 x ranks 1..3 (Red) and files 4..6 x ranks 8..10 (Black)
  - Red moves "forward" toward higher ranks, Black toward lower ranks

Internally a position is a ``bytes`` of 90 piece codes indexed by
``(rank-1)*9 + (file-1)``; states are immutable values, so every
operation here is a pure function and safe to share across threads.

Rule set: piece geometry (horse-leg and elephant-eye blocking, cannon
screens, soldier promotion to sideways movement after the river),
palace/river confinement, the flying-general rule, and loss for the
side left without a legal move.  Repetition and perpetual-chase
adjudication are deliberately not modeled.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Optional, Sequence

from .errors import IllegalMove, ParseError


class Side(enum.Enum):
    RED = "red"
    BLACK = "black"

    @property
    def opponent(self) -> "Side":
        return Side.BLACK if self is Side.RED else Side.RED


class PieceKind(enum.Enum):
    GENERAL = "general"
    ADVISOR = "advisor"
    ELEPHANT = "elephant"
    HORSE = "horse"
    CHARIOT = "chariot"
    CANNON = "cannon"
    SOLDIER = "soldier"


class Outcome(enum.Enum):
    ONGOING = "ongoing"
    RED_WINS = "red_wins"
    BLACK_WINS = "black_wins"


class Square(NamedTuple):
    file: int
    rank: int


class Piece(NamedTuple):
    side: Side
    kind: PieceKind


class MoveAction(NamedTuple):
    from_sq: Square
    to_sq: Square


# Piece codes: 0 empty, 1..7 Red, 9..15 Black (kind code | 8).
_EMPTY = 0
_KIND_CODE = {
    PieceKind.GENERAL: 1,
    PieceKind.ADVISOR: 2,
    PieceKind.ELEPHANT: 3,
    PieceKind.HORSE: 4,
    PieceKind.CHARIOT: 5,
    PieceKind.CANNON: 6,
    PieceKind.SOLDIER: 7,
}
_CODE_KIND = {v: k for k, v in _KIND_CODE.items()}
_BLACK = 8

_GLYPHS = {
    PieceKind.GENERAL: "K",
    PieceKind.ADVISOR: "A",
    PieceKind.ELEPHANT: "E",
    PieceKind.HORSE: "H",
    PieceKind.CHARIOT: "R",
    PieceKind.CANNON: "C",
    PieceKind.SOLDIER: "P",
}
_GLYPH_KIND = {v: k for k, v in _GLYPHS.items()}

_INITIAL_COUNTS = {
    PieceKind.GENERAL: 1,
    PieceKind.ADVISOR: 2,
    PieceKind.ELEPHANT: 2,
    PieceKind.HORSE: 2,
    PieceKind.CHARIOT: 2,
    PieceKind.CANNON: 2,
    PieceKind.SOLDIER: 5,
}


def _idx(file: int, rank: int) -> int:
    return (rank - 1) * 9 + (file - 1)


def _square(idx: int) -> Square:
    return Square(idx % 9 + 1, idx // 9 + 1)


def _code(piece: Piece) -> int:
    c = _KIND_CODE[piece.kind]
    return c | _BLACK if piece.side is Side.BLACK else c


def _piece(code: int) -> Piece:
    return Piece(Side.BLACK if code & _BLACK else Side.RED, _CODE_KIND[code & 7])


# ---------------------------------------------------------------------------
# Precomputed geometry tables, all in 0..89 index space.
# ---------------------------------------------------------------------------

def _on_board(f: int, r: int) -> bool:
    return 1 <= f <= 9 and 1 <= r <= 10


def _build_rays() -> tuple:
    rays = []
    for idx in range(90):
        f, r = idx % 9 + 1, idx // 9 + 1
        per_dir = []
        for df, dr in ((0, 1), (0, -1), (1, 0), (-1, 0)):
            ray = []
            nf, nr = f + df, r + dr
            while _on_board(nf, nr):
                ray.append(_idx(nf, nr))
                nf, nr = nf + df, nr + dr
            per_dir.append(tuple(ray))
        rays.append(tuple(per_dir))
    return tuple(rays)


def _build_horse() -> tuple[tuple, tuple]:
    deltas = ((1, 2), (-1, 2), (1, -2), (-1, -2), (2, 1), (-2, 1), (2, -1), (-2, -1))
    moves = [[] for _ in range(90)]
    rev = [[] for _ in range(90)]
    for idx in range(90):
        f, r = idx % 9 + 1, idx // 9 + 1
        for df, dr in deltas:
            nf, nr = f + df, r + dr
            if not _on_board(nf, nr):
                continue
            # Leg square: one orthogonal step in the long direction.
            if abs(df) == 2:
                leg = _idx(f + df // 2, r)
            else:
                leg = _idx(f, r + dr // 2)
            dest = _idx(nf, nr)
            moves[idx].append((dest, leg))
            rev[dest].append((idx, leg))
    return tuple(tuple(m) for m in moves), tuple(tuple(m) for m in rev)


def _build_elephant() -> dict:
    tables = {}
    for side in Side:
        lo, hi = (1, 5) if side is Side.RED else (6, 10)
        per = []
        for idx in range(90):
            f, r = idx % 9 + 1, idx // 9 + 1
            entries = []
            if lo <= r <= hi:
                for df, dr in ((2, 2), (-2, 2), (2, -2), (-2, -2)):
                    nf, nr = f + df, r + dr
                    if _on_board(nf, nr) and lo <= nr <= hi:
                        entries.append((_idx(nf, nr), _idx(f + df // 2, r + dr // 2)))
            per.append(tuple(entries))
        tables[side] = tuple(per)
    return tables


def _palace(side: Side) -> frozenset[int]:
    ranks = range(1, 4) if side is Side.RED else range(8, 11)
    return frozenset(_idx(f, r) for f in range(4, 7) for r in ranks)


def _build_palace_steps(deltas: Iterable[tuple[int, int]]) -> dict:
    tables = {}
    for side in Side:
        palace = _palace(side)
        per = []
        for idx in range(90):
            entries = []
            if idx in palace:
                f, r = idx % 9 + 1, idx // 9 + 1
                for df, dr in deltas:
                    nf, nr = f + df, r + dr
                    if _on_board(nf, nr) and _idx(nf, nr) in palace:
                        entries.append(_idx(nf, nr))
            per.append(tuple(entries))
        tables[side] = tuple(per)
    return tables


def _build_soldier() -> dict:
    tables = {}
    for side in Side:
        fwd = 1 if side is Side.RED else -1
        per = []
        for idx in range(90):
            f, r = idx % 9 + 1, idx // 9 + 1
            entries = []
            if _on_board(f, r + fwd):
                entries.append(_idx(f, r + fwd))
            crossed = r >= 6 if side is Side.RED else r <= 5
            if crossed:
                for df in (-1, 1):
                    if _on_board(f + df, r):
                        entries.append(_idx(f + df, r))
            per.append(tuple(entries))
        tables[side] = tuple(per)
    return tables


_RAYS = _build_rays()
_HORSE_MOVES, _HORSE_REV = _build_horse()
_ELEPHANT_MOVES = _build_elephant()
_ADVISOR_MOVES = _build_palace_steps(((1, 1), (-1, 1), (1, -1), (-1, -1)))
_GENERAL_MOVES = _build_palace_steps(((0, 1), (0, -1), (1, 0), (-1, 0)))
_SOLDIER_MOVES = _build_soldier()
_PALACES = {side: _palace(side) for side in Side}
# The five palace-diagonal points an advisor may ever occupy.
_ADVISOR_POINTS = {
    Side.RED: frozenset(_idx(f, r) for f, r in ((4, 1), (6, 1), (5, 2), (4, 3), (6, 3))),
    Side.BLACK: frozenset(_idx(f, r) for f, r in ((4, 10), (6, 10), (5, 9), (4, 8), (6, 8))),
}


@dataclass(frozen=True)
class GameState:
    """Immutable position: 90 piece codes, side to move, ply counter."""

    board: bytes
    side_to_move: Side
    ply: int

    def piece_at(self, sq: Square) -> Optional[Piece]:
        code = self.board[_idx(sq.file, sq.rank)]
        return _piece(code) if code else None

    def pieces(self) -> Iterable[tuple[Square, Piece]]:
        for idx, code in enumerate(self.board):
            if code:
                yield _square(idx), _piece(code)


def initial_state() -> GameState:
    """The standard 32-piece starting position, Red to move."""
    board = bytearray(90)
    back = [
        PieceKind.CHARIOT, PieceKind.HORSE, PieceKind.ELEPHANT, PieceKind.ADVISOR,
        PieceKind.GENERAL,
        PieceKind.ADVISOR, PieceKind.ELEPHANT, PieceKind.HORSE, PieceKind.CHARIOT,
    ]
    for f, kind in enumerate(back, start=1):
        board[_idx(f, 1)] = _code(Piece(Side.RED, kind))
        board[_idx(f, 10)] = _code(Piece(Side.BLACK, kind))
    for f in (2, 8):
        board[_idx(f, 3)] = _code(Piece(Side.RED, PieceKind.CANNON))
        board[_idx(f, 8)] = _code(Piece(Side.BLACK, PieceKind.CANNON))
    for f in (1, 3, 5, 7, 9):
        board[_idx(f, 4)] = _code(Piece(Side.RED, PieceKind.SOLDIER))
        board[_idx(f, 7)] = _code(Piece(Side.BLACK, PieceKind.SOLDIER))
    return GameState(bytes(board), Side.RED, 0)


def make_state(placement: dict[Square, Piece], side_to_move: Side, ply: int = 0) -> GameState:
    """Build a state from an explicit placement; validates invariants."""
    board = bytearray(90)
    for sq, piece in placement.items():
        if not _on_board(sq.file, sq.rank):
            raise ValueError(f"square off board: {sq}")
        board[_idx(sq.file, sq.rank)] = _code(piece)
    state = GameState(bytes(board), side_to_move, ply)
    validate_state(state)
    return state


def validate_state(state: GameState) -> None:
    """Raise ``ValueError`` on any violated position invariant."""
    counts = {side: {kind: 0 for kind in PieceKind} for side in Side}
    generals = {}
    for idx, code in enumerate(state.board):
        if not code:
            continue
        piece = _piece(code)
        counts[piece.side][piece.kind] += 1
        f, r = idx % 9 + 1, idx // 9 + 1
        if piece.kind is PieceKind.GENERAL:
            generals[piece.side] = idx
            if idx not in _PALACES[piece.side]:
                raise ValueError(f"{piece.side.value} general outside palace at {(f, r)}")
        elif piece.kind is PieceKind.ADVISOR:
            if idx not in _ADVISOR_POINTS[piece.side]:
                raise ValueError(f"{piece.side.value} advisor off palace diagonals at {(f, r)}")
        elif piece.kind is PieceKind.ELEPHANT:
            limit_ok = r <= 5 if piece.side is Side.RED else r >= 6
            if not limit_ok:
                raise ValueError(f"{piece.side.value} elephant across the river at {(f, r)}")
    for side in Side:
        if counts[side][PieceKind.GENERAL] != 1:
            raise ValueError(f"{side.value} must have exactly one general")
        for kind, n in counts[side].items():
            if n > _INITIAL_COUNTS[kind]:
                raise ValueError(f"too many {side.value} {kind.value}s: {n}")
    if _generals_facing(state.board, generals[Side.RED], generals[Side.BLACK]):
        raise ValueError("generals face each other on an open file")
    if state.ply % 2 != (0 if state.side_to_move is Side.RED else 1):
        raise ValueError("side_to_move inconsistent with ply parity")


def _generals_facing(board: bytes, red_idx: int, black_idx: int) -> bool:
    if red_idx % 9 != black_idx % 9:
        return False
    step = red_idx + 9
    while step < black_idx:
        if board[step]:
            return False
        step += 9
    return True


def _find_general(board: bytes, side: Side) -> int:
    target = _KIND_CODE[PieceKind.GENERAL] | (_BLACK if side is Side.BLACK else 0)
    for idx in _PALACES[side]:
        if board[idx] == target:
            return idx
    raise ValueError(f"no {side.value} general on board")


def _general_attacked(board: bytes, gsq: int, by_black: bool) -> bool:
    """True if the general on ``gsq`` is attacked, or faces the enemy general.

    Advisors and elephants are confined to zones a general can never
    enter, so only chariot, cannon, horse, soldier, and the facing rule
    need testing.
    """
    enemy = _BLACK if by_black else 0
    chariot = _KIND_CODE[PieceKind.CHARIOT] | enemy
    cannon = _KIND_CODE[PieceKind.CANNON] | enemy
    general = _KIND_CODE[PieceKind.GENERAL] | enemy
    horse = _KIND_CODE[PieceKind.HORSE] | enemy
    soldier = _KIND_CODE[PieceKind.SOLDIER] | enemy

    for d, ray in enumerate(_RAYS[gsq]):
        seen_screen = False
        for idx in ray:
            code = board[idx]
            if not code:
                continue
            if not seen_screen:
                if code == chariot:
                    return True
                if code == general and d < 2:  # file rays only: flying general
                    return True
                seen_screen = True
            else:
                if code == cannon:
                    return True
                break

    for src, leg in _HORSE_REV[gsq]:
        if board[src] == horse and not board[leg]:
            return True

    f, r = gsq % 9 + 1, gsq // 9 + 1
    # Enemy soldier one forward step away (black soldiers advance toward
    # rank 1, red toward rank 10), or beside the general once crossed.
    ahead = r + 1 if by_black else r - 1
    if 1 <= ahead <= 10 and board[_idx(f, ahead)] == soldier:
        return True
    crossed_here = r <= 5 if by_black else r >= 6
    if crossed_here:
        for nf in (f - 1, f + 1):
            if 1 <= nf <= 9 and board[_idx(nf, r)] == soldier:
                return True
    return False


def _pseudo_moves(board: bytes, side: Side) -> list[tuple[int, int]]:
    """Geometric moves for ``side`` ignoring general safety."""
    moves = []
    black = side is Side.BLACK
    own_flag = _BLACK if black else 0
    elephant_tbl = _ELEPHANT_MOVES[side]
    advisor_tbl = _ADVISOR_MOVES[side]
    general_tbl = _GENERAL_MOVES[side]
    soldier_tbl = _SOLDIER_MOVES[side]

    for idx in range(90):
        code = board[idx]
        if not code or (code & _BLACK) != own_flag:
            continue
        kind = code & 7
        if kind == 5 or kind == 6:  # chariot / cannon
            is_cannon = kind == 6
            for ray in _RAYS[idx]:
                screened = False
                for t in ray:
                    tc = board[t]
                    if not screened:
                        if not tc:
                            moves.append((idx, t))
                        elif is_cannon:
                            screened = True
                        else:
                            if (tc & _BLACK) != own_flag:
                                moves.append((idx, t))
                            break
                    else:
                        if tc:
                            if (tc & _BLACK) != own_flag:
                                moves.append((idx, t))
                            break
        elif kind == 7:  # soldier
            for t in soldier_tbl[idx]:
                tc = board[t]
                if not tc or (tc & _BLACK) != own_flag:
                    moves.append((idx, t))
        elif kind == 4:  # horse
            for t, leg in _HORSE_MOVES[idx]:
                if board[leg]:
                    continue
                tc = board[t]
                if not tc or (tc & _BLACK) != own_flag:
                    moves.append((idx, t))
        elif kind == 3:  # elephant
            for t, eye in elephant_tbl[idx]:
                if board[eye]:
                    continue
                tc = board[t]
                if not tc or (tc & _BLACK) != own_flag:
                    moves.append((idx, t))
        elif kind == 2:  # advisor
            for t in advisor_tbl[idx]:
                tc = board[t]
                if not tc or (tc & _BLACK) != own_flag:
                    moves.append((idx, t))
        else:  # general
            for t in general_tbl[idx]:
                tc = board[t]
                if not tc or (tc & _BLACK) != own_flag:
                    moves.append((idx, t))
    return moves


def _legal_index_moves(board: bytes, side: Side) -> list[tuple[int, int]]:
    black = side is Side.BLACK
    gidx = _find_general(board, side)
    legal = []
    for frm, to in _pseudo_moves(board, side):
        nb = bytearray(board)
        nb[to] = nb[frm]
        nb[frm] = 0
        gsq = to if frm == gidx else gidx
        if not _general_attacked(bytes(nb), gsq, by_black=not black):
            legal.append((frm, to))
    return legal


def legal_moves(state: GameState) -> set[MoveAction]:
    """All legal moves for the side to move; empty set means the mover loses."""
    return {
        MoveAction(_square(f), _square(t))
        for f, t in _legal_index_moves(state.board, state.side_to_move)
    }


def pseudo_legal_moves(state: GameState) -> set[MoveAction]:
    """Geometric moves for the side to move, ignoring general safety.

    Superset of :func:`legal_moves`; the difference is exactly the moves
    that would expose the mover's general.
    """
    return {
        MoveAction(_square(f), _square(t))
        for f, t in _pseudo_moves(state.board, state.side_to_move)
    }


def _apply_raw(state: GameState, frm: int, to: int) -> GameState:
    nb = bytearray(state.board)
    nb[to] = nb[frm]
    nb[frm] = 0
    return GameState(bytes(nb), state.side_to_move.opponent, state.ply + 1)


def apply_move(state: GameState, action: MoveAction) -> GameState:
    """Apply a legal move, returning the successor state.

    Raises :class:`IllegalMove` when the action is not legal in ``state``.
    """
    frm = _idx(action.from_sq.file, action.from_sq.rank)
    to = _idx(action.to_sq.file, action.to_sq.rank)
    if (frm, to) not in _legal_index_moves(state.board, state.side_to_move):
        raise IllegalMove(f"{action} is not legal in this position")
    return _apply_raw(state, frm, to)


def in_check(state: GameState, side: Side) -> bool:
    """True iff ``side``'s general is attacked or faces the enemy general."""
    gidx = _find_general(state.board, side)
    return _general_attacked(state.board, gidx, by_black=side is Side.RED)


def game_outcome(state: GameState) -> Outcome:
    """The side to move loses when it has no legal move; no draws."""
    if _legal_index_moves(state.board, state.side_to_move):
        return Outcome.ONGOING
    return Outcome.RED_WINS if state.side_to_move is Side.BLACK else Outcome.BLACK_WINS


def perft(state: GameState, depth: int) -> int:
    """Count legal move sequences of exactly ``depth`` plies."""
    if depth < 0:
        raise ValueError("depth must be nonnegative")
    return _perft(state.board, state.side_to_move, depth)


def _perft(board: bytes, side: Side, depth: int) -> int:
    if depth == 0:
        return 1
    moves = _legal_index_moves(board, side)
    if depth == 1:
        return len(moves)
    total = 0
    opponent = side.opponent
    for frm, to in moves:
        nb = bytearray(board)
        nb[to] = nb[frm]
        nb[frm] = 0
        total += _perft(bytes(nb), opponent, depth - 1)
    return total


def board_text(state: GameState) -> str:
    """Render 10 rows of 9 glyphs, rank 10 first; uppercase = Red."""
    rows = []
    for rank in range(10, 0, -1):
        row = []
        for file in range(1, 10):
            code = state.board[_idx(file, rank)]
            if not code:
                row.append(".")
            else:
                piece = _piece(code)
                glyph = _GLYPHS[piece.kind]
                row.append(glyph if piece.side is Side.RED else glyph.lower())
        rows.append("".join(row))
    return "\n".join(rows)


def parse_board_text(text: str, side_to_move: Side = Side.RED, ply: Optional[int] = None) -> GameState:
    """Inverse of :func:`board_text`; used by golden tests and fixtures."""
    rows = [row.strip() for row in text.strip().splitlines()]
    if len(rows) != 10:
        raise ParseError(f"expected 10 board rows, got {len(rows)}")
    placement: dict[Square, Piece] = {}
    for i, row in enumerate(rows):
        if len(row) != 9:
            raise ParseError(f"row {i}: expected 9 glyphs, got {len(row)}", offset=i)
        rank = 10 - i
        for j, glyph in enumerate(row):
            if glyph == ".":
                continue
            kind = _GLYPH_KIND.get(glyph.upper())
            if kind is None:
                raise ParseError(f"row {i}: unknown glyph {glyph!r}", offset=i)
            side = Side.RED if glyph.isupper() else Side.BLACK
            placement[Square(j + 1, rank)] = Piece(side, kind)
    if ply is None:
        ply = 0 if side_to_move is Side.RED else 1
    return make_state(placement, side_to_move, ply)


def piece_count(state: GameState) -> int:
    return sum(1 for code in state.board if code)


def replay(moves: Sequence) -> GameState:
    """Replay a token sequence from the initial position.

    Defers to :func:`xqmimic.movespace.replay` (imported lazily to keep
    this module free of notation concerns).
    """
    from . import movespace

    return movespace.replay(moves)
