"""Brute-force move-token enumerator used to audit the vocabulary.

Counts token texts by physically placing pieces (solo and doubled) on
otherwise-empty boards and collecting every geometric move the naive
predicates allow, including cannon captures staged with dummy screens
and targets.  Token texts are written by a local, self-contained
notation writer.  Nothing is shared with the production enumeration,
which works by closed case analysis instead.
"""

from __future__ import annotations

from oracles import can_move
from xqmimic.rules import Piece, PieceKind, Side, Square

_LETTER = {
    PieceKind.GENERAL: "K",
    PieceKind.ADVISOR: "A",
    PieceKind.ELEPHANT: "E",
    PieceKind.HORSE: "H",
    PieceKind.CHARIOT: "R",
    PieceKind.CANNON: "C",
    PieceKind.SOLDIER: "P",
}
_STEP_COUNTED = "KRCP"  # straight movers: forward/backward argument = steps


def write_token(side: Side, kind: PieceKind, frm: Square, to: Square, tandem: str | None) -> str:
    """Side-relative WXF text for one move, written from first principles."""
    letter = _LETTER[kind]
    rel = (lambda f: f) if side is Side.RED else (lambda f: 10 - f)
    dr = (to.rank - frm.rank) * (1 if side is Side.RED else -1)
    if dr == 0:
        op, arg = "=", rel(to.file)
    else:
        op = "+" if dr > 0 else "-"
        arg = abs(dr) if letter in _STEP_COUNTED else rel(to.file)
    if tandem is None:
        return f"{letter}{rel(frm.file)}{op}{arg}"
    return f"{'+' if tandem == 'front' else '-'}{letter}{op}{arg}"


def _occupiable(kind: PieceKind, side: Side) -> list[Square]:
    """Squares a piece of this kind can ever reach in a real game."""
    red_points = {
        PieceKind.GENERAL: [(f, r) for f in (4, 5, 6) for r in (1, 2, 3)],
        PieceKind.ADVISOR: [(4, 1), (6, 1), (5, 2), (4, 3), (6, 3)],
        PieceKind.ELEPHANT: [(3, 1), (7, 1), (1, 3), (5, 3), (9, 3), (3, 5), (7, 5)],
    }
    if kind in red_points:
        pts = red_points[kind]
        if side is Side.BLACK:
            pts = [(f, 11 - r) for f, r in pts]
        return [Square(f, r) for f, r in pts]
    if kind is PieceKind.SOLDIER:
        # Unmoved or advanced one: own start files; after the river: anywhere.
        if side is Side.RED:
            near = [(f, r) for r in (4, 5) for f in (1, 3, 5, 7, 9)]
            far = [(f, r) for r in range(6, 11) for f in range(1, 10)]
        else:
            near = [(f, r) for r in (7, 6) for f in (1, 3, 5, 7, 9)]
            far = [(f, r) for r in range(1, 6) for f in range(1, 10)]
        return [Square(f, r) for f, r in near + far]
    return [Square(f, r) for f in range(1, 10) for r in range(1, 11)]


def _candidate_targets(kind: PieceKind, frm: Square) -> list[Square]:
    if kind in (PieceKind.CHARIOT, PieceKind.CANNON):
        line = [Square(frm.file, r) for r in range(1, 11) if r != frm.rank]
        line += [Square(f, frm.rank) for f in range(1, 10) if f != frm.file]
        return line
    return [Square(f, r) for f in range(1, 10) for r in range(1, 11) if (f, r) != frm]


def _between(a: Square, b: Square) -> list[Square]:
    if a.file == b.file:
        lo, hi = sorted((a.rank, b.rank))
        return [Square(a.file, r) for r in range(lo + 1, hi)]
    if a.rank == b.rank:
        lo, hi = sorted((a.file, b.file))
        return [Square(f, a.rank) for f in range(lo + 1, hi)]
    return []


def _reachable(placement, frm, to, piece, enemy) -> bool:
    """Can the move happen under some staging of screens and targets?"""
    if can_move(placement, frm, to, piece):
        return True
    if piece.kind is not PieceKind.CANNON:
        return False
    # Stage a capture: enemy target at the destination, and one dummy
    # screen on each free square between, tried in turn.
    if to in placement:
        return False
    staged = dict(placement)
    staged[to] = Piece(enemy, PieceKind.CHARIOT)
    if can_move(staged, frm, to, piece):
        return True
    for screen_sq in _between(frm, to):
        if screen_sq in staged:
            continue
        with_screen = dict(staged)
        with_screen[screen_sq] = Piece(enemy, PieceKind.CHARIOT)
        if can_move(with_screen, frm, to, piece):
            return True
    return False


def _tandem_rank_pairs(kind: PieceKind, file: int, side: Side) -> list[tuple[int, int]]:
    """(front_rank, rear_rank): front is nearer the opponent."""
    if kind is PieceKind.SOLDIER:
        # The joining soldier arrives via a post-river sideways step, so
        # the front of any doubled pair has crossed.
        if side is Side.RED:
            rears = ([4, 5] if file % 2 == 1 else []) + list(range(6, 10))
            return [(fr, re) for re in rears for fr in range(max(6, re + 1), 11)]
        rears = ([7, 6] if file % 2 == 1 else []) + list(range(2, 6))[::-1]
        return [(fr, re) for re in rears for fr in range(min(5, re - 1), 0, -1)]
    ranks = range(1, 11)
    if side is Side.RED:
        return [(fr, re) for re in ranks for fr in ranks if fr > re]
    return [(fr, re) for re in ranks for fr in ranks if fr < re]


def brute_force_texts(side: Side) -> set[str]:
    texts: set[str] = set()
    enemy = Side.BLACK if side is Side.RED else Side.RED

    for kind in PieceKind:
        piece = Piece(side, kind)
        for frm in _occupiable(kind, side):
            placement = {frm: piece}
            for to in _candidate_targets(kind, frm):
                if _reachable(placement, frm, to, piece, enemy):
                    texts.add(write_token(side, kind, frm, to, None))

    for kind in (PieceKind.HORSE, PieceKind.CHARIOT, PieceKind.CANNON, PieceKind.SOLDIER):
        piece = Piece(side, kind)
        for file in range(1, 10):
            for front_rank, rear_rank in _tandem_rank_pairs(kind, file, side):
                pair = {
                    Square(file, front_rank): piece,
                    Square(file, rear_rank): piece,
                }
                for tandem, frm in (
                    ("front", Square(file, front_rank)),
                    ("rear", Square(file, rear_rank)),
                ):
                    for to in _candidate_targets(kind, frm):
                        if _reachable(pair, frm, to, piece, enemy):
                            texts.add(write_token(side, kind, frm, to, tandem))
    return texts
