"""Shared helpers for the test suite."""

from __future__ import annotations

import random

from xqmimic import movespace, rules


def playout(seed: int, plies: int) -> rules.GameState:
    """Play uniformly random legal moves from the start.

    Stops early if the game ends.  Deterministic for a given seed, so
    tests can name positions by (seed, plies).
    """
    rng = random.Random(seed)
    state = rules.initial_state()
    for _ in range(plies):
        moves = sorted(rules.legal_moves(state))
        if not moves:
            break
        state = rules.apply_move(state, rng.choice(moves))
    return state


def playout_tokens(seed: int, plies: int) -> tuple[rules.GameState, list[movespace.MoveToken]]:
    """Same walk as ``playout`` but keeps the move tokens alongside."""
    rng = random.Random(seed)
    state = rules.initial_state()
    tokens: list[movespace.MoveToken] = []
    for _ in range(plies):
        moves = sorted(rules.legal_moves(state))
        if not moves:
            break
        action = rng.choice(moves)
        tokens.append(movespace.tokenize(action, state))
        state = rules.apply_move(state, action)
    return state, tokens


def marker_corpus(members: int = 6, copies: int = 4, plies: int = 26, period: int = 6):
    """Training-only records whose ceiling provably rises with window length.

    Every record repeats a shared filler pattern, except that plies at
    position 2 mod ``period`` carry a marker token unique to the record's
    pool member.  The five tokens before a marker are pure filler and
    identical across members, so a five-ply window cannot beat 1/members
    on marker plies; a window of ``period`` or more sees the previous
    marker and pins them all.  Each member appears ``copies`` times so a
    game-level split puts the same sequences on both sides: the task is
    recall, not generalisation.  The sequences are not legal games;
    nothing here gets replayed or filtered.
    """
    from xqmimic.notation import GameRecord, GameResult

    vocab = movespace.enumerate_vocabulary()
    fill = [50 + r for r in range(period)]
    records = []
    for k in range(members):
        ids = [
            100 + k if i % period == 2 else fill[i % period]
            for i in range(1, plies + 1)
        ]
        moves = tuple(vocab.decode(i) for i in ids)
        for c in range(copies):
            records.append(
                GameRecord(
                    red_elo=1050,
                    black_elo=1050,
                    result=GameResult.UNKNOWN,
                    moves=moves,
                    source_id=f"pool-{k}-{c}",
                )
            )
    return records
