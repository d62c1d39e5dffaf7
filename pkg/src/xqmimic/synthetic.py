"""Scripted corpora with a known accuracy ceiling, for calibration runs.

Real archives prove nothing about the trainer because nobody knows how
predictable the players were.  The generators here play legal games
whose choices follow a fixed rule: outside a handful of deliberately
randomized opening plies, the last ``memory`` tokens determine the next
move exactly (a keyed hash over the window picks among the legal
candidates).  A learner with a window at least that long can therefore
approach 100% on the generated plies, and the randomized plies bound it
from above by a computable amount.

Two policies differing only in ``salt`` walk disjoint game trees from
the first ply on, which is what the rating-bin experiments need:
a model fitted to one salt transfers nothing to another.
"""

from __future__ import annotations

import hashlib
import random
import struct
from dataclasses import dataclass
from typing import Optional, Sequence

from . import rules
from .movespace import MoveVocabulary, enumerate_vocabulary, tokenize
from .notation import GameRecord, GameResult


@dataclass(frozen=True)
class ScriptedPolicy:
    """A deterministic move rule, salted so policies are distinguishable.

    ``random_plies`` lists 1-based plies drawn uniformly from the legal
    moves instead; one such ply is enough to spread a corpus into
    distinct games.  An empty tuple makes every game identical.
    """

    salt: int
    memory: int = 5
    random_plies: tuple[int, ...] = (2,)

    def __post_init__(self) -> None:
        if self.memory < 1:
            raise ValueError(f"memory must be >= 1, got {self.memory}")


def _score(salt: int, window: Sequence[int], candidate: int) -> int:
    # Keyed, platform-stable ordering; Python's hash() is salted per run.
    payload = struct.pack(f"<q{len(window)}HH", salt, *window, candidate)
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "little")


def _game_rng_seed(salt: int, corpus_seed: int, game_index: int) -> int:
    payload = struct.pack("<qqq", salt, corpus_seed, game_index)
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "little")


def synthesize_game(
    policy: ScriptedPolicy,
    plies: int,
    game_seed: int,
    elo: int,
    source_id: str,
    vocabulary: Optional[MoveVocabulary] = None,
) -> GameRecord:
    """Play one scripted game of at most ``plies`` legal moves.

    Both players get the same rating so per-mover binning keeps the
    whole game in one bin.  A game ends early only if the mover has no
    legal move, in which case the other side wins.
    """
    vocab = vocabulary or enumerate_vocabulary()
    rng = random.Random(game_seed)
    state = rules.initial_state()
    history: list[int] = []
    moves = []
    result = GameResult.UNKNOWN
    for i in range(1, plies + 1):
        legal = rules.legal_moves(state)
        if not legal:
            red_mated = state.side_to_move is rules.Side.RED
            result = GameResult.BLACK_WINS if red_mated else GameResult.RED_WINS
            break
        candidates = sorted(
            ((vocab.encode(tokenize(a, state)), a) for a in legal),
            key=lambda pair: pair[0],
        )
        if i in policy.random_plies:
            index, action = candidates[rng.randrange(len(candidates))]
        else:
            window = history[-policy.memory:]
            index, action = min(
                candidates, key=lambda pair: _score(policy.salt, window, pair[0])
            )
        history.append(index)
        moves.append(vocab.decode(index))
        state = rules.apply_move(state, action)
    return GameRecord(
        red_elo=elo,
        black_elo=elo,
        result=result,
        moves=tuple(moves),
        source_id=source_id,
    )


def synthesize_corpus(
    policy: ScriptedPolicy,
    games: int,
    plies: int,
    seed: int,
    elo: int,
    vocabulary: Optional[MoveVocabulary] = None,
    id_prefix: str = "syn",
) -> list[GameRecord]:
    """A corpus of scripted games; identical inputs give identical bytes."""
    vocab = vocabulary or enumerate_vocabulary()
    return [
        synthesize_game(
            policy,
            plies,
            game_seed=_game_rng_seed(policy.salt, seed, g),
            elo=elo,
            source_id=f"{id_prefix}-{policy.salt}-{g:04d}",
            vocabulary=vocab,
        )
        for g in range(games)
    ]
