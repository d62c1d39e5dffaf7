"""Text-level glue between the wire and the core modules.

Everything here is pure: given a state and some move text it parses,
resolves, replays, or renders, and raises domain errors for the HTTP
layer to serialize.  Session bookkeeping lives elsewhere.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .. import movespace, notation, rules
from ..errors import IllegalMove, IllegalSequence, ParseError, XqError
from ..evaluation import top_k_correct, top_p_correct
from ..model import (
    ModelParameters,
    PredictionDistribution,
    StructureConfig,
    apply_filter,
    forward,
)
from ..movespace import MoveToken, MoveVocabulary, locally_legal_mask
from ..rules import GameState, Side

SIDE_TEXT = {Side.RED: "Red", Side.BLACK: "Black"}
TEXT_SIDE = {v: k for k, v in SIDE_TEXT.items()}

ANALYZE_KS = (1, 2, 3, 5, 10)
ANALYZE_PS = (0.1, 0.3, 0.5, 0.9)


def board_rows(state: GameState) -> list[str]:
    return rules.board_text(state).split("\n")


def legal_iccs(state: GameState) -> list[str]:
    return sorted(notation.iccs_text(a) for a in rules.legal_moves(state))


def parse_human_move(state: GameState, text: str) -> tuple[MoveToken, rules.MoveAction]:
    """Either spelling in, resolved legal move out.

    Malformed text stays a ParseError; well-formed text that names no
    legal move becomes IllegalMove carrying the playable alternatives.
    """
    try:
        token = notation.parse_move_text(text, state)
        action = movespace.resolve(token, state)
    except ParseError:
        raise
    except XqError as exc:
        raise IllegalMove(
            f"{text!r}: {exc}", legal_moves=tuple(legal_iccs(state))
        ) from exc
    return token, action


def replay_texts(
    texts: Sequence[str],
) -> tuple[list[MoveToken], GameState]:
    """Replay move texts from the start; IllegalSequence names the bad ply."""
    state = rules.initial_state()
    tokens: list[MoveToken] = []
    for i, text in enumerate(texts, start=1):
        try:
            token = notation.parse_move_text(text, state)
            action = movespace.resolve(token, state)
        except XqError as exc:
            raise IllegalSequence(i, f"{text!r}: {exc}") from exc
        state = rules.apply_move(state, action)
        tokens.append(token)
    return tokens, state


def filtered_distribution(
    params: ModelParameters,
    config: StructureConfig,
    token_ids: Sequence[int],
    state: GameState,
    vocabulary: MoveVocabulary,
) -> PredictionDistribution:
    """Model distribution at ``state`` with only the legal moves kept."""
    window = list(token_ids)
    if config.m is not None:
        window = window[-config.m :]
    dist = forward(params, config, window)
    return apply_filter(dist, locally_legal_mask(state, vocabulary))


def distribution_view(
    filtered: PredictionDistribution,
    state: GameState,
    vocabulary: MoveVocabulary,
    limit: Optional[int] = None,
) -> list[dict]:
    """Nonzero entries, best first, each resolved to its coordinate text."""
    order = np.argsort(-filtered.probs, kind="stable")
    entries: list[dict] = []
    for idx in order:
        p = float(filtered.probs[idx])
        if p <= 0.0:
            break
        token = vocabulary.decode(int(idx))
        action = movespace.resolve(token, state)
        entries.append({"token": token.text, "iccs": notation.iccs_text(action), "p": p})
        if limit is not None and len(entries) >= limit:
            break
    return entries


def analyze(
    model_store,
    model_id: str,
    history: Sequence[str],
    actual: Optional[str] = None,
    ks: Optional[Sequence[int]] = None,
    ps: Optional[Sequence[float]] = None,
) -> dict:
    """Filtered distribution after ``history`` plus top-set flags for ``actual``.

    The distribution's support is exactly the legal moves of the reached
    position.  An ``actual`` that parses but is not legal there simply
    tests false everywhere; it cannot be in any top set.
    """
    params, config = model_store.get(model_id)
    vocab = model_store.vocabulary
    tokens, state = replay_texts(history)
    ids = [vocab.encode(t) for t in tokens]
    filtered = filtered_distribution(params, config, ids, state, vocab)
    result = {
        "model_id": model_id,
        "distribution": distribution_view(filtered, state, vocab),
    }
    if actual is not None:
        try:
            token = notation.parse_move_text(actual, state)
            y: Optional[int] = vocab.encode(token)
            token_text: Optional[str] = token.text
        except ParseError:
            raise
        except XqError:
            y, token_text = None, None
        k_flags = {
            str(k): bool(y is not None and top_k_correct(filtered, y, k))
            for k in (ks if ks is not None else ANALYZE_KS)
        }
        p_flags = {
            _p_key(p): bool(y is not None and top_p_correct(filtered, y, p))
            for p in (ps if ps is not None else ANALYZE_PS)
        }
        result["actual"] = {
            "move": actual,
            "token": token_text,
            "in_top_k": k_flags,
            "in_top_p": p_flags,
        }
    return result


def _p_key(p: float) -> str:
    # JSON object keys are strings; trim so 0.1 and 0.10 collide
    return format(float(p), "g")
