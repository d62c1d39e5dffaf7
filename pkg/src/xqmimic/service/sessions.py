"""Mutable session store: the only stateful part of the service.

Model inference stays pure; a session is just the move list, the state
it replays to, and the knobs chosen at creation.  Mutations build the
whole successor locally and assign at the end, so a rejected or failed
play leaves the session exactly as it was.  Per-session locks serialize
writers; independent sessions never contend.

With ``persist_dir`` set, every session appends to its own JSONL file
(one meta line, then one line per move) and the constructor restores
whatever the directory holds.  A truncated tail line, the footprint of
a crash mid-append, drops silently; anything else wrong with a file is
reported in ``restore_diagnostics`` and the file is skipped.
"""

from __future__ import annotations

import json
import secrets
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import numpy as np

from .. import movespace, notation, rules
from ..errors import (
    NotYourTurn,
    SessionFinished,
    UnknownSession,
    XqError,
)
from ..model import sample_index
from ..rules import GameState, Outcome, Side
from .moves import (
    SIDE_TEXT,
    TEXT_SIDE,
    board_rows,
    distribution_view,
    filtered_distribution,
    legal_iccs,
    parse_human_move,
)
from .store import ModelStore

TOP_VIEW_LIMIT = 10


@dataclass(frozen=True)
class MoveEntry:
    side: Side
    mover: str  # "human" | "model"
    token: str
    iccs: str

    def as_dict(self, ply: int) -> dict:
        return {
            "ply": ply,
            "side": SIDE_TEXT[self.side],
            "mover": self.mover,
            "token": self.token,
            "iccs": self.iccs,
        }


class Session:
    def __init__(
        self,
        session_id: str,
        model_id: str,
        human_side: Side,
        policy: str,
        seed: int,
    ):
        self.id = session_id
        self.model_id = model_id
        self.human_side = human_side
        self.policy = policy
        self.seed = seed
        self.entries: list[MoveEntry] = []
        self.token_ids: list[int] = []
        self.state: GameState = rules.initial_state()
        self.lock = threading.Lock()

    @property
    def status(self) -> str:
        outcome = rules.game_outcome(self.state)
        if outcome is Outcome.ONGOING:
            return "Ongoing"
        winner = Side.RED if outcome is Outcome.RED_WINS else Side.BLACK
        return "HumanWins" if winner is self.human_side else "ModelWins"


class SessionStore:
    def __init__(self, models: ModelStore, persist_dir=None):
        self.models = models
        self.persist_dir = Path(persist_dir) if persist_dir is not None else None
        self._sessions: dict[str, Session] = {}
        self._registry_lock = threading.Lock()
        self.restore_diagnostics: list[str] = []
        if self.persist_dir is not None:
            self.persist_dir.mkdir(parents=True, exist_ok=True)
            self._restore()

    # -- creation and lookup ------------------------------------------------

    def create(
        self,
        model_id: str,
        human_side: str,
        policy: str,
        seed: Optional[int] = None,
    ) -> Session:
        self.models.get(model_id)  # UnknownModel up front, before any state
        if seed is None:
            seed = secrets.randbits(31) if policy == "sample" else 0
        session = Session(
            session_id=secrets.token_hex(8),
            model_id=model_id,
            human_side=TEXT_SIDE[human_side],
            policy=policy,
            seed=int(seed),
        )
        first_reply: Optional[MoveEntry] = None
        if session.human_side is Side.BLACK:
            first_reply, state, token_id, _ = self._model_reply(
                session, session.state, session.token_ids
            )
            session.entries.append(first_reply)
            session.token_ids.append(token_id)
            session.state = state
        with self._registry_lock:
            self._sessions[session.id] = session
        self._persist_meta(session)
        if first_reply is not None:
            self._persist_move(session, first_reply)
        return session

    def get(self, session_id: str) -> Session:
        with self._registry_lock:
            try:
                return self._sessions[session_id]
            except KeyError:
                raise UnknownSession(f"no session {session_id!r}") from None

    def view(self, session: Session) -> dict:
        with session.lock:
            return self._view_locked(session)

    # -- play ---------------------------------------------------------------

    def play(
        self, session_id: str, move_text: str, include_distribution: bool = False
    ) -> dict:
        session = self.get(session_id)
        with session.lock:
            if session.status != "Ongoing":
                raise SessionFinished(f"session {session_id} is already decided")
            if session.state.side_to_move is not session.human_side:
                raise NotYourTurn("the model is to move")
            token, action = parse_human_move(session.state, move_text)
            human_entry = MoveEntry(
                side=session.state.side_to_move,
                mover="human",
                token=token.text,
                iccs=notation.iccs_text(action),
            )
            after_human = rules.apply_move(session.state, action)
            state = after_human
            ids = session.token_ids + [self.models.vocabulary.encode(token)]
            new_entries = [human_entry]
            reply_entry = None
            distribution = None
            if rules.game_outcome(after_human) is Outcome.ONGOING:
                reply_entry, state, reply_id, filtered = self._model_reply(
                    session, after_human, ids
                )
                ids.append(reply_id)
                new_entries.append(reply_entry)
                if include_distribution:
                    # the distribution the reply was drawn from, i.e. over
                    # the position right after the human's move
                    distribution = distribution_view(
                        filtered, after_human, self.models.vocabulary, TOP_VIEW_LIMIT
                    )
            session.entries.extend(new_entries)
            session.token_ids = ids
            session.state = state
            result = self._view_locked(session)
            result["reply"] = (
                reply_entry.as_dict(len(session.entries)) if reply_entry else None
            )
            if distribution is not None:
                result["distribution"] = distribution
        for entry in new_entries:
            self._persist_move(session, entry)
        return result

    def _model_reply(
        self, session: Session, state: GameState, token_ids: list[int]
    ) -> tuple[MoveEntry, GameState, int, object]:
        params, config = self.models.get(session.model_id)
        vocab = self.models.vocabulary
        filtered = filtered_distribution(params, config, token_ids, state, vocab)
        if session.policy == "sample":
            # one child seed per ply, so a fixed session seed replays
            # move-for-move no matter when the process restarts
            ply = len(token_ids)
            child = np.random.SeedSequence([session.seed, ply])
            choice = sample_index(filtered, np.random.default_rng(child))
        else:
            choice = int(np.argmax(filtered.probs))
        token = vocab.decode(choice)
        try:
            action = movespace.resolve(token, state)
            new_state = rules.apply_move(state, action)
        except XqError as exc:  # pragma: no cover - filter guarantees legality
            raise RuntimeError(
                f"model reply {token.text} is not legal here; "
                f"the legality filter is broken: {exc}"
            ) from exc
        entry = MoveEntry(
            side=state.side_to_move,
            mover="model",
            token=token.text,
            iccs=notation.iccs_text(action),
        )
        return entry, new_state, choice, filtered

    # -- rendering ----------------------------------------------------------

    def _view_locked(self, session: Session) -> dict:
        ongoing = rules.game_outcome(session.state) is Outcome.ONGOING
        return {
            "session_id": session.id,
            "model_id": session.model_id,
            "human_side": SIDE_TEXT[session.human_side],
            "policy": session.policy,
            "seed": session.seed,
            "status": session.status,
            "history": [
                e.as_dict(i) for i, e in enumerate(session.entries, start=1)
            ],
            "board": board_rows(session.state),
            "turn": SIDE_TEXT[session.state.side_to_move] if ongoing else None,
            "legal_moves": legal_iccs(session.state) if ongoing else [],
        }

    # -- persistence --------------------------------------------------------

    def _log_path(self, session: Session) -> Optional[Path]:
        if self.persist_dir is None:
            return None
        return self.persist_dir / f"{session.id}.jsonl"

    def _append(self, session: Session, record: dict) -> None:
        path = self._log_path(session)
        if path is None:
            return
        with path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, separators=(",", ":")) + "\n")

    def _persist_meta(self, session: Session) -> None:
        self._append(
            session,
            {
                "kind": "session",
                "id": session.id,
                "model_id": session.model_id,
                "human_side": SIDE_TEXT[session.human_side],
                "policy": session.policy,
                "seed": session.seed,
                "created": datetime.now(timezone.utc).isoformat(),
            },
        )

    def _persist_move(self, session: Session, entry: MoveEntry) -> None:
        self._append(
            session,
            {"kind": "move", "mover": entry.mover, "token": entry.token},
        )

    def _restore(self) -> None:
        for path in sorted(self.persist_dir.glob("*.jsonl")):
            try:
                session = self._restore_file(path)
            except (XqError, ValueError, OSError) as exc:
                self.restore_diagnostics.append(f"{path.name}: {exc}")
                continue
            self._sessions[session.id] = session

    def _restore_file(self, path: Path) -> Session:
        lines = path.read_text(encoding="utf-8").splitlines()
        if not lines:
            raise ValueError("empty log")
        meta = json.loads(lines[0])
        if meta.get("kind") != "session":
            raise ValueError("first line is not a session record")
        session = Session(
            session_id=meta["id"],
            model_id=meta["model_id"],
            human_side=TEXT_SIDE[meta["human_side"]],
            policy=meta["policy"],
            seed=int(meta["seed"]),
        )
        moves = []
        for raw in lines[1:]:
            try:
                record = json.loads(raw)
            except ValueError:
                break  # torn tail write; keep the prefix
            if record.get("kind") != "move":
                raise ValueError("non-move record after the header")
            moves.append((record["mover"], record["token"]))
        vocab = self.models.vocabulary
        state = rules.initial_state()
        for mover, text in moves:
            token = notation.parse_move_text(text, state)
            action = movespace.resolve(token, state)
            session.entries.append(
                MoveEntry(
                    side=state.side_to_move,
                    mover=mover,
                    token=token.text,
                    iccs=notation.iccs_text(action),
                )
            )
            session.token_ids.append(vocab.encode(token))
            state = rules.apply_move(state, action)
        session.state = state
        return session
