"""HTTP service: model registry, sessions, play, analysis, persistence."""

import json

import pytest
from fastapi.testclient import TestClient

from xqmimic import movespace, notation, rules
from xqmimic.errors import OutOfVocabulary
from xqmimic.model import StructureConfig, build, save
from xqmimic.movespace import enumerate_vocabulary
from xqmimic.service import create_app
from xqmimic.synthetic import ScriptedPolicy, synthesize_game

VOCAB = enumerate_vocabulary()
MODEL_ID = "imitator-1050"


def tiny_checkpoint(seed=3):
    config = StructureConfig().replace(num_fc=0)
    params = build(config, vocab_size=len(VOCAB), seed=seed, hidden=32, embed_dim=16)
    return save(params, config, VOCAB)


@pytest.fixture(scope="module")
def models_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("models")
    (d / f"{MODEL_ID}.xqm").write_bytes(tiny_checkpoint())
    (d / f"{MODEL_ID}.json").write_text(
        json.dumps({"elo_lower": 1000, "elo_upper": 1100, "val_accuracy": 0.31})
    )
    (d / "imitator-1850.xqm").write_bytes(tiny_checkpoint(seed=9))
    (d / "broken.xqm").write_bytes(b"not a checkpoint at all")
    return d


@pytest.fixture()
def client(models_dir):
    return TestClient(create_app(models_dir))


@pytest.fixture(scope="module")
def mating_line():
    """Token texts of a finished scripted game; the last move mates."""
    for salt in range(200):
        try:
            record = synthesize_game(
                ScriptedPolicy(salt), plies=120, game_seed=1, elo=1200,
                source_id=f"mate-{salt}",
            )
        except OutOfVocabulary:
            # freak soldier formation the token scheme cannot express
            continue
        if record.result != notation.GameResult.UNKNOWN and record.length >= 4:
            return [t.text for t in record.moves], record
    raise RuntimeError("no early mate found in the salt range")


def write_session_log(path, moves, human_side, policy="argmax", seed=0):
    """Fabricate a persisted session; movers alternate from Red."""
    lines = [
        json.dumps(
            {
                "kind": "session",
                "id": path.stem,
                "model_id": MODEL_ID,
                "human_side": human_side,
                "policy": policy,
                "seed": seed,
                "created": "2026-01-01T00:00:00+00:00",
            }
        )
    ]
    human_is_red = human_side == "Red"
    for i, text in enumerate(moves):
        mover = "human" if (i % 2 == 0) == human_is_red else "model"
        lines.append(json.dumps({"kind": "move", "mover": mover, "token": text}))
    path.write_text("\n".join(lines) + "\n")


class TestModels:
    def test_empty_directory_lists_nothing(self, tmp_path):
        client = TestClient(create_app(tmp_path))
        assert client.get("/models").json() == {"models": []}

    def test_descriptors_cover_every_file(self, client):
        models = client.get("/models").json()["models"]
        by_id = {m["id"]: m for m in models}
        assert set(by_id) == {MODEL_ID, "imitator-1850", "broken"}
        assert by_id[MODEL_ID]["loadable"]
        assert by_id[MODEL_ID]["elo_lower"] == 1000
        assert by_id[MODEL_ID]["val_accuracy"] == 0.31
        assert "m=" in by_id[MODEL_ID]["config"]
        assert by_id["imitator-1850"]["elo_lower"] is None

    def test_corrupted_checkpoint_is_flagged_with_reason(self, client):
        models = client.get("/models").json()["models"]
        broken = next(m for m in models if m["id"] == "broken")
        assert not broken["loadable"]
        assert broken["error"]

    def test_unreadable_sidecar_noted_but_model_still_loads(self, tmp_path):
        (tmp_path / "a.xqm").write_bytes(tiny_checkpoint())
        (tmp_path / "a.json").write_text("{broken json")
        models = TestClient(create_app(tmp_path)).get("/models").json()["models"]
        assert models[0]["loadable"]
        assert "metadata unreadable" in models[0]["error"]


class TestSessionCreation:
    def test_human_red_starts_with_empty_history(self, client):
        view = client.post("/sessions", json={"model_id": MODEL_ID}).json()
        assert view["history"] == []
        assert view["status"] == "Ongoing"
        assert view["turn"] == "Red"
        assert len(view["legal_moves"]) == 44

    def test_human_black_gets_model_first_move(self, client):
        view = client.post(
            "/sessions", json={"model_id": MODEL_ID, "human_side": "Black"}
        ).json()
        assert len(view["history"]) == 1
        assert view["history"][0]["mover"] == "model"
        assert view["turn"] == "Black"
        # rules oracle: the move must be legal from the initial position
        legal = {
            notation.iccs_text(a) for a in rules.legal_moves(rules.initial_state())
        }
        assert view["history"][0]["iccs"] in legal

    def test_unknown_model_is_404(self, client):
        r = client.post("/sessions", json={"model_id": "ghost"})
        assert r.status_code == 404
        assert r.json()["code"] == "unknown_model"

    def test_board_of_fresh_session_is_initial(self, client):
        view = client.post("/sessions", json={"model_id": MODEL_ID}).json()
        assert view["board"] == rules.board_text(rules.initial_state()).split("\n")


class TestPlay:
    def test_legal_move_gets_a_reply_and_replays(self, client):
        view = client.post("/sessions", json={"model_id": MODEL_ID}).json()
        sid = view["session_id"]
        r = client.post(f"/sessions/{sid}/moves", json={"move": view["legal_moves"][0]})
        assert r.status_code == 200
        v = r.json()
        assert [e["mover"] for e in v["history"]] == ["human", "model"]
        assert v["reply"]["mover"] == "model"
        # oracle: replay both moves through the rules engine
        state = rules.initial_state()
        for entry in v["history"]:
            token = notation.parse_move_text(entry["iccs"], state)
            state = rules.apply_move(state, movespace.resolve(token, state))
        assert rules.board_text(state).split("\n") == v["board"]

    def test_wxf_spelling_is_normalized(self, client):
        view = client.post("/sessions", json={"model_id": MODEL_ID}).json()
        r = client.post(f"/sessions/{view['session_id']}/moves", json={"move": "C2=5"})
        assert r.status_code == 200
        human = r.json()["history"][0]
        assert human["token"] == "C2=5"
        assert len(human["iccs"]) == 4

    def test_illegal_move_is_rejected_without_state_change(self, client):
        view = client.post("/sessions", json={"model_id": MODEL_ID}).json()
        sid = view["session_id"]
        r = client.post(f"/sessions/{sid}/moves", json={"move": "a0a1"})
        assert r.status_code == 400
        body = r.json()
        assert body["code"] == "illegal_move"
        assert sorted(body["detail"]["legal_moves"]) == view["legal_moves"]
        after = client.get(f"/sessions/{sid}").json()
        assert after["history"] == []
        assert after["board"] == view["board"]

    def test_gibberish_is_a_parse_error(self, client):
        view = client.post("/sessions", json={"model_id": MODEL_ID}).json()
        r = client.post(f"/sessions/{view['session_id']}/moves", json={"move": "?!"})
        assert r.status_code == 400
        assert r.json()["code"] == "parse_error"

    def test_distribution_on_request_only(self, client):
        view = client.post("/sessions", json={"model_id": MODEL_ID}).json()
        sid = view["session_id"]
        plain = client.post(
            f"/sessions/{sid}/moves", json={"move": view["legal_moves"][0]}
        ).json()
        assert "distribution" not in plain
        view2 = client.get(f"/sessions/{sid}").json()
        shown = client.post(
            f"/sessions/{sid}/moves",
            json={"move": view2["legal_moves"][0], "include_distribution": True},
        ).json()
        assert 0 < len(shown["distribution"]) <= 10
        assert all(e["p"] > 0 for e in shown["distribution"])

    def test_unknown_session_is_404(self, client):
        r = client.post("/sessions/feedbeef/moves", json={"move": "C2=5"})
        assert r.status_code == 404
        assert r.json()["code"] == "unknown_session"


class TestEndings:
    def test_human_mating_move_wins_without_reply(
        self, models_dir, tmp_path, mating_line
    ):
        moves, _ = mating_line
        human_side = "Red" if (len(moves) - 1) % 2 == 0 else "Black"
        persist = tmp_path / "logs"
        persist.mkdir()
        write_session_log(persist / "endgame.jsonl", moves[:-1], human_side)
        client = TestClient(create_app(models_dir, persist_dir=persist))
        r = client.post("/sessions/endgame/moves", json={"move": moves[-1]})
        assert r.status_code == 200
        v = r.json()
        assert v["status"] == "HumanWins"
        assert v["reply"] is None
        assert v["turn"] is None
        assert v["legal_moves"] == []

    def test_finished_session_refuses_more_moves(
        self, models_dir, tmp_path, mating_line
    ):
        moves, _ = mating_line
        human_side = "Red" if (len(moves) - 1) % 2 == 0 else "Black"
        persist = tmp_path / "logs"
        persist.mkdir()
        write_session_log(persist / "endgame.jsonl", moves[:-1], human_side)
        client = TestClient(create_app(models_dir, persist_dir=persist))
        client.post("/sessions/endgame/moves", json={"move": moves[-1]})
        r = client.post("/sessions/endgame/moves", json={"move": moves[-1]})
        assert r.status_code == 409
        assert r.json()["code"] == "session_finished"

    def test_not_your_turn_when_model_owes_a_move(self, models_dir, tmp_path):
        persist = tmp_path / "logs"
        persist.mkdir()
        # one human (Red) move in the log and no model reply yet
        write_session_log(persist / "pending.jsonl", ["C2=5"], "Red")
        client = TestClient(create_app(models_dir, persist_dir=persist))
        r = client.post("/sessions/pending/moves", json={"move": "C8=5"})
        assert r.status_code == 409
        assert r.json()["code"] == "not_your_turn"


class TestReproducibility:
    def play_transcript(self, client, seed):
        view = client.post(
            "/sessions",
            json={"model_id": MODEL_ID, "policy": "sample", "seed": seed},
        ).json()
        sid = view["session_id"]
        replies = []
        for _ in range(6):
            view = client.get(f"/sessions/{sid}").json()
            if view["status"] != "Ongoing":
                break
            r = client.post(
                f"/sessions/{sid}/moves", json={"move": view["legal_moves"][0]}
            ).json()
            if r["reply"] is not None:
                replies.append(r["reply"]["token"])
        return replies

    def test_same_seed_same_transcript(self, client):
        assert self.play_transcript(client, 123) == self.play_transcript(client, 123)

    def test_seed_is_reported_back(self, client):
        view = client.post(
            "/sessions", json={"model_id": MODEL_ID, "policy": "sample", "seed": 9}
        ).json()
        assert view["seed"] == 9


class TestPersistence:
    def test_restart_restores_sessions(self, models_dir, tmp_path):
        persist = tmp_path / "logs"
        client = TestClient(create_app(models_dir, persist_dir=persist))
        view = client.post("/sessions", json={"model_id": MODEL_ID}).json()
        sid = view["session_id"]
        played = client.post(
            f"/sessions/{sid}/moves", json={"move": view["legal_moves"][3]}
        ).json()

        restarted = TestClient(create_app(models_dir, persist_dir=persist))
        restored = restarted.get(f"/sessions/{sid}").json()
        assert restored["history"] == played["history"]
        assert restored["board"] == played["board"]
        assert restored["status"] == played["status"]

    def test_torn_tail_line_keeps_the_prefix(self, models_dir, tmp_path):
        persist = tmp_path / "logs"
        client = TestClient(create_app(models_dir, persist_dir=persist))
        view = client.post("/sessions", json={"model_id": MODEL_ID}).json()
        sid = view["session_id"]
        client.post(f"/sessions/{sid}/moves", json={"move": view["legal_moves"][0]})
        path = persist / f"{sid}.jsonl"
        path.write_text(path.read_text() + '{"kind":"move","mover":"hum')

        restarted = create_app(models_dir, persist_dir=persist)
        restored = TestClient(restarted).get(f"/sessions/{sid}").json()
        assert len(restored["history"]) == 2
        assert restarted.state.sessions.restore_diagnostics == []

    def test_unreadable_log_is_skipped_with_diagnostic(self, models_dir, tmp_path):
        persist = tmp_path / "logs"
        persist.mkdir()
        (persist / "junk.jsonl").write_text("")
        app = create_app(models_dir, persist_dir=persist)
        assert len(app.state.sessions.restore_diagnostics) == 1
        assert "junk.jsonl" in app.state.sessions.restore_diagnostics[0]

    def test_no_persist_dir_means_memory_only(self, models_dir, tmp_path):
        client = TestClient(create_app(models_dir))
        view = client.post("/sessions", json={"model_id": MODEL_ID}).json()
        assert view["session_id"]
        assert list(tmp_path.iterdir()) == []


class TestAnalyze:
    def test_empty_history_supports_exactly_the_openings(self, client):
        r = client.post("/analyze", json={"model_id": MODEL_ID, "history": []})
        assert r.status_code == 200
        dist = r.json()["distribution"]
        assert len(dist) == 44
        assert abs(sum(e["p"] for e in dist) - 1.0) <= 1e-6
        legal = {
            notation.iccs_text(a) for a in rules.legal_moves(rules.initial_state())
        }
        assert {e["iccs"] for e in dist} == legal

    def test_actual_argmax_is_in_top_1(self, client):
        r = client.post("/analyze", json={"model_id": MODEL_ID, "history": []})
        best = r.json()["distribution"][0]["token"]
        r = client.post(
            "/analyze", json={"model_id": MODEL_ID, "history": [], "actual": best}
        )
        flags = r.json()["actual"]
        assert flags["in_top_k"]["1"] is True
        assert flags["in_top_p"]["0.1"] is True

    def test_custom_ks_and_ps(self, client):
        r = client.post(
            "/analyze",
            json={
                "model_id": MODEL_ID,
                "history": ["C2=5"],
                "actual": "C8=5",
                "ks": [2],
                "ps": [1.0],
            },
        )
        body = r.json()["actual"]
        assert set(body["in_top_k"]) == {"2"}
        assert body["in_top_p"] == {"1": True}

    def test_actual_that_is_illegal_here_flags_false(self, client):
        r = client.post(
            "/analyze",
            json={"model_id": MODEL_ID, "history": [], "actual": "a0a1"},
        )
        body = r.json()["actual"]
        assert body["token"] is None
        assert not any(body["in_top_k"].values())
        assert not any(body["in_top_p"].values())

    def test_unreplayable_history_names_the_ply(self, client):
        r = client.post(
            "/analyze", json={"model_id": MODEL_ID, "history": ["C2=5", "a0a1"]}
        )
        assert r.status_code == 400
        assert r.json()["code"] == "illegal_sequence"
        assert r.json()["detail"]["index"] == 2

    def test_history_after_moves_matches_session(self, client):
        # analyzing a transcript gives the same support a live session sees
        view = client.post("/sessions", json={"model_id": MODEL_ID}).json()
        sid = view["session_id"]
        v = client.post(
            f"/sessions/{sid}/moves", json={"move": view["legal_moves"][0]}
        ).json()
        history = [e["iccs"] for e in v["history"]]
        dist = client.post(
            "/analyze", json={"model_id": MODEL_ID, "history": history}
        ).json()["distribution"]
        assert {e["iccs"] for e in dist} == set(v["legal_moves"])
