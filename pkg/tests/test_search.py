"""Phase search: counts, determinism, tie-breaking, logs, reports."""

import math

import numpy as np
import pytest

from conftest import marker_corpus
from xqmimic.errors import DivergenceDetected, InvalidConfig, ParseError
from xqmimic.model import (
    StructureConfig,
    TrainingOptions,
    TrainingHistory,
    TrainingResult,
)
from xqmimic.search import (
    DEFAULT_PHASES,
    SEARCH_CANDIDATES,
    CandidateRecord,
    PhaseWinner,
    SearchLog,
    SearchPlan,
    deserialize_log,
    report,
    run_search,
    serialize_log,
)
from xqmimic.synthetic import ScriptedPolicy, synthesize_corpus

TEN_FIELDS = (
    "m", "rnn_kind", "rnn_dropout", "rnn_hidden", "rnn_activation",
    "batch_norm", "fc_dropout", "num_fc", "fc_reg", "fc_activation",
)


class TestSearchPlan:
    def test_default_covers_all_ten_once(self):
        plan = SearchPlan()
        fields = [f for pair in plan.phases for f in pair]
        assert sorted(fields) == sorted(TEN_FIELDS)
        assert plan.phases == DEFAULT_PHASES

    def test_default_candidate_counts_are_products(self):
        plan = SearchPlan()
        assert plan.candidate_counts() == (16, 12, 8, 20, 16)
        assert sum(plan.candidate_counts()) == 72

    def test_unlimited_memory_is_not_searched(self):
        assert None not in SEARCH_CANDIDATES["m"]
        assert SEARCH_CANDIDATES["m"] == (5, 10, 15, 20)

    def test_repeated_field_rejected(self):
        with pytest.raises(InvalidConfig):
            SearchPlan(phases=(("m", "rnn_kind"), ("m", "rnn_hidden")))

    def test_unknown_field_rejected(self):
        with pytest.raises(InvalidConfig):
            SearchPlan(phases=(("m", "learning_rate"),))

    def test_empty_plan_rejected(self):
        with pytest.raises(InvalidConfig):
            SearchPlan(phases=())

    def test_nonpositive_budget_rejected(self):
        with pytest.raises(InvalidConfig):
            SearchPlan(budget=0)
        with pytest.raises(InvalidConfig):
            SearchPlan(winner_budget=0)


SMALL_PLAN = SearchPlan(
    phases=(("rnn_activation", "batch_norm"), ("fc_reg", "fc_activation")),
    budget=2,
    winner_budget=3,
    seed=5,
)


def small_corpus():
    return synthesize_corpus(
        ScriptedPolicy(salt=13), games=8, plies=10, seed=2, elo=1050
    )


def small_search(plan=SMALL_PLAN, records=None, **kwargs):
    kwargs.setdefault("options", TrainingOptions(learning_rate=3e-3, patience=50))
    return run_search(
        plan,
        records if records is not None else small_corpus(),
        hidden=32,
        embed_dim=16,
        **kwargs,
    )


@pytest.fixture(scope="module")
def log():
    return small_search()


class TestRunSearch:

    def test_every_combination_trained_once(self, log):
        for phase_no, pair in enumerate(SMALL_PLAN.phases, start=1):
            entries = [c for c in log.candidates if c.phase == phase_no]
            combos = {(getattr(c.config, pair[0]), getattr(c.config, pair[1]))
                      for c in entries}
            expected = {
                (va, vb)
                for va in SEARCH_CANDIDATES[pair[0]]
                for vb in SEARCH_CANDIDATES[pair[1]]
            }
            assert combos == expected
            assert len(entries) == len(expected)

    def test_later_phases_inherit_the_winner(self, log):
        first = log.phase_winners[0]
        for candidate in log.candidates:
            if candidate.phase == 2:
                assert candidate.config.rnn_activation == first.config.rnn_activation
                assert candidate.config.batch_norm == first.config.batch_norm

    def test_winner_accuracy_never_drops(self, log):
        accs = [w.val_accuracy for w in log.phase_winners]
        assert accs == sorted(accs)

    def test_final_is_last_winner_and_dominates_log(self, log):
        assert log.final_config == log.phase_winners[-1].config
        assert log.final_accuracy == log.phase_winners[-1].val_accuracy
        assert all(
            log.final_accuracy >= c.val_accuracy
            for c in log.candidates
            if not c.failed
        )

    def test_unsearched_fields_stay_at_defaults(self, log):
        defaults = StructureConfig()
        searched = {f for pair in SMALL_PLAN.phases for f in pair}
        for field in TEN_FIELDS:
            if field not in searched:
                assert getattr(log.final_config, field) == getattr(defaults, field)

    def test_winner_retrain_logged_at_bigger_budget(self, log):
        assert log.winner_retrain is not None
        assert log.winner_retrain.config == log.final_config
        assert log.winner_retrain.epochs_run <= SMALL_PLAN.winner_budget
        assert not log.winner_retrain.failed

    def test_rerun_is_identical_except_wall_time(self, log):
        again = small_search()
        assert [c.config for c in again.candidates] == [c.config for c in log.candidates]
        assert [c.val_accuracy for c in again.candidates] == [
            c.val_accuracy for c in log.candidates
        ]
        assert again.phase_winners == log.phase_winners
        assert again.final_config == log.final_config
        assert report(again) == report(log)

    def test_needs_validation_samples(self):
        with pytest.raises(InvalidConfig):
            small_search(ratios=(1.0, 0.0, 0.0))

    def test_all_candidates_diverging_is_an_error(self):
        plan = SearchPlan(
            phases=(("rnn_activation", "batch_norm"),), budget=3, winner_budget=3,
            seed=1,
        )
        with pytest.raises(DivergenceDetected):
            small_search(
                plan,
                options=TrainingOptions(learning_rate=float("inf"), patience=50),
            )


class TestLongHistoryGenerator:
    def test_phase_winner_uses_more_memory(self):
        # The markers sit 6 plies apart, so m=5 candidates top out around
        # 0.87 on this corpus while longer windows can clear 0.94.  The
        # fc_activation axis rides along because the default Softmax
        # stack cannot memorise at this scale; the search has to discover
        # both the window and a workable head.
        records = marker_corpus()
        plan = SearchPlan(
            phases=(("m", "fc_activation"),), budget=120, winner_budget=120, seed=5
        )
        log = run_search(
            plan,
            records,
            options=TrainingOptions(learning_rate=0.01, batch_size=32, patience=999),
            hidden=48,
            embed_dim=24,
        )
        assert log.final_config.m > 5
        short = [c for c in log.candidates if c.config.m == 5]
        assert log.final_accuracy > max(c.val_accuracy for c in short) + 0.05


def stub_result(accuracy):
    history = TrainingHistory(best_val_accuracy=accuracy)
    return TrainingResult(params=None, history=history)


class TestWinnerSelection:
    """Selection rules in isolation, with training stubbed out."""

    PLAN = SearchPlan(
        phases=(("rnn_activation", "batch_norm"),), budget=1, winner_budget=1, seed=0
    )

    def run_with_table(self, monkeypatch, accuracy_of):
        import xqmimic.search as search_module

        def fake_train(params, config, split, options):
            value = accuracy_of(config)
            if value is None:
                raise DivergenceDetected("forced", history=None)
            return stub_result(value)

        monkeypatch.setattr(search_module, "train", fake_train)
        monkeypatch.setattr(
            search_module, "build", lambda *a, **k: None
        )
        return small_search(self.PLAN)

    def test_flat_tie_goes_to_the_default_pair(self, monkeypatch):
        log = self.run_with_table(monkeypatch, lambda config: 0.5)
        assert log.final_config.rnn_activation == "ReLU"
        assert log.final_config.batch_norm is True

    def test_tie_without_default_prefers_simpler(self, monkeypatch):
        def table(config):
            default = config.rnn_activation == "ReLU" and config.batch_norm
            return 0.1 if default else 0.5

        log = self.run_with_table(monkeypatch, table)
        # one-default candidates tie; Linear sorts before ReLU-without-bn
        assert log.final_config.rnn_activation == "Linear"
        assert log.final_config.batch_norm is True

    def test_diverged_best_is_excluded(self, monkeypatch):
        def table(config):
            if config.rnn_activation == "Tanh" and not config.batch_norm:
                return None  # would have scored highest; diverges instead
            return 0.9 if config.rnn_activation == "Tanh" else 0.2

        log = self.run_with_table(monkeypatch, table)
        assert log.final_config.rnn_activation == "Tanh"
        assert log.final_config.batch_norm is True
        failed = [c for c in log.candidates if c.failed]
        assert len(failed) == 1
        assert math.isnan(failed[0].val_accuracy)


class TestLogSerialization:
    def test_round_trip(self):
        log = small_search(
            SearchPlan(
                phases=(("fc_reg", "fc_activation"),), budget=1, winner_budget=2,
                seed=3,
            )
        )
        assert deserialize_log(serialize_log(log)) == log

    def test_round_trip_keeps_failed_candidates(self):
        config = StructureConfig()
        failed = CandidateRecord(
            phase=1, config=config, val_accuracy=float("nan"), epochs_run=2,
            wall_seconds=0.5, failed=True, note="loss became non-finite",
        )
        log = SearchLog(
            bin_label="(1000,1100]",
            plan=SearchPlan(phases=(("m", "rnn_kind"),)),
            candidates=(failed,),
            phase_winners=(PhaseWinner(1, ("m", "rnn_kind"), config, 0.4),),
            final_config=config,
            final_accuracy=0.4,
        )
        back = deserialize_log(serialize_log(log))
        assert back.candidates[0].failed
        assert math.isnan(back.candidates[0].val_accuracy)
        assert back.candidates[0].note == "loss became non-finite"

    def test_garbage_rejected(self):
        with pytest.raises(ParseError):
            deserialize_log("not json\n")
        with pytest.raises(ParseError):
            deserialize_log('{"record": "mystery"}\n')
        with pytest.raises(ParseError):
            deserialize_log("")


class TestReport:
    def make_log(self, with_failure=False):
        config = StructureConfig().replace(m=10, rnn_kind="GRU")
        candidates = [
            CandidateRecord(1, config, 0.61, 4, 1.0),
        ]
        if with_failure:
            candidates.append(
                CandidateRecord(
                    1, config.replace(m=20), float("nan"), 1, 0.2,
                    failed=True, note="diverged",
                )
            )
        return SearchLog(
            bin_label="(1200,1300]",
            plan=SearchPlan(phases=(("m", "rnn_kind"),)),
            candidates=tuple(candidates),
            phase_winners=(PhaseWinner(1, ("m", "rnn_kind"), config, 0.61),),
            final_config=config,
            final_accuracy=0.61,
        )

    def test_row_lists_accuracy_and_all_ten_values(self):
        text = report(self.make_log())
        row = text.splitlines()[2]
        for piece in ("(1200,1300]", "0.6100", "10", "GRU", "0.05", "512",
                      "ReLU", "yes", "2", "0.001", "Softmax"):
            assert piece in row
        assert text.splitlines()[0].startswith("bin")

    def test_failed_candidates_annotated(self):
        text = report(self.make_log(with_failure=True))
        assert "1 failed candidate(s)" in text
        assert "m=20" in text

    def test_render_is_stable(self):
        log = self.make_log(with_failure=True)
        assert report(log) == report(log)

    def test_multiple_logs_one_row_each(self):
        log = self.make_log()
        text = report([log, log])
        assert text.count("(1200,1300]") == 2
