"""Five-phase coordinate search over the ten structure variables.

Each phase grid-trains every combination of two variables while the
others sit at earlier winners (defaults when not yet searched), then
fixes the pair at the combination with the best validation top-1.
Candidates are seeded from their own canonical config text, so the same
configuration trains identically wherever it appears; since the
incumbent combination is always a member of the next phase's grid, the
winning accuracy can only rise from phase to phase, and the final
config's accuracy equals the last phase winner's.

The searched value sets are the structure candidates with one
exception: unlimited memory is an ablation switch, not a searched
value, so ``m`` offers only its finite candidates here.

Budgets: every candidate trains for ``budget`` epochs (the full search
at convergence budgets is desk-hostile); the winner is retrained at
``winner_budget`` and both results are logged.  ``full_budget=True``
trains every candidate at ``winner_budget`` instead.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Union

from .dataset import (
    EloBin,
    FULL_RANGE,
    TrainingSample,
    build_split,
    make_samples,
)
from .errors import DivergenceDetected, InvalidConfig, ParseError
from .model import (
    CANDIDATES,
    EMBED_DIM,
    SIMPLER_FIRST,
    StructureConfig,
    TrainingOptions,
    build,
    train,
)
from .movespace import MoveVocabulary, enumerate_vocabulary
from .notation import GameRecord

DEFAULT_PHASES: tuple[tuple[str, str], ...] = (
    ("m", "rnn_kind"),
    ("rnn_dropout", "rnn_hidden"),
    ("rnn_activation", "batch_norm"),
    ("fc_dropout", "num_fc"),
    ("fc_reg", "fc_activation"),
)

SEARCH_CANDIDATES: dict[str, tuple] = {
    field: tuple(v for v in values if not (field == "m" and v is None))
    for field, values in CANDIDATES.items()
}

_DEFAULTS = StructureConfig()


@dataclass(frozen=True)
class SearchPlan:
    """Phase layout plus budgets; the default covers all ten variables."""

    phases: tuple[tuple[str, str], ...] = DEFAULT_PHASES
    budget: int = 20
    winner_budget: int = 60
    full_budget: bool = False
    seed: int = 0

    def __post_init__(self) -> None:
        fields = [f for pair in self.phases for f in pair]
        unknown = [f for f in fields if f not in SEARCH_CANDIDATES]
        if unknown:
            raise InvalidConfig(
                "phase names a non-structure field",
                fields={f: "unknown" for f in unknown},
            )
        if len(set(fields)) != len(fields):
            raise InvalidConfig(
                "a structure variable appears in two phases",
                fields={"phases": str(self.phases)},
            )
        if not self.phases:
            raise InvalidConfig("empty phase list", fields={"phases": "()"})
        if self.budget < 1 or self.winner_budget < 1:
            raise InvalidConfig(
                "budgets must be positive",
                fields={"budget": str(self.budget),
                        "winner_budget": str(self.winner_budget)},
            )

    def candidate_counts(self) -> tuple[int, ...]:
        return tuple(
            len(SEARCH_CANDIDATES[a]) * len(SEARCH_CANDIDATES[b])
            for a, b in self.phases
        )


@dataclass(frozen=True)
class CandidateRecord:
    phase: int
    config: StructureConfig
    val_accuracy: float
    epochs_run: int
    wall_seconds: float
    failed: bool = False
    note: str = ""


@dataclass(frozen=True)
class PhaseWinner:
    phase: int
    fields: tuple[str, str]
    config: StructureConfig
    val_accuracy: float


@dataclass(frozen=True)
class SearchLog:
    bin_label: str
    plan: SearchPlan
    candidates: tuple[CandidateRecord, ...]
    phase_winners: tuple[PhaseWinner, ...]
    final_config: StructureConfig
    final_accuracy: float
    winner_retrain: Optional[CandidateRecord] = None


def _candidate_seed(plan_seed: int, config: StructureConfig) -> int:
    digest = hashlib.blake2b(
        f"{plan_seed}\n{config.canonical_text()}".encode(), digest_size=8
    ).digest()
    return int.from_bytes(digest, "little") % (2**63)


def _preference(fields: tuple[str, str], config: StructureConfig) -> tuple:
    """Sort key for ties: defaults first, then simpler structures."""
    va, vb = getattr(config, fields[0]), getattr(config, fields[1])
    defaults = (va == getattr(_DEFAULTS, fields[0])) + (
        vb == getattr(_DEFAULTS, fields[1])
    )
    return (
        -defaults,
        SIMPLER_FIRST[fields[0]].index(va),
        SIMPLER_FIRST[fields[1]].index(vb),
    )


def run_search(
    plan: SearchPlan,
    records: Sequence[GameRecord],
    *,
    bin_: EloBin = FULL_RANGE,
    ratios: tuple[float, float, float] = (0.75, 0.25, 0.0),
    options: TrainingOptions = TrainingOptions(),
    vocabulary: Optional[MoveVocabulary] = None,
    hidden: Optional[int] = None,
    embed_dim: int = EMBED_DIM,
) -> SearchLog:
    """Run the phases over one bin's records and log every candidate.

    The train/validation split is game-disjoint and depends only on the
    plan seed, so every candidate competes on the same validation games;
    when a candidate's m differs, samples are re-windowed from the same
    records.  A diverging candidate is logged as failed and cannot win.
    """
    vocab = vocabulary or enumerate_vocabulary()
    splits: dict[Optional[int], object] = {}

    def split_for(m: Optional[int]):
        if m not in splits:
            samples: list[TrainingSample] = []
            for record in records:
                samples.extend(make_samples(record, m, bin_, vocabulary=vocab))
            if not samples:
                raise InvalidConfig("bin has no samples", fields={"bin": bin_.label})
            splits[m] = build_split(samples, ratios=ratios, seed=plan.seed)
            if not splits[m].validation:
                raise InvalidConfig(
                    "search needs a validation part",
                    fields={"ratios": str(ratios)},
                )
        return splits[m]

    def train_candidate(phase: int, config: StructureConfig, budget: int) -> CandidateRecord:
        seed = _candidate_seed(plan.seed, config)
        opts = replace(options, max_epochs=budget, seed=seed)
        params = build(
            config, vocab_size=len(vocab), seed=seed,
            hidden=hidden, embed_dim=embed_dim,
        )
        started = time.perf_counter()
        try:
            result = train(params, config, split_for(config.m), opts)
        except DivergenceDetected as err:
            epochs = len(err.history.epochs) if err.history else 0
            return CandidateRecord(
                phase, config, float("nan"), epochs,
                time.perf_counter() - started, failed=True, note=str(err),
            )
        return CandidateRecord(
            phase,
            config,
            result.history.best_val_accuracy,
            len(result.history.epochs),
            time.perf_counter() - started,
        )

    budget = plan.winner_budget if plan.full_budget else plan.budget
    incumbent = StructureConfig()
    log_entries: list[CandidateRecord] = []
    winners: list[PhaseWinner] = []
    for phase_no, pair in enumerate(plan.phases, start=1):
        fa, fb = pair
        phase_entries = []
        for va in SEARCH_CANDIDATES[fa]:
            for vb in SEARCH_CANDIDATES[fb]:
                config = incumbent.replace(**{fa: va, fb: vb})
                phase_entries.append(train_candidate(phase_no, config, budget))
        log_entries.extend(phase_entries)
        viable = [c for c in phase_entries if not c.failed]
        if not viable:
            raise DivergenceDetected(f"every candidate in phase {phase_no} diverged")
        best_accuracy = max(c.val_accuracy for c in viable)
        best = min(
            (c for c in viable if c.val_accuracy == best_accuracy),
            key=lambda c: _preference(pair, c.config),
        )
        incumbent = best.config
        winners.append(PhaseWinner(phase_no, pair, incumbent, best_accuracy))

    retrain = None
    if not plan.full_budget and plan.winner_budget != plan.budget:
        retrain = train_candidate(0, incumbent, plan.winner_budget)
    return SearchLog(
        bin_label=bin_.label,
        plan=plan,
        candidates=tuple(log_entries),
        phase_winners=tuple(winners),
        final_config=incumbent,
        final_accuracy=winners[-1].val_accuracy,
        winner_retrain=retrain,
    )


_COLUMNS = (
    ("m", "m"),
    ("rnn", "rnn_kind"),
    ("r-drop", "rnn_dropout"),
    ("hidden", "rnn_hidden"),
    ("r-act", "rnn_activation"),
    ("bn", "batch_norm"),
    ("drop", "fc_dropout"),
    ("fc", "num_fc"),
    ("reg", "fc_reg"),
    ("fc-act", "fc_activation"),
)


def report(logs: Union[SearchLog, Sequence[SearchLog]]) -> str:
    """One row per searched bin: accuracy plus all ten winning values.

    Deterministic: identical logs render identical text; wall times are
    deliberately absent.
    """
    if isinstance(logs, SearchLog):
        logs = (logs,)
    headers = ["bin", "acc"] + [name for name, _ in _COLUMNS]
    rows = [headers]
    notes = []
    for log in logs:
        config = log.final_config
        row = [log.bin_label, f"{log.final_accuracy:.4f}"]
        for _, field in _COLUMNS:
            value = getattr(config, field)
            if field == "batch_norm":
                value = "yes" if value else "no"
            elif field == "m" and value is None:
                value = "inf"
            elif isinstance(value, float):
                value = f"{value:g}"
            row.append(str(value))
        rows.append(row)
        failed = [c for c in log.candidates if c.failed]
        if failed:
            notes.append(
                f"{log.bin_label}: {len(failed)} failed candidate(s) excluded: "
                + "; ".join(
                    f"phase {c.phase} {_pair_text(log, c)}" for c in failed
                )
            )
    widths = [max(len(row[i]) for row in rows) for i in range(len(headers))]
    lines = [
        "  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip()
        for row in rows
    ]
    lines[1:1] = ["  ".join("-" * w for w in widths)]
    return "\n".join(lines + notes) + "\n"


def _pair_text(log: SearchLog, candidate: CandidateRecord) -> str:
    pair = log.plan.phases[candidate.phase - 1]
    values = []
    for field in pair:
        value = getattr(candidate.config, field)
        if field == "batch_norm":
            value = "yes" if value else "no"
        values.append(f"{field}={value}")
    return ",".join(values)


# --- line-delimited serialization -----------------------------------------


def _accuracy_out(value: float) -> Optional[float]:
    return None if math.isnan(value) else value


def _accuracy_in(value: Optional[float]) -> float:
    return float("nan") if value is None else float(value)


def _candidate_out(record: CandidateRecord, kind: str) -> dict:
    return {
        "record": kind,
        "phase": record.phase,
        "config": record.config.canonical_text(),
        "val_accuracy": _accuracy_out(record.val_accuracy),
        "epochs": record.epochs_run,
        "wall_seconds": record.wall_seconds,
        "failed": record.failed,
        "note": record.note,
    }


def _candidate_in(payload: dict) -> CandidateRecord:
    return CandidateRecord(
        phase=payload["phase"],
        config=StructureConfig.from_text(payload["config"]),
        val_accuracy=_accuracy_in(payload["val_accuracy"]),
        epochs_run=payload["epochs"],
        wall_seconds=payload["wall_seconds"],
        failed=payload["failed"],
        note=payload["note"],
    )


def serialize_log(log: SearchLog) -> str:
    """The log as line-delimited JSON records, one event per line."""
    lines = [
        json.dumps(
            {
                "record": "plan",
                "bin": log.bin_label,
                "phases": [list(pair) for pair in log.plan.phases],
                "budget": log.plan.budget,
                "winner_budget": log.plan.winner_budget,
                "full_budget": log.plan.full_budget,
                "seed": log.plan.seed,
            }
        )
    ]
    for candidate in log.candidates:
        lines.append(json.dumps(_candidate_out(candidate, "candidate")))
    for winner in log.phase_winners:
        lines.append(
            json.dumps(
                {
                    "record": "phase_winner",
                    "phase": winner.phase,
                    "fields": list(winner.fields),
                    "config": winner.config.canonical_text(),
                    "val_accuracy": _accuracy_out(winner.val_accuracy),
                }
            )
        )
    if log.winner_retrain is not None:
        lines.append(json.dumps(_candidate_out(log.winner_retrain, "winner_retrain")))
    lines.append(
        json.dumps(
            {
                "record": "final",
                "config": log.final_config.canonical_text(),
                "val_accuracy": _accuracy_out(log.final_accuracy),
            }
        )
    )
    return "\n".join(lines) + "\n"


def deserialize_log(text: str) -> SearchLog:
    plan = None
    bin_label = ""
    candidates: list[CandidateRecord] = []
    winners: list[PhaseWinner] = []
    final_config = None
    final_accuracy = float("nan")
    retrain = None
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            payload = json.loads(line)
        except json.JSONDecodeError as err:
            raise ParseError(f"line {line_no}: {err}") from None
        kind = payload.get("record")
        if kind == "plan":
            bin_label = payload["bin"]
            plan = SearchPlan(
                phases=tuple(tuple(pair) for pair in payload["phases"]),
                budget=payload["budget"],
                winner_budget=payload["winner_budget"],
                full_budget=payload["full_budget"],
                seed=payload["seed"],
            )
        elif kind == "candidate":
            candidates.append(_candidate_in(payload))
        elif kind == "winner_retrain":
            retrain = _candidate_in(payload)
        elif kind == "phase_winner":
            winners.append(
                PhaseWinner(
                    phase=payload["phase"],
                    fields=tuple(payload["fields"]),
                    config=StructureConfig.from_text(payload["config"]),
                    val_accuracy=_accuracy_in(payload["val_accuracy"]),
                )
            )
        elif kind == "final":
            final_config = StructureConfig.from_text(payload["config"])
            final_accuracy = _accuracy_in(payload["val_accuracy"])
        else:
            raise ParseError(f"line {line_no}: unknown record kind {kind!r}")
    if plan is None or final_config is None:
        raise ParseError("log is missing its plan or final record")
    return SearchLog(
        bin_label=bin_label,
        plan=plan,
        candidates=tuple(candidates),
        phase_winners=tuple(winners),
        final_config=final_config,
        final_accuracy=final_accuracy,
        winner_retrain=retrain,
    )
