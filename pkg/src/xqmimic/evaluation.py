"""Accuracy measurement: strict top-1, relaxed top-k / top-p, cross-bin.

The relaxed metrics share one ranking rule: indices sorted by falling
probability, ties broken toward the lower vocabulary index.  Top-k cuts
that ranking at k; top-p cuts it at the shortest prefix whose
cumulative probability strictly exceeds p, falling back to the whole
vocabulary when nothing does (p = 1).  Every cut is deterministic, so
two runs over permuted samples produce bit-identical reports: all
aggregation is integer counting.

Filtered evaluation replays each source game move by move to rebuild
the position a sample was drawn from, because the truncated window in
the sample cannot reproduce the board.  Callers therefore hand over the
GameRecords next to the samples.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from . import rules
from .dataset import (
    EloBin,
    FULL_RANGE,
    TrainingSample,
    build_split,
    make_samples,
    partition_by_elo,
)
from .errors import InvalidConfig, NoLegalMove
from .model import (
    EMBED_DIM,
    ModelParameters,
    PredictionDistribution,
    StructureConfig,
    TrainingOptions,
    TrainingResult,
    apply_filter,
    build,
    forward_batch,
    train,
)
from .movespace import MoveVocabulary, enumerate_vocabulary, locally_legal_mask, resolve
from .notation import GameRecord

ABLATION_MODES = ("baseline", "no_partition", "perfect_memory", "no_filter")


def _probs_of(dist: Union[PredictionDistribution, np.ndarray]) -> np.ndarray:
    probs = dist.probs if isinstance(dist, PredictionDistribution) else dist
    return np.asarray(probs, dtype=np.float64)


def ranked_indices(dist: Union[PredictionDistribution, np.ndarray]) -> np.ndarray:
    """All vocabulary indices, best first, ties toward the lower index."""
    # stable sort on negated values keeps equal entries in index order
    return np.argsort(-_probs_of(dist), kind="stable")


def top_k_correct(
    dist: Union[PredictionDistribution, np.ndarray], y: int, k: int
) -> bool:
    probs = _probs_of(dist)
    if not 1 <= k <= probs.size:
        raise InvalidConfig("k outside 1..|V|", fields={"k": str(k)})
    order = np.argsort(-probs, kind="stable")
    rank = int(np.nonzero(order == y)[0][0])
    return rank < k


def top_p_correct(
    dist: Union[PredictionDistribution, np.ndarray], y: int, p: float
) -> bool:
    probs = _probs_of(dist)
    if not 0.0 <= p <= 1.0:
        raise InvalidConfig("p outside [0,1]", fields={"p": str(p)})
    order = np.argsort(-probs, kind="stable")
    rank = int(np.nonzero(order == y)[0][0])
    return rank < _prefix_size(probs[order], p)


def _prefix_size(sorted_probs: np.ndarray, p: float) -> int:
    """Length of the shortest prefix with cumulative probability > p."""
    cumulative = np.cumsum(sorted_probs)
    cut = int(np.searchsorted(cumulative, p, side="right"))
    # p at or above the total mass (the p=1 row): the whole vocabulary
    return cut + 1 if cut < cumulative.size else cumulative.size


@dataclass(frozen=True)
class EvalReport:
    """One evaluation pass, frozen; curves keep the requested cut order."""

    label: str
    sample_count: int
    filtered: bool
    top1: float
    top_k: tuple[tuple[int, float], ...]
    top_p: tuple[tuple[float, float], ...]
    anomalies: int = 0

    def table_text(self) -> str:
        lines = [
            f"label: {self.label or '-'}",
            f"samples: {self.sample_count}   filter: "
            f"{'on' if self.filtered else 'off'}   anomalies: {self.anomalies}",
            f"top-1 accuracy: {self.top1:.4f}",
        ]
        if self.top_k:
            lines.append("  k      accuracy")
            lines.extend(f"  {k:<6d} {acc:.4f}" for k, acc in self.top_k)
        if self.top_p:
            lines.append("  p      accuracy")
            lines.extend(f"  {p:<6.2f} {acc:.4f}" for p, acc in self.top_p)
        return "\n".join(lines) + "\n"


def _replay_masks(
    samples: Sequence[TrainingSample],
    records: Mapping[str, GameRecord],
    vocabulary: MoveVocabulary,
) -> list[np.ndarray]:
    """Legal-move masks per sample, each game replayed once."""
    needed: dict[str, list[int]] = {}
    for pos, sample in enumerate(samples):
        needed.setdefault(sample.game_id, []).append(pos)
    masks: list[Optional[np.ndarray]] = [None] * len(samples)
    for game_id, positions in needed.items():
        if game_id not in records:
            raise InvalidConfig(
                "sample references a game outside the supplied records",
                fields={"game_id": game_id},
            )
        record = records[game_id]
        positions.sort(key=lambda pos: samples[pos].ply_index)
        state = rules.initial_state()
        ply = 1  # the move `state` is waiting for
        for pos in positions:
            target = samples[pos].ply_index
            while ply < target:
                state = rules.apply_move(state, resolve(record.moves[ply - 1], state))
                ply += 1
            masks[pos] = locally_legal_mask(state, vocabulary)
    return masks  # type: ignore[return-value]


def evaluate(
    params: ModelParameters,
    config: StructureConfig,
    samples: Sequence[TrainingSample],
    *,
    ks: Sequence[int] = (1, 2, 3, 5, 10),
    ps: Sequence[float] = (0.0, 0.1, 0.3, 0.5, 0.9, 1.0),
    use_filter: bool = True,
    records: Union[Mapping[str, GameRecord], Iterable[GameRecord], None] = None,
    vocabulary: Optional[MoveVocabulary] = None,
    label: str = "",
    batch_size: int = 512,
) -> EvalReport:
    """Single-pass metrics over windowed samples.

    With the filter on, every sample's position is rebuilt by replaying
    its source game, so ``records`` must cover every ``game_id``.  A
    position with no legal move is counted as an anomaly and scored as
    a miss on every metric rather than aborting the run.
    """
    if not samples:
        raise InvalidConfig("no samples to evaluate", fields={"samples": "0"})
    if config.m is not None:
        widest = max(len(s.x) for s in samples)
        if widest > config.m:
            raise InvalidConfig(
                "samples were windowed with a larger m than the model's",
                fields={"window": str(widest), "m": str(config.m)},
            )
    vocab = vocabulary or enumerate_vocabulary()
    masks: Optional[list[np.ndarray]] = None
    if use_filter:
        if records is None:
            raise InvalidConfig(
                "filtered evaluation needs the source games",
                fields={"records": "missing"},
            )
        if not isinstance(records, Mapping):
            records = {r.source_id: r for r in records}
        masks = _replay_masks(samples, records, vocab)

    k_hits = {int(k): 0 for k in ks}
    p_hits = {float(p): 0 for p in ps}
    top1_hits = 0
    anomalies = 0
    for start in range(0, len(samples), batch_size):
        batch = samples[start : start + batch_size]
        probs = forward_batch(params, config, [s.x for s in batch], mode="infer")
        for offset, sample in enumerate(batch):
            row = probs[offset]
            if masks is not None:
                try:
                    row = apply_filter(
                        PredictionDistribution(row), masks[start + offset]
                    ).probs
                except NoLegalMove:
                    anomalies += 1
                    continue
            order = np.argsort(-row, kind="stable")
            rank = int(np.nonzero(order == sample.y)[0][0])
            if rank == 0:
                top1_hits += 1
            for k in k_hits:
                if rank < k:
                    k_hits[k] += 1
            if p_hits:
                prefix_by_p = {p: _prefix_size(row[order], p) for p in p_hits}
                for p, size in prefix_by_p.items():
                    if rank < size:
                        p_hits[p] += 1
    n = len(samples)
    return EvalReport(
        label=label,
        sample_count=n,
        filtered=use_filter,
        top1=top1_hits / n,
        top_k=tuple((k, k_hits[int(k)] / n) for k in ks),
        top_p=tuple((p, p_hits[float(p)] / n) for p in ps),
        anomalies=anomalies,
    )


def cross_elo_matrix(
    models: Mapping[object, tuple[ModelParameters, StructureConfig]],
    datasets: Mapping[object, Sequence[TrainingSample]],
    *,
    records: Union[Mapping[str, GameRecord], Iterable[GameRecord], None] = None,
    use_filter: bool = True,
    vocabulary: Optional[MoveVocabulary] = None,
) -> tuple[tuple, np.ndarray]:
    """Top-1 of every model on every bin; entry (i, j) = model i on data j.

    ``models`` and ``datasets`` must share keys; the returned label
    order follows ``models``.
    """
    if set(models) != set(datasets):
        raise InvalidConfig(
            "model and dataset bins differ",
            fields={"models": str(sorted(map(str, models))),
                    "datasets": str(sorted(map(str, datasets)))},
        )
    if records is not None and not isinstance(records, Mapping):
        records = {r.source_id: r for r in records}
    labels = tuple(models)
    values = np.zeros((len(labels), len(labels)))
    for i, mi in enumerate(labels):
        params, config = models[mi]
        for j, dj in enumerate(labels):
            report = evaluate(
                params,
                config,
                datasets[dj],
                ks=(1,),
                ps=(),
                use_filter=use_filter,
                records=records,
                vocabulary=vocabulary,
                label=f"{mi} on {dj}",
            )
            values[i, j] = report.top1
    return labels, values


def matrix_csv(labels: Sequence[object], values: np.ndarray) -> str:
    """Accuracy matrix as CSV, one row per model, for plotting.

    Labels are quoted when they need it; rating-bin labels contain
    commas, and an unquoted cell would shear the columns apart.
    """
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["model", *map(str, labels)])
    for i, label in enumerate(labels):
        writer.writerow([str(label), *(f"{v:.6f}" for v in values[i])])
    return out.getvalue()


@dataclass(frozen=True)
class PipelineRun:
    """A trained model plus its calibration report."""

    report: EvalReport
    params: ModelParameters
    config: StructureConfig
    training: TrainingResult


def _fit_bin(
    bin_: EloBin,
    bin_records: Sequence[GameRecord],
    config: StructureConfig,
    options: TrainingOptions,
    *,
    window_m: Optional[int],
    use_filter: bool,
    ks: Sequence[int],
    ps: Sequence[float],
    vocabulary: MoveVocabulary,
    label: str,
    hidden: Optional[int],
    embed_dim: int,
) -> PipelineRun:
    samples: list[TrainingSample] = []
    for record in bin_records:
        samples.extend(
            make_samples(record, window_m, bin_, vocabulary=vocabulary)
        )
    if not samples:
        raise InvalidConfig("bin has no samples", fields={"bin": bin_.label})
    split = build_split(samples, ratios=(1.0, 0.0, 0.0), seed=options.seed)
    params = build(
        config,
        vocab_size=len(vocabulary),
        seed=options.seed,
        hidden=hidden,
        embed_dim=embed_dim,
    )
    result = train(params, config, split, options)
    report = evaluate(
        result.params,
        config,
        split.train,
        ks=ks,
        ps=ps,
        use_filter=use_filter,
        records={r.source_id: r for r in bin_records},
        vocabulary=vocabulary,
        label=label,
    )
    return PipelineRun(report, result.params, config, result)


def ablation_run(
    mode: str,
    records: Sequence[GameRecord],
    config: StructureConfig,
    options: TrainingOptions,
    *,
    bins: Sequence[EloBin] = (FULL_RANGE,),
    ks: Sequence[int] = (1,),
    ps: Sequence[float] = (),
    vocabulary: Optional[MoveVocabulary] = None,
    hidden: Optional[int] = None,
    embed_dim: int = EMBED_DIM,
) -> tuple[PipelineRun, ...]:
    """The calibration pipeline with one design component switched off.

    Modes: ``baseline`` (nothing disabled), ``no_partition`` (the bins
    collapse to one all-ratings bin), ``perfect_memory`` (windows keep
    the whole history), ``no_filter`` (evaluation skips the legal-move
    filter).  One model is fitted per populated bin, then measured on
    its own training samples: these runs calibrate attainable fit on
    corpora whose ceiling is known, so a held-out split would measure
    the wrong thing.  ``hidden`` and ``embed_dim`` shrink the model the
    same way :func:`build` allows, so experiments stay desk-sized.
    """
    if mode not in ABLATION_MODES:
        raise InvalidConfig("unknown ablation mode", fields={"mode": mode})
    vocab = vocabulary or enumerate_vocabulary()
    window_m = config.m
    use_filter = True
    if mode == "no_partition":
        bins = (FULL_RANGE,)
    elif mode == "perfect_memory":
        window_m = None
        config = config.replace(m=None)
    elif mode == "no_filter":
        use_filter = False
    grouped, _ = partition_by_elo(records, tuple(bins))
    runs = []
    for bin_ in bins:
        if not grouped[bin_]:
            continue
        runs.append(
            _fit_bin(
                bin_,
                grouped[bin_],
                config,
                options,
                window_m=window_m,
                use_filter=use_filter,
                ks=ks,
                ps=ps,
                vocabulary=vocab,
                label=f"{mode} {bin_.label}",
                hidden=hidden,
                embed_dim=embed_dim,
            )
        )
    if not runs:
        raise InvalidConfig("no bin has any samples", fields={"bins": str(len(bins))})
    return tuple(runs)
