"""Training-corpus construction: Elo bins, history windows, and splits.

A training sample is a pair (x, y): y is the move played at ply i and
x is the window of at most m preceding moves from both sides,
x = M[max(1, i-m) .. i-1].  Passing ``m=None`` removes the truncation
(the perfect-memory variant).  Samples are labeled with the mover's
Elo, and a bin receives exactly the plies whose mover falls inside it;
a whole-game policy (bin by the players' mean rating) is available as
a switch.

The on-disk layout written by ``save_dataset``:

    <dir>/manifest.json          seed, m, bins, policy, counts
    <dir>/vocabulary.txt         golden token manifest (copied)
    <dir>/samples/<bin>/<split>.bin   length-prefixed little-endian u16
    <dir>/records/<bin>.txt      the bin's replayable source games
"""

from __future__ import annotations

import enum
import json
import random
import struct
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .errors import InvalidConfig, ParseError
from .movespace import MoveVocabulary, enumerate_vocabulary
from .notation import GameRecord, parse_record_file, serialize_record_file


@dataclass(frozen=True)
class EloBin:
    """Half-open rating interval (lower, upper]."""

    lower: int
    upper: int

    def __post_init__(self) -> None:
        if self.lower >= self.upper:
            raise ValueError(f"empty bin ({self.lower}, {self.upper}]")

    def __contains__(self, elo: int) -> bool:
        return self.lower < elo <= self.upper

    @property
    def label(self) -> str:
        return f"({self.lower},{self.upper}]"

    def __str__(self) -> str:
        return self.label


# Standard plan: hundred-point bins covering (1000, 2000].
STANDARD_BINS: tuple[EloBin, ...] = tuple(
    EloBin(lo, lo + 100) for lo in range(1000, 2000, 100)
)
# Ablation: no rating partition at all.
FULL_RANGE = EloBin(-(2**31), 2**31)


class BinPolicy(enum.Enum):
    PER_MOVER = "per-mover"
    WHOLE_GAME = "whole-game"


@dataclass(frozen=True)
class TrainingSample:
    x: tuple[int, ...]
    y: int
    mover_elo: int
    game_id: str
    ply_index: int  # 1-based i


@dataclass(frozen=True)
class DatasetSplit:
    train: tuple[TrainingSample, ...]
    validation: tuple[TrainingSample, ...]
    test: tuple[TrainingSample, ...]
    seed: int

    def __iter__(self):
        yield "train", self.train
        yield "validation", self.validation
        yield "test", self.test


def _whole_game_elo(record: GameRecord) -> int:
    return round((record.red_elo + record.black_elo) / 2)


def partition_by_elo(
    records: Iterable[GameRecord],
    bins: Sequence[EloBin],
    policy: BinPolicy = BinPolicy.PER_MOVER,
) -> tuple[dict[EloBin, list[GameRecord]], int]:
    """Group records under the bins that will see at least one ply.

    Returns the mapping and the count of games no bin can see at all.
    Bins must not overlap; a rating on a shared boundary belongs to the
    lower bin because intervals are upper-inclusive.
    """
    for i, a in enumerate(bins):
        for b in bins[i + 1:]:
            if a.lower < b.upper and b.lower < a.upper:
                raise InvalidConfig(
                    "bins overlap", fields={"bins": f"{a.label} vs {b.label}"}
                )
    mapping: dict[EloBin, list[GameRecord]] = {b: [] for b in bins}
    dropped = 0
    for record in records:
        if policy is BinPolicy.WHOLE_GAME:
            elos = [_whole_game_elo(record)]
        else:
            elos = [record.red_elo, record.black_elo]
        seen = False
        for bin_ in bins:
            if any(elo in bin_ for elo in elos):
                mapping[bin_].append(record)
                seen = True
        if not seen:
            dropped += 1
    return mapping, dropped


def make_samples(
    record: GameRecord,
    m: Optional[int],
    bin_: EloBin,
    policy: BinPolicy = BinPolicy.PER_MOVER,
    vocabulary: Optional[MoveVocabulary] = None,
) -> list[TrainingSample]:
    """Windowed samples for the plies of ``record`` that ``bin_`` sees.

    ``m=None`` means unlimited history.  The window always contains
    both sides' moves; the bin only gates which plies become labels.
    """
    if m is not None and m < 1:
        raise InvalidConfig("memory capacity must be >= 1", fields={"m": str(m)})
    vocab = vocabulary or enumerate_vocabulary()
    indices = [vocab.encode(t) for t in record.moves]
    if policy is BinPolicy.WHOLE_GAME:
        visible = _whole_game_elo(record) in bin_
        red_ok = black_ok = visible
    else:
        red_ok = record.red_elo in bin_
        black_ok = record.black_elo in bin_

    samples = []
    for i in range(1, len(indices) + 1):
        red_moves = i % 2 == 1
        if not (red_ok if red_moves else black_ok):
            continue
        lo = 0 if m is None else max(0, i - 1 - m)
        samples.append(
            TrainingSample(
                x=tuple(indices[lo : i - 1]),
                y=indices[i - 1],
                mover_elo=record.red_elo if red_moves else record.black_elo,
                game_id=record.source_id,
                ply_index=i,
            )
        )
    return samples


def build_split(
    samples: Sequence[TrainingSample],
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int = 0,
) -> DatasetSplit:
    """Deterministic game-disjoint split, shuffled within each part."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise InvalidConfig("split ratios must sum to 1", fields={"ratios": str(ratios)})
    rng = random.Random(seed)
    game_ids = sorted({s.game_id for s in samples})
    rng.shuffle(game_ids)
    n = len(game_ids)
    cut1 = round(n * ratios[0])
    cut2 = cut1 + round(n * ratios[1])
    assignment = {}
    for pos, gid in enumerate(game_ids):
        assignment[gid] = 0 if pos < cut1 else (1 if pos < cut2 else 2)
    parts: tuple[list, list, list] = ([], [], [])
    for sample in samples:
        parts[assignment[sample.game_id]].append(sample)
    for part in parts:
        rng.shuffle(part)
    return DatasetSplit(tuple(parts[0]), tuple(parts[1]), tuple(parts[2]), seed)


@dataclass(frozen=True)
class DatasetStats:
    count: int
    mean_history_len: float
    label_histogram: Counter
    per_bin_counts: dict[str, int]


def dataset_stats(
    samples: Sequence[TrainingSample], bins: Sequence[EloBin] = ()
) -> DatasetStats:
    histogram: Counter = Counter(s.y for s in samples)
    mean_len = (
        sum(len(s.x) for s in samples) / len(samples) if samples else 0.0
    )
    per_bin = {
        b.label: sum(1 for s in samples if s.mover_elo in b) for b in bins
    }
    return DatasetStats(len(samples), mean_len, histogram, per_bin)


# ---------------------------------------------------------------------------
# On-disk format
# ---------------------------------------------------------------------------

_U16 = struct.Struct("<H")


def pack_samples(samples: Sequence[TrainingSample]) -> bytes:
    """Little-endian binary: per sample, a u16-length-prefixed history,
    then y, mover Elo, ply index, and a u16-length-prefixed game id."""
    out = bytearray()
    for s in samples:
        gid = s.game_id.encode("utf-8")
        if len(gid) > 0xFFFF or s.mover_elo < 0 or s.mover_elo > 0xFFFF:
            raise InvalidConfig(
                "sample fields exceed the u16 wire format",
                fields={"game_id": s.game_id, "mover_elo": str(s.mover_elo)},
            )
        out += _U16.pack(len(s.x))
        for idx in s.x:
            out += _U16.pack(idx)
        out += _U16.pack(s.y)
        out += _U16.pack(s.mover_elo)
        out += _U16.pack(s.ply_index)
        out += _U16.pack(len(gid))
        out += gid
    return bytes(out)


def unpack_samples(data: bytes) -> list[TrainingSample]:
    samples = []
    pos = 0

    def u16() -> int:
        nonlocal pos
        if pos + 2 > len(data):
            raise ParseError("truncated sample file", offset=pos)
        (value,) = _U16.unpack_from(data, pos)
        pos += 2
        return value

    while pos < len(data):
        n = u16()
        x = tuple(u16() for _ in range(n))
        y = u16()
        elo = u16()
        ply = u16()
        gid_len = u16()
        if pos + gid_len > len(data):
            raise ParseError("truncated game id", offset=pos)
        gid = data[pos : pos + gid_len].decode("utf-8")
        pos += gid_len
        samples.append(TrainingSample(x, y, elo, gid, ply))
    return samples


@dataclass(frozen=True)
class LoadedDataset:
    bins: tuple[EloBin, ...]
    m: Optional[int]
    seed: int
    policy: BinPolicy
    splits: dict[EloBin, DatasetSplit]
    records: dict[EloBin, tuple[GameRecord, ...]]
    vocabulary: MoveVocabulary


def save_dataset(
    path: Path,
    splits: dict[EloBin, DatasetSplit],
    records: dict[EloBin, Sequence[GameRecord]],
    m: Optional[int],
    seed: int,
    policy: BinPolicy = BinPolicy.PER_MOVER,
    vocabulary: Optional[MoveVocabulary] = None,
) -> None:
    vocab = vocabulary or enumerate_vocabulary()
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    (path / "vocabulary.txt").write_text(vocab.manifest_text())

    counts = {}
    for bin_, split in splits.items():
        bin_dir = path / "samples" / bin_.label
        bin_dir.mkdir(parents=True, exist_ok=True)
        for name, part in split:
            (bin_dir / f"{name}.bin").write_bytes(pack_samples(part))
        counts[bin_.label] = {name: len(part) for name, part in split}

    records_dir = path / "records"
    records_dir.mkdir(exist_ok=True)
    for bin_, recs in records.items():
        (records_dir / f"{bin_.label}.txt").write_text(
            serialize_record_file(list(recs))
        )

    manifest = {
        "format": 1,
        "m": m,
        "seed": seed,
        "policy": policy.value,
        "bins": [[b.lower, b.upper] for b in splits],
        "counts": counts,
    }
    (path / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def load_dataset(path: Path) -> LoadedDataset:
    path = Path(path)
    manifest = json.loads((path / "manifest.json").read_text())
    if manifest.get("format") != 1:
        raise ParseError(f"unknown dataset format: {manifest.get('format')}")
    vocab = enumerate_vocabulary()
    packaged = vocab.manifest_text()
    stored = (path / "vocabulary.txt").read_text()
    if stored != packaged:
        raise ParseError("dataset vocabulary differs from this build")

    bins = tuple(EloBin(lo, hi) for lo, hi in manifest["bins"])
    splits = {}
    records = {}
    for bin_ in bins:
        bin_dir = path / "samples" / bin_.label
        parts = {
            name: tuple(unpack_samples((bin_dir / f"{name}.bin").read_bytes()))
            for name in ("train", "validation", "test")
        }
        splits[bin_] = DatasetSplit(
            parts["train"], parts["validation"], parts["test"], manifest["seed"]
        )
        record_path = path / "records" / f"{bin_.label}.txt"
        if record_path.exists():
            parsed, _ = parse_record_file(record_path.read_bytes())
            records[bin_] = parsed.records
        else:
            records[bin_] = ()
    return LoadedDataset(
        bins=bins,
        m=manifest["m"],
        seed=manifest["seed"],
        policy=BinPolicy(manifest["policy"]),
        splits=splits,
        records=records,
        vocabulary=vocab,
    )
