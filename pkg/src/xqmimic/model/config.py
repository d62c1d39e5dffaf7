"""Structural configuration of the move-prediction network.

Ten structure variables jointly determine the architecture.  Each is
restricted to a small candidate set; the grid search in `search` walks
those sets, so validation rejects anything outside them rather than
silently training an off-menu network.  The lone exception is `m=None`
("infinite memory"), kept as an explicit ablation switch.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Optional

from ..errors import InvalidConfig

RNN_KINDS = ("LSTM", "GRU", "BackwardLSTM", "BackwardGRU")
ACTIVATIONS = ("ReLU", "Softmax", "Linear", "Tanh")

# Candidate sets, in declared field order.  None in the m set is the
# no-truncation ablation, not a searchable value.
CANDIDATES: dict[str, tuple] = {
    "m": (5, 10, 15, 20, None),
    "rnn_kind": RNN_KINDS,
    "rnn_dropout": (0.0, 0.05, 0.1, 0.2),
    "rnn_hidden": (512, 1024, 2048),
    "rnn_activation": ACTIVATIONS,
    "batch_norm": (True, False),
    "fc_dropout": (0.0, 0.05, 0.1, 0.2),
    "num_fc": (0, 1, 2, 3, 5),
    "fc_reg": (0.0, 0.001, 0.002, 0.005),
    "fc_activation": ACTIVATIONS,
}

# Tie-break order for the search: earlier value = simpler structure.
SIMPLER_FIRST: dict[str, tuple] = {
    "m": (5, 10, 15, 20, None),
    "rnn_kind": ("GRU", "LSTM", "BackwardGRU", "BackwardLSTM"),
    "rnn_dropout": (0.0, 0.05, 0.1, 0.2),
    "rnn_hidden": (512, 1024, 2048),
    "rnn_activation": ("Linear", "ReLU", "Tanh", "Softmax"),
    "batch_norm": (False, True),
    "fc_dropout": (0.0, 0.05, 0.1, 0.2),
    "num_fc": (0, 1, 2, 3, 5),
    "fc_reg": (0.0, 0.001, 0.002, 0.005),
    "fc_activation": ("Linear", "ReLU", "Tanh", "Softmax"),
}


@dataclass(frozen=True)
class StructureConfig:
    """One point in the structure space.  Defaults are the search origin."""

    m: Optional[int] = 5
    rnn_kind: str = "LSTM"
    rnn_dropout: float = 0.05
    rnn_hidden: int = 512
    rnn_activation: str = "ReLU"
    batch_norm: bool = True
    fc_dropout: float = 0.05
    num_fc: int = 2
    fc_reg: float = 0.001
    fc_activation: str = "Softmax"

    def __post_init__(self) -> None:
        bad = {
            name: getattr(self, name)
            for name, allowed in CANDIDATES.items()
            if getattr(self, name) not in allowed
        }
        if bad:
            raise InvalidConfig("values outside candidate sets", bad)

    def replace(self, **changes) -> "StructureConfig":
        return dataclasses.replace(self, **changes)

    @property
    def backward(self) -> bool:
        return self.rnn_kind.startswith("Backward")

    @property
    def cell_kind(self) -> str:
        """LSTM or GRU, with the consumption order stripped off."""
        return self.rnn_kind.removeprefix("Backward")

    def canonical_text(self) -> str:
        """Stable key=value rendering; equal configs render identically."""
        lines = []
        for field in CANDIDATES:
            lines.append(f"{field}={_format_value(getattr(self, field))}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "StructureConfig":
        values: dict[str, object] = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            key = key.strip()
            if not sep or key not in CANDIDATES:
                raise InvalidConfig(f"line {lineno}: not a structure field", {key: raw})
            values[key] = _parse_value(key, value.strip())
        return cls(**values)


def _format_value(value) -> str:
    if value is None:
        return "inf"
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, float):
        return f"{value:g}"
    return str(value)


def _parse_value(field: str, text: str):
    if field == "m":
        return None if text in ("inf", "none") else _int(field, text)
    if field == "batch_norm":
        if text in ("yes", "true", "1"):
            return True
        if text in ("no", "false", "0"):
            return False
        raise InvalidConfig("expected yes or no", {field: text})
    if field in ("rnn_hidden", "num_fc"):
        return _int(field, text)
    if field in ("rnn_dropout", "fc_dropout", "fc_reg"):
        try:
            return float(text)
        except ValueError:
            raise InvalidConfig("expected a number", {field: text}) from None
    return text  # rnn_kind / activations; validated by the constructor


def _int(field: str, text: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise InvalidConfig("expected an integer", {field: text}) from None
