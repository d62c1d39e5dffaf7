"""Checkpoint registry backing the service.

Models live in one directory as ``<id>.xqm`` checkpoint files.  An
optional ``<id>.json`` sidecar carries what the checkpoint itself does
not know: the Elo range the training bin covered and the validation
accuracy the model reached.  A file that fails to load stays visible in
the listing, flagged unloadable with the reason, so a misconfigured
deployment is diagnosable from the /models response alone.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from ..errors import UnknownModel, XqError
from ..model import ModelParameters, StructureConfig, load
from ..movespace import MoveVocabulary, enumerate_vocabulary

CHECKPOINT_SUFFIX = ".xqm"


@dataclass(frozen=True)
class ModelDescriptor:
    id: str
    loadable: bool
    config_summary: str = ""
    elo_lower: Optional[int] = None
    elo_upper: Optional[int] = None
    val_accuracy: Optional[float] = None
    error: str = ""

    def as_dict(self) -> dict:
        return {
            "id": self.id,
            "loadable": self.loadable,
            "config": self.config_summary,
            "elo_lower": self.elo_lower,
            "elo_upper": self.elo_upper,
            "val_accuracy": self.val_accuracy,
            "error": self.error,
        }


def _read_sidecar(path: Path) -> tuple[dict, str]:
    if not path.exists():
        return {}, ""
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
        if not isinstance(data, dict):
            raise ValueError("metadata must be a JSON object")
        return data, ""
    except (ValueError, OSError) as exc:
        return {}, f"metadata unreadable: {exc}"


class ModelStore:
    """Immutable view of one directory of checkpoints, loaded eagerly."""

    def __init__(self, directory, vocabulary: Optional[MoveVocabulary] = None):
        self.directory = Path(directory)
        self.vocabulary = vocabulary if vocabulary is not None else enumerate_vocabulary()
        self._loaded: dict[str, tuple[ModelParameters, StructureConfig]] = {}
        self._descriptors: list[ModelDescriptor] = []
        self._scan()

    def _scan(self) -> None:
        for path in sorted(self.directory.glob(f"*{CHECKPOINT_SUFFIX}")):
            model_id = path.stem
            meta, meta_error = _read_sidecar(path.with_suffix(".json"))
            try:
                params, config = load(path.read_bytes(), self.vocabulary)
            except (XqError, OSError) as exc:
                self._descriptors.append(
                    ModelDescriptor(id=model_id, loadable=False, error=str(exc))
                )
                continue
            self._loaded[model_id] = (params, config)
            summary = config.canonical_text().strip().replace("\n", " ")
            self._descriptors.append(
                ModelDescriptor(
                    id=model_id,
                    loadable=True,
                    config_summary=summary,
                    elo_lower=meta.get("elo_lower"),
                    elo_upper=meta.get("elo_upper"),
                    val_accuracy=meta.get("val_accuracy"),
                    error=meta_error,
                )
            )

    def descriptors(self) -> list[ModelDescriptor]:
        return list(self._descriptors)

    def get(self, model_id: str) -> tuple[ModelParameters, StructureConfig]:
        try:
            return self._loaded[model_id]
        except KeyError:
            raise UnknownModel(f"no loadable model named {model_id!r}") from None
