"""Request bodies.  Responses are plain dicts built by the stores."""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict


class SessionCreate(BaseModel):
    model_config = ConfigDict(protected_namespaces=())

    model_id: str
    human_side: Literal["Red", "Black"] = "Red"
    policy: Literal["argmax", "sample"] = "argmax"
    seed: Optional[int] = None


class MoveRequest(BaseModel):
    move: str
    include_distribution: bool = False


class AnalyzeRequest(BaseModel):
    model_config = ConfigDict(protected_namespaces=())

    model_id: str
    history: list[str] = []
    actual: Optional[str] = None
    ks: Optional[list[int]] = None
    ps: Optional[list[float]] = None
