"""Live-play HTTP service: model registry, sessions, analysis."""

from .app import create_app
from .moves import analyze, replay_texts
from .sessions import Session, SessionStore
from .store import ModelDescriptor, ModelStore

__all__ = [
    "ModelDescriptor",
    "ModelStore",
    "Session",
    "SessionStore",
    "analyze",
    "create_app",
    "replay_texts",
]
