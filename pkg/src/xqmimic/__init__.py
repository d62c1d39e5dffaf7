"""Imitating human Xiangqi players at a chosen strength range.

The package covers the full pipeline: game-record parsing, Elo-binned
dataset construction, a structurally variable recurrent move-prediction
model trained from scratch, coordinate search over the structure
variables, accuracy evaluation, and a live-play HTTP service.
"""

__version__ = "0.1.0"
