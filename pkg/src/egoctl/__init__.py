"""Occlusion-aware conditioning tensors and data tooling for hand-driven egocentric video."""

__version__ = "0.1.0"
