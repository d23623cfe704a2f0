"""Keyframe-driven prompt generation and evaluation for spatial QA over
RGB-D trajectories."""

__version__ = "0.1.0"
