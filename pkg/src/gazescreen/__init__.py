"""Gaze-based ADHD screening: events, features, sequence model, evaluation."""

__version__ = "0.1.0"
