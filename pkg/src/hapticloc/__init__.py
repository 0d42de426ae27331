"""Haptic localization of a quadruped from foot contacts against a prior map."""

__version__ = "0.1.0"
