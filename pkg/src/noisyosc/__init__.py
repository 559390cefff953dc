"""Transition probabilities of a quantum oscillator driven by parametric and additive white noise."""

from __future__ import annotations

__version__ = "0.1.0"
