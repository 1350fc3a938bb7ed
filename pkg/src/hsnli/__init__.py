"""Entailment-based multilingual hate speech classification."""

__version__ = "0.1.0"
