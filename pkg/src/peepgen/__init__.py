"""Generalization of peephole-optimization instances into verified rewrite rules."""

__version__ = "0.1.0"
