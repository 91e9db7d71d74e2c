"""Selective-DoS circuit probing: closed-form error model and Monte-Carlo simulator."""

__version__ = "0.1.0"
