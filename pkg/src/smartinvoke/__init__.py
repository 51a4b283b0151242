"""Decide, per keystroke context, whether a code-completion model should be invoked."""

__version__ = "0.1.0"
