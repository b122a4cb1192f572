"""Word-level prosody representation learning and context-driven prosody prediction."""

__version__ = "0.1.0"
