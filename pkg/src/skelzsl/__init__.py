"""Zero-shot skeleton action recognition with evolving dual prototypes."""

__version__ = "0.1.0"
