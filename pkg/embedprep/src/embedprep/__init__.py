"""Offline preparation of semantic banks from authored text descriptions."""

from .ingest import ingest, load_descriptions

__all__ = ["ingest", "load_descriptions"]
