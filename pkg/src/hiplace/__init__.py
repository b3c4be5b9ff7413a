"""Hierarchical multi-agent placement of application graphs onto edge/cloud resources."""

__version__ = "0.1.0"
