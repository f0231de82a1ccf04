"""Heterogeneous network simulator with hierarchical digital twins for orchestration."""

__version__ = "0.1.0"
