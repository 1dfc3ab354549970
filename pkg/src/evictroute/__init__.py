"""Eviction risk scoring and budgeted caseworker outreach planning."""

__version__ = "0.1.0"
