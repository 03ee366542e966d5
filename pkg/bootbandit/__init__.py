"""Bootbandit: bootstrap linear bandits on hierarchical response surfaces."""

__version__ = "0.1.0"
