"""Certified decoy-state BB84 key-rate bounds under non-uniform phase randomization."""

__version__ = "0.1.0"
