"""peaky-lab: full-sum training laboratory for alignment counting and peaky-behaviour analysis."""

__version__ = "0.1.0"
