"""Test suite for the full-sum training laboratory."""
