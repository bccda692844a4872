"""Tests for the banda aging laboratory."""
