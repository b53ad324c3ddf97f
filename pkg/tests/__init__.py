"""Tests for debt_cycles."""
