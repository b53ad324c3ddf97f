"""Turning-point dating, phase statistics and cycle association."""
