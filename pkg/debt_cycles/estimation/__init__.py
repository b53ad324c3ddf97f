"""Covariate construction and model estimation."""
