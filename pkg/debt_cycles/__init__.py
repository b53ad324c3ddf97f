"""Public-debt and financial cycle dating with duration and amplitude models."""

__version__ = "0.1.0"
