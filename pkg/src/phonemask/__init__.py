"""Reverberation suppression with class-conditioned ratio masks for CI-style processing."""

__version__ = "0.1.0"
