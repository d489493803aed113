"""Shared runtime helpers for dynlab (environment defaults, worker pool)."""
