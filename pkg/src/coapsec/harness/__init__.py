"""Executable surface: transports, deterministic fixtures and demo runs."""
