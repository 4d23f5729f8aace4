"""Subcommand package initialization."""
